//! Trains the built-in softmax regression on a synthetic corpus and reports
//! held-out accuracy plus the early-stopping telemetry.

use al_core::classifier::{evaluate, Example, Model, SoftmaxRegression, TrainConfig};
use al_core::synthetic::{generate, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let train = generate(&SyntheticConfig {
        num_instances: 600,
        seed: 3,
        ..Default::default()
    })?;
    let test = generate(&SyntheticConfig {
        num_instances: 300,
        seed: 4,
        ..Default::default()
    })?;
    let examples: Vec<Example<'_>> = train
        .instances()
        .iter()
        .map(|i| Example {
            text: &i.text,
            label: i.gold_label.expect("synthetic data is labeled"),
        })
        .collect();

    let trainer = SoftmaxRegression::new(TrainConfig::default());
    let model = trainer.fit_model(&examples, train.schema())?;
    let t = model.telemetry();
    println!(
        "stopped after {} epochs ({:?}); best epoch {} with val loss {:.4}, val acc {:.3}",
        t.epochs_run, t.stop_reason, t.best_epoch, t.val_loss, t.val_accuracy
    );
    let eval = evaluate(&model, &test)?;
    println!(
        "test accuracy {:.3}, mean log loss {:.4}",
        eval.accuracy, eval.mean_loss
    );
    Ok(())
}
