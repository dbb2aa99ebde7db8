//! One active-learning run with gold-label simulation, printed as a learning
//! curve.

use std::sync::Arc;

use al_core::corpus::LabelSchema;
use al_core::runner::{run_simulated, DatasetConfig, ExperimentConfig};
use al_core::strategies::Strategy;
use al_core::synthetic::{class_names, generate, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let train = generate(&SyntheticConfig {
        num_instances: 2000,
        seed: 10,
        ..Default::default()
    })?;
    let test = generate(&SyntheticConfig {
        num_instances: 500,
        seed: 11,
        ..Default::default()
    })?;

    let schema = LabelSchema::new(class_names(4))?;
    let mut cfg = ExperimentConfig::new(DatasetConfig::new("synthetic", "in-memory", schema));
    cfg.strategy.name = Strategy::Bt;

    let result = run_simulated(&cfg, Arc::new(train), Arc::new(test))?;
    println!("run {}", result.run_id);
    for r in &result.records {
        println!(
            "iter {:>2}  labeled {:>3}  acc {:.3}  query {:.4}s",
            r.iteration,
            r.num_labeled,
            r.test_accuracy.unwrap_or(f64::NAN),
            r.query_seconds
        );
    }
    println!("AUC {:.4}", result.auc.unwrap_or(f64::NAN));
    Ok(())
}
