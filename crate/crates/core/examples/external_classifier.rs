//! Plugs a classifier running in another process into an experiment.
//!
//! Any program that speaks the line-delimited JSON protocol works. By default
//! this example launches the `al` binary's built-in worker, so build it first:
//!
//! ```text
//! cargo build --bin al
//! cargo run --example external_classifier [-- command args...]
//! ```

use std::sync::Arc;

use al_core::classifier::ExternalClassifier;
use al_core::corpus::LabelSchema;
use al_core::oracle::SimulatedOracle;
use al_core::runner::{run_experiment, ClassifierConfig, DatasetConfig, ExperimentConfig};
use al_core::synthetic::{class_names, generate, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let mut command: Vec<String> = std::env::args().skip(1).collect();
    if command.is_empty() {
        // target/<profile>/examples/this → target/<profile>/al
        let exe = std::env::current_exe().expect("own path");
        let al = exe.parent().and_then(|p| p.parent()).expect("target dir").join("al");
        command = vec![al.display().to_string(), "worker".into()];
    }

    let train = Arc::new(generate(&SyntheticConfig {
        num_instances: 400,
        seed: 30,
        ..Default::default()
    })?);
    let test = Arc::new(generate(&SyntheticConfig {
        num_instances: 200,
        seed: 31,
        ..Default::default()
    })?);
    let mut cfg = ExperimentConfig::new(DatasetConfig::new(
        "synthetic",
        "in-memory",
        LabelSchema::new(class_names(4))?,
    ));
    cfg.classifier = ClassifierConfig::External {
        command: command.clone(),
    };
    cfg.protocol.num_iterations = 3;

    let classifier = ExternalClassifier::spawn(&command)?;
    let mut oracle = SimulatedOracle::new(Arc::clone(&train));
    let result = run_experiment(&cfg, train, test, Box::new(classifier), &mut oracle)?;
    for r in &result.records {
        println!(
            "{} labels → accuracy {:.3}",
            r.num_labeled,
            r.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
