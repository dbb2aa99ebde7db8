//! Runs every strategy over three seeds and prints the markdown report.

use std::sync::Arc;

use al_core::corpus::LabelSchema;
use al_core::metrics::{render_report, ReportFormat};
use al_core::runner::{run_suite, DatasetConfig, ExperimentConfig};
use al_core::strategies::Strategy;
use al_core::synthetic::{class_names, generate, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let train = Arc::new(generate(&SyntheticConfig {
        num_instances: 1200,
        seed: 20,
        ..Default::default()
    })?);
    let test = Arc::new(generate(&SyntheticConfig {
        num_instances: 400,
        seed: 21,
        ..Default::default()
    })?);
    let mut cfg = ExperimentConfig::new(DatasetConfig::new(
        "synthetic",
        "in-memory",
        LabelSchema::new(class_names(4))?,
    ));
    cfg.protocol.num_iterations = 8;

    let results = run_suite(&cfg, &Strategy::ALL, &[0, 1, 2], train, test)?;
    let report = render_report(&results, ReportFormat::Markdown)?;
    print!("{}", report.get("report.md").unwrap_or_default());
    Ok(())
}
