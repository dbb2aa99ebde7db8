//! The `al` command line.
//!
//! ```text
//! al run --config FILE [--strategy S] [--seed N] [--out DIR]
//! al report --manifest FILE --format {csv,markdown} [--out DIR]
//! al serve --addr HOST:PORT --store DIR
//! ```

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::classifier::{
    Example, ExternalRequest, ExternalResponse, Model, SoftmaxModel, SoftmaxRegression, TrainConfig,
};
use crate::corpus::LabelSchema;
use crate::error::{Error, Result};
use crate::metrics::{render_report, ReportFormat};
use crate::runner::{run_suite, ExperimentConfig, RunManifest, MANIFEST_FILE};
use crate::strategies::Strategy;

#[derive(Debug, Parser)]
#[command(name = "al", version, about = "Pool-based active learning for text classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated experiments from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this strategy (overrides the file).
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Run only this seed (overrides the file).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Aggregate the runs listed in a manifest into report tables.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Defaults to `report/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the labeling API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        store: PathBuf,
    },
    /// Speak the external-classifier protocol on stdin/stdout, backed by the
    /// built-in classifier.
    #[command(hide = true)]
    Worker,
}

/// Parses `args` and executes the command.
pub fn main_with_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = e.print();
            std::process::exit(0);
        }
        Error::Config(e.to_string())
    })?;
    execute(cli.command)
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            strategy,
            seed,
            out,
        } => {
            let manifest = cmd_run(&config, strategy, seed, &out)?;
            println!(
                "{} run(s) written to {}",
                manifest.runs.len(),
                out.join(MANIFEST_FILE).display()
            );
            Ok(())
        }
        Command::Report { manifest, format, out } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new("")).join("report"));
            for path in cmd_report(&manifest, format, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Serve { addr, store } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime.block_on(crate::service::serve(addr, store))
        }
        Command::Worker => {
            let stdin = std::io::stdin();
            worker(stdin.lock(), std::io::stdout().lock())
        }
    }
}

/// Applies command-line overrides: a flag pins its axis to a single value.
pub fn apply_overrides(cfg: &mut ExperimentConfig, strategy: Option<Strategy>, seed: Option<u64>) {
    if let Some(s) = strategy {
        cfg.strategy.name = s;
        cfg.suite.strategies.clear();
    }
    if let Some(seed) = seed {
        cfg.protocol.run_seed = seed;
        cfg.suite.seeds.clear();
    }
}

pub fn cmd_run(config: &Path, strategy: Option<Strategy>, seed: Option<u64>, out: &Path) -> Result<RunManifest> {
    let mut cfg = ExperimentConfig::load(config)?;
    apply_overrides(&mut cfg, strategy, seed);
    cfg.validate()?;
    let (train, test) = cfg.dataset.load()?;
    let test =
        test.ok_or_else(|| Error::Config("`dataset` needs `test_path` or `test_fraction` for simulated runs".into()))?;
    let (strategies, seeds) = cfg.suite_axes();
    tracing::info!(runs = strategies.len() * seeds.len(), "starting suite");
    let results = run_suite(&cfg, &strategies, &seeds, Arc::new(train), Arc::new(test))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    RunManifest::write(out, &cfg, &results)
}

/// Writes the report files into `out` and returns their paths.
pub fn cmd_report(manifest_path: &Path, format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let results = manifest.load_results(manifest_path)?;
    let report = render_report(&results, format)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report
        .files
        .iter()
        .map(|(name, content)| {
            let path = out.join(name);
            std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Serves external-classifier requests until `input` ends. Protocol errors
/// are reported to the caller as `{"ok":false}` and the loop continues.
pub fn worker<R: BufRead, W: Write>(input: R, mut output: W) -> Result<()> {
    let mut model: Option<SoftmaxModel> = None;
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("stdin", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<ExternalRequest>(&line) {
            Ok(request) => handle(&mut model, request).unwrap_or_else(|e| ExternalResponse::failure(e.to_string())),
            Err(e) => ExternalResponse::failure(format!("bad request: {e}")),
        };
        let mut reply = serde_json::to_string(&response)?;
        reply.push('\n');
        output
            .write_all(reply.as_bytes())
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("stdout", e))?;
    }
    Ok(())
}

fn handle(model: &mut Option<SoftmaxModel>, request: ExternalRequest) -> Result<ExternalResponse> {
    let fitted = || {
        model
            .as_ref()
            .ok_or_else(|| Error::External("fit has not been called".into()))
    };
    match request {
        ExternalRequest::Fit {
            examples,
            num_classes,
            seed,
        } => {
            let schema = LabelSchema::new((0..num_classes).map(|c| c.to_string()))?;
            let examples: Vec<Example<'_>> = examples
                .iter()
                .map(|e| Example {
                    text: &e.text,
                    label: e.label,
                })
                .collect();
            let trainer = SoftmaxRegression::new(TrainConfig {
                seed,
                ..TrainConfig::default()
            });
            let fitted = trainer.fit_model(&examples, &schema)?;
            let telemetry = fitted.telemetry();
            let response = ExternalResponse {
                val_loss: Some(telemetry.val_loss),
                epochs: Some(telemetry.epochs_run),
                ..ExternalResponse::success()
            };
            *model = Some(fitted);
            Ok(response)
        }
        ExternalRequest::PredictProba { texts } => {
            let texts: Vec<&str> = texts.iter().map(String::as_str).collect();
            let probs = fitted()?
                .predict_proba(&texts)?
                .into_iter()
                .map(|d| d.probs().to_vec())
                .collect();
            Ok(ExternalResponse {
                probs: Some(probs),
                ..ExternalResponse::success()
            })
        }
        ExternalRequest::Embed { texts } => {
            let m = fitted()?;
            let dim = m.vectorizer().dimension();
            let embeddings = texts
                .iter()
                .map(|t| {
                    let mut dense = vec![0.0; dim];
                    for &(j, v) in m.embed_one(t).entries() {
                        dense[j as usize] = v;
                    }
                    dense
                })
                .collect();
            Ok(ExternalResponse {
                embeddings: Some(embeddings),
                ..ExternalResponse::success()
            })
        }
    }
}
