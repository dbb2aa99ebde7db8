//! Flat CSV exports of experiment results.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentResult};
use crate::error::{Error, Result};

/// One row per (run, iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub run_id: String,
    pub dataset: String,
    pub strategy: String,
    pub classifier: String,
    pub seed: u64,
    pub iteration: usize,
    pub num_labeled: usize,
    pub accuracy: Option<f64>,
    pub val_loss: f64,
    pub query_seconds: f64,
}

pub fn write_results_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for result in results {
        for r in &result.records {
            writer.serialize(CsvRow {
                run_id: result.run_id.clone(),
                dataset: result.dataset.clone(),
                strategy: result.strategy.clone(),
                classifier: result.classifier.clone(),
                seed: result.seed,
                iteration: r.iteration,
                num_labeled: r.num_labeled,
                accuracy: r.test_accuracy,
                val_loss: r.val_loss,
                query_seconds: r.query_seconds,
            })?;
        }
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Serialize)]
struct CurveRow<'a> {
    run_id: &'a str,
    iteration: usize,
    num_labeled: usize,
    accuracy: Option<f64>,
}

/// Learning curves for external plotting: `run_id,iteration,num_labeled,accuracy`.
pub fn write_curves_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for result in results {
        for r in &result.records {
            writer.serialize(CurveRow {
                run_id: &result.run_id,
                iteration: r.iteration,
                num_labeled: r.num_labeled,
                accuracy: r.test_accuracy,
            })?;
        }
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Index of one `al run` output directory. Paths are relative to the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: PathBuf,
    pub results_csv: PathBuf,
    pub curves_csv: PathBuf,
    pub runs: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub run_id: String,
    pub strategy: String,
    pub seed: u64,
    pub result: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    /// Writes the config snapshot, one JSON file per run, the flat CSVs, and
    /// the manifest itself under `dir`.
    pub fn write(dir: &Path, config: &ExperimentConfig, results: &[ExperimentResult]) -> Result<Self> {
        let runs_dir = dir.join("runs");
        fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
        let manifest = RunManifest {
            config: PathBuf::from("config.json"),
            results_csv: PathBuf::from("results.csv"),
            curves_csv: PathBuf::from("curves.csv"),
            runs: results
                .iter()
                .map(|r| ManifestEntry {
                    run_id: r.run_id.clone(),
                    strategy: r.strategy.clone(),
                    seed: r.seed,
                    result: Path::new("runs").join(format!("{}.json", r.run_id)),
                })
                .collect(),
        };
        write_file(&dir.join(&manifest.config), config.to_json_pretty().as_bytes())?;
        for (entry, result) in manifest.runs.iter().zip(results) {
            write_file(
                &dir.join(&entry.result),
                serde_json::to_string_pretty(result)?.as_bytes(),
            )?;
        }
        let mut buf = Vec::new();
        write_results_csv(results, &mut buf)?;
        write_file(&dir.join(&manifest.results_csv), &buf)?;
        buf.clear();
        write_curves_csv(results, &mut buf)?;
        write_file(&dir.join(&manifest.curves_csv), &buf)?;
        write_file(
            &dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )?;
        Ok(manifest)
    }

    /// Reads a manifest and checks that every file it references exists.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest =
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
        if manifest.runs.is_empty() {
            return Err(Error::Config(format!("manifest {} lists no runs", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let referenced = [&manifest.config, &manifest.results_csv, &manifest.curves_csv]
            .into_iter()
            .chain(manifest.runs.iter().map(|r| &r.result));
        for file in referenced {
            let full = base.join(file);
            if !full.is_file() {
                return Err(Error::Config(format!(
                    "manifest references missing file {}",
                    full.display()
                )));
            }
        }
        Ok(manifest)
    }

    /// Loads every referenced run result; `manifest_path` locates relative paths.
    pub fn load_results(&self, manifest_path: &Path) -> Result<Vec<ExperimentResult>> {
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        self.runs
            .iter()
            .map(|entry| {
                let path = base.join(&entry.result);
                let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            })
            .collect()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
