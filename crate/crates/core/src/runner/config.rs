use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ExternalClassifier, SoftmaxRegression, TrainConfig};
use crate::corpus::{self, DataFormat, Dataset, LabelSchema, SeedMode};
use crate::error::{Error, Result};
use crate::features::{Vectorizer, VectorizerConfig};
use crate::strategies::{CaConfig, Strategy};

/// One experiment, as read from a JSON config file.
///
/// ```json
/// {
///   "dataset": {"name": "toy", "path": "train.jsonl", "class_names": ["neg", "pos"],
///               "test_fraction": 0.1, "stratified": true},
///   "classifier": {"kind": "builtin"},
///   "strategy": {"name": "bt"},
///   "loop": {"num_iterations": 20, "query_size": 25, "run_seed": 1},
///   "suite": {"strategies": ["pe", "bt", "rs"], "seeds": [1, 2, 3]}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(rename = "loop", default)]
    pub protocol: LoopConfig,
    #[serde(default, skip_serializing_if = "SuiteConfig::is_empty")]
    pub suite: SuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    pub class_names: LabelSchema,
    /// A separate gold-labeled test file. Takes precedence over `test_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    /// Hold out this fraction of `path` as the test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub vectorizer: VectorizerConfig,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierConfig {
    Builtin {
        #[serde(default)]
        train: TrainConfig,
    },
    /// A child process speaking the line-delimited JSON protocol.
    External { command: Vec<String> },
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Builtin {
            train: TrainConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ClassifierConfig::Builtin { .. } => "builtin",
            ClassifierConfig::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub name: Strategy,
    #[serde(default)]
    pub ca: CaConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            name: Strategy::Pe,
            ca: CaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Wall-clock seconds spent scoring and selecting.
    #[default]
    Wall,
    /// Record zero, which makes result files byte-reproducible.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub seed_set_size: usize,
    pub seed_mode: SeedMode,
    pub num_iterations: usize,
    pub query_size: usize,
    pub run_seed: u64,
    /// Whether the seed model's point counts towards the AUC.
    pub auc_includes_seed: bool,
    pub timing: Timing,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            seed_set_size: 25,
            seed_mode: SeedMode::Random,
            num_iterations: 20,
            query_size: 25,
            run_seed: 0,
            auc_includes_seed: true,
            timing: Timing::Wall,
        }
    }
}

impl LoopConfig {
    /// Labels consumed by a complete run.
    pub fn budget(&self) -> usize {
        self.seed_set_size + self.num_iterations * self.query_size
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
}

impl SuiteConfig {
    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty() && self.seeds.is_empty()
    }
}

impl ExperimentConfig {
    /// A config with defaults everywhere except the dataset.
    pub fn new(dataset: DatasetConfig) -> Self {
        Self {
            dataset,
            classifier: ClassifierConfig::default(),
            strategy: StrategyConfig::default(),
            protocol: LoopConfig::default(),
            suite: SuiteConfig::default(),
        }
    }

    /// Parses JSON, naming the offending key on failure.
    pub fn from_json(raw: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(raw);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.inner()))
        })
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&raw)?;
        if let Some(dir) = path.parent() {
            cfg.dataset.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        if p.seed_set_size == 0 {
            return Err(Error::Config("loop.seed_set_size must be positive".into()));
        }
        if p.query_size == 0 {
            return Err(Error::Config("loop.query_size must be positive".into()));
        }
        if let Some(f) = self.dataset.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config("dataset.test_fraction must be in (0, 1)".into()));
            }
        }
        self.strategy.ca.validate()?;
        if let ClassifierConfig::Builtin { train } = &self.classifier {
            train.validate()?;
        }
        if let ClassifierConfig::External { command } = &self.classifier {
            if command.is_empty() {
                return Err(Error::Config("classifier.command must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Checks the label budget against an actual training pool.
    pub fn validate_pool(&self, pool_size: usize) -> Result<()> {
        let budget = self.protocol.budget();
        if budget > pool_size {
            return Err(Error::Config(format!(
                "loop needs {budget} labels but the training pool has {pool_size} instances"
            )));
        }
        if self.strategy.name == Strategy::Ca && self.protocol.num_iterations > 0 {
            // The last query runs on the smallest pool.
            let smallest =
                pool_size - self.protocol.seed_set_size - (self.protocol.num_iterations - 1) * self.protocol.query_size;
            if smallest < self.strategy.ca.num_neighbors + 1 {
                return Err(Error::Config(format!(
                    "ca.num_neighbors = {} needs at least {} unlabeled instances, the last query sees {smallest}",
                    self.strategy.ca.num_neighbors,
                    self.strategy.ca.num_neighbors + 1
                )));
            }
        }
        Ok(())
    }

    /// The strategies and seeds a suite over this config covers.
    pub fn suite_axes(&self) -> (Vec<Strategy>, Vec<u64>) {
        let strategies = if self.suite.strategies.is_empty() {
            vec![self.strategy.name]
        } else {
            self.suite.strategies.clone()
        };
        let seeds = if self.suite.seeds.is_empty() {
            vec![self.protocol.run_seed]
        } else {
            self.suite.seeds.clone()
        };
        (strategies, seeds)
    }

    /// A copy pinned to one strategy and seed.
    pub fn for_run(&self, strategy: Strategy, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.strategy.name = strategy;
        cfg.protocol.run_seed = seed;
        cfg.suite = SuiteConfig::default();
        cfg
    }
}

impl DatasetConfig {
    pub fn new(name: impl Into<String>, path: impl Into<PathBuf>, schema: LabelSchema) -> Self {
        Self {
            name: name.into(),
            path: path.into(),
            format: None,
            class_names: schema,
            test_path: None,
            test_fraction: None,
            stratified: false,
            split_seed: 0,
            vectorizer: VectorizerConfig::default(),
        }
    }

    /// Rewrites data paths as absolute paths, so a config snapshot stays
    /// valid from any working directory.
    pub fn make_absolute(&mut self) -> Result<()> {
        let absolute = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(&*p).map_err(|e| Error::io(&*p, e))?;
            Ok(())
        };
        absolute(&mut self.path)?;
        if let Some(p) = self.test_path.as_mut() {
            absolute(p)?;
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.path);
        if let Some(p) = self.test_path.as_mut() {
            resolve(p);
        }
    }

    fn format_for(&self, path: &Path) -> DataFormat {
        self.format.unwrap_or_else(|| DataFormat::from_path(path))
    }

    /// Loads the training pool and, when configured, the test set.
    pub fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        let schema = &self.class_names;
        let data = corpus::load_dataset(&self.path, self.format_for(&self.path), schema)?;
        if let Some(test_path) = &self.test_path {
            let test = corpus::load_dataset(test_path, self.format_for(test_path), schema)?;
            return Ok((data, Some(test)));
        }
        if let Some(fraction) = self.test_fraction {
            let (train, test) = corpus::split_dataset(&data, fraction, self.split_seed, self.stratified)?;
            return Ok((train, Some(test)));
        }
        Ok((data, None))
    }
}

/// Builds the configured classifier. The built-in one shares a vectorizer
/// fitted on the whole training pool.
pub fn build_classifier(cfg: &ExperimentConfig, train: &Dataset) -> Result<Box<dyn Classifier>> {
    match &cfg.classifier {
        ClassifierConfig::Builtin { train: train_cfg } => {
            let vectorizer = Vectorizer::fit(&train.texts(), cfg.dataset.vectorizer.clone())?;
            Ok(Box::new(SoftmaxRegression::with_vectorizer(
                train_cfg.clone(),
                Arc::new(vectorizer),
            )))
        }
        ClassifierConfig::External { command } => Ok(Box::new(ExternalClassifier::spawn(command)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"dataset": {"path": "d.jsonl", "class_names": ["a", "b"]}}"#;

    #[test]
    fn defaults_follow_protocol() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.protocol.seed_set_size, 25);
        assert_eq!(cfg.protocol.num_iterations, 20);
        assert_eq!(cfg.protocol.query_size, 25);
        assert_eq!(cfg.protocol.budget(), 525);
        assert_eq!(cfg.strategy.ca.num_neighbors, 10);
        assert_eq!(cfg.classifier.label(), "builtin");
    }

    #[test]
    fn errors_name_the_offending_key() {
        let raw = r#"{"dataset": {"path": "d.jsonl", "class_names": ["a", "b"]},
                      "loop": {"num_iterations": "many"}}"#;
        let err = ExperimentConfig::from_json(raw).unwrap_err().to_string();
        assert!(err.contains("loop.num_iterations"), "{err}");

        let raw = r#"{"dataset": {"path": "d.jsonl", "class_names": ["a", "b"]},
                      "strategy": {"name": "xx"}}"#;
        let err = ExperimentConfig::from_json(raw).unwrap_err().to_string();
        assert!(err.contains("strategy.name"), "{err}");

        let raw = r#"{"dataset": {"path": "d.jsonl", "class_names": ["a", "b"], "colour": 1}}"#;
        let err = ExperimentConfig::from_json(raw).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn budget_is_checked_against_pool() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.validate_pool(524).is_err());
        assert!(cfg.validate_pool(525).is_ok());
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.suite.strategies = vec![Strategy::Bt, Strategy::Rs];
        let again = ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn suite_axes_fall_back_to_single_run() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.suite_axes(), (vec![Strategy::Pe], vec![0]));
        let pinned = cfg.for_run(Strategy::Ca, 9);
        assert_eq!(pinned.strategy.name, Strategy::Ca);
        assert_eq!(pinned.protocol.run_seed, 9);
    }
}
