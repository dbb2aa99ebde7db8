//! The pool-based active-learning loop.
//!
//! Each iteration scores the complete unlabeled pool with the current model,
//! picks `query_size` instances, has the oracle label them, and retrains from
//! scratch on everything labeled so far. [`Learner`] exposes those steps one at
//! a time so that human labeling sessions and simulated runs share exactly the
//! same code path.

mod config;
mod output;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    build_classifier, ClassifierConfig, DatasetConfig, ExperimentConfig, LoopConfig, StrategyConfig, SuiteConfig,
    Timing,
};
pub use output::{
    read_results_csv, write_curves_csv, write_results_csv, CsvRow, ManifestEntry, RunManifest, MANIFEST_FILE,
};

use crate::classifier::{self, Classifier, Example, Model};
use crate::corpus::{self, Dataset, Pool};
use crate::error::{Error, Result};
use crate::metrics::{self, LearningCurve};
use crate::oracle::{Oracle, SimulatedOracle};
use crate::seed::{derive_seed, Stream};
use crate::strategies::{self, QueryContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 for the seed model.
    pub iteration: usize,
    pub num_labeled: usize,
    /// Absent when there is no gold-labeled test set.
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    /// Best validation loss seen while training this iteration's model.
    pub val_loss: f64,
    /// Time spent scoring the pool and selecting the batch.
    pub query_seconds: f64,
    /// Pool indices queried in this iteration; empty for iteration 0.
    pub queried_ids: Vec<usize>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub run_id: String,
    pub dataset: String,
    pub strategy: String,
    pub classifier: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub seed_ids: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub final_accuracy: Option<f64>,
    pub auc: Option<f64>,
}

impl ExperimentResult {
    /// `(num_labeled, accuracy)` points of every record with an accuracy.
    pub fn curve(&self, include_seed: bool) -> Option<LearningCurve> {
        let points: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter(|r| include_seed || r.iteration > 0)
            .filter_map(|r| r.test_accuracy.map(|a| (r.num_labeled, a)))
            .collect();
        LearningCurve::new(points).ok()
    }

    pub fn mean_query_seconds(&self) -> f64 {
        let queries: Vec<f64> = self.records.iter().skip(1).map(|r| r.query_seconds).collect();
        if queries.is_empty() {
            0.0
        } else {
            queries.iter().sum::<f64>() / queries.len() as f64
        }
    }
}

/// Deterministic run id: `dataset-strategy-classifier-sSEED`.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    format!(
        "{}-{}-{}-s{}",
        cfg.dataset.name,
        cfg.strategy.name,
        cfg.classifier.label(),
        cfg.protocol.run_seed
    )
}

/// Step-wise active learner over a fixed training pool.
pub struct Learner {
    cfg: ExperimentConfig,
    train: Arc<Dataset>,
    test: Option<Arc<Dataset>>,
    classifier: Box<dyn Classifier>,
    pool: Pool,
    model: Option<Box<dyn Model>>,
    seed_ids: Vec<usize>,
    records: Vec<IterationRecord>,
}

impl Learner {
    pub fn new(
        cfg: ExperimentConfig,
        train: Arc<Dataset>,
        test: Option<Arc<Dataset>>,
        classifier: Box<dyn Classifier>,
    ) -> Result<Self> {
        cfg.validate()?;
        cfg.validate_pool(train.len())?;
        if train.schema() != &cfg.dataset.class_names {
            return Err(Error::Config("training data schema differs from the config".into()));
        }
        let pool = Pool::new(train.len());
        let seed_ids = corpus::init_seed_set(
            &pool,
            &train,
            cfg.protocol.seed_set_size,
            cfg.protocol.seed_mode,
            derive_seed(cfg.protocol.run_seed, Stream::SeedSet, 0),
        )?;
        Ok(Self {
            cfg,
            train,
            test,
            classifier,
            pool,
            model: None,
            seed_ids,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn test_data(&self) -> Option<&Dataset> {
        self.test.as_deref()
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn seed_ids(&self) -> &[usize] {
        &self.seed_ids
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn model(&self) -> Option<&dyn Model> {
        self.model.as_deref()
    }

    /// Number of trained models so far.
    pub fn rounds_trained(&self) -> usize {
        self.records.len()
    }

    pub fn is_finished(&self) -> bool {
        self.records.len() > self.cfg.protocol.num_iterations
    }

    /// Scores the unlabeled pool and picks the next batch. Returns the batch
    /// and the seconds spent.
    pub fn query(&self) -> Result<(Vec<usize>, f64)> {
        let model = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Oracle("no model trained yet".into()))?;
        if self.is_finished() {
            return Err(Error::Oracle("all iterations are done".into()));
        }
        let iteration = self.records.len();
        let strategy = self.cfg.strategy.name;
        let start = Instant::now();

        let unlabeled = self.pool.unlabeled_vec();
        let texts: Vec<&str> = unlabeled
            .iter()
            .map(|&i| self.train.instances()[i].text.as_str())
            .collect();
        // RS never looks at predictions; uniform placeholders keep the context well-formed.
        let distributions = if strategy.uses_model() {
            model.predict_proba(&texts)?
        } else {
            vec![classifier::ClassDistribution::uniform(self.train.schema().num_classes()); unlabeled.len()]
        };
        let embeddings = if strategy == strategies::Strategy::Ca {
            model.embed(&texts)?
        } else {
            Vec::new()
        };
        let ctx = QueryContext {
            unlabeled,
            distributions,
            embeddings,
            rng_seed: derive_seed(self.cfg.protocol.run_seed, Stream::Query, iteration as u64),
        };
        let batch = strategies::query(strategy, &ctx, self.cfg.protocol.query_size, &self.cfg.strategy.ca)?;
        let seconds = match self.cfg.protocol.timing {
            Timing::Wall => start.elapsed().as_secs_f64(),
            Timing::Off => 0.0,
        };
        Ok((batch, seconds))
    }

    /// Adds oracle labels for a batch, retrains from scratch, evaluates, and
    /// appends an [`IterationRecord`].
    ///
    /// The first call must label the seed set; later calls the batch returned
    /// by the preceding [`Learner::query`].
    pub fn label_and_train(
        &mut self,
        labels: &[(usize, usize)],
        queried: Vec<usize>,
        query_seconds: f64,
    ) -> Result<&IterationRecord> {
        if self.is_finished() {
            return Err(Error::Oracle("all iterations are done".into()));
        }
        let iteration = self.records.len();
        let expected = if iteration == 0 { &self.seed_ids } else { &queried };
        let mut got: Vec<usize> = labels.iter().map(|&(i, _)| i).collect();
        let mut want = expected.clone();
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            return Err(Error::Oracle(format!("labels cover {got:?}, expected {want:?}")));
        }
        for &(_, label) in labels {
            self.train.schema().check_class(label)?;
        }
        // Label order follows the batch order so the pool history is canonical.
        let ordered: Vec<(usize, usize)> = expected
            .iter()
            .map(|&i| (i, labels.iter().find(|(j, _)| *j == i).expect("checked above").1))
            .collect();
        // Commit the pool only once training succeeded.
        let mut pool = self.pool.clone();
        pool.assign(&ordered)?;

        let examples: Vec<Example<'_>> = pool
            .labeled_pairs()
            .into_iter()
            .map(|(i, label)| Example {
                text: self.train.instances()[i].text.as_str(),
                label,
            })
            .collect();
        let schema = self.train.schema().clone();
        let train_seed = derive_seed(self.cfg.protocol.run_seed, Stream::Training, iteration as u64);
        let model = self.classifier.fit(&examples, &schema, train_seed)?;
        let evaluation = match &self.test {
            Some(test) => Some(classifier::evaluate(model.as_ref(), test)?),
            None => None,
        };
        let telemetry = model.telemetry();
        let num_labeled = pool.labeled().len();
        self.pool = pool;
        self.records.push(IterationRecord {
            iteration,
            num_labeled,
            test_accuracy: evaluation.map(|e| e.accuracy),
            test_loss: evaluation.map(|e| e.mean_loss),
            val_loss: telemetry.val_loss,
            query_seconds: if iteration == 0 { 0.0 } else { query_seconds },
            queried_ids: if iteration == 0 { Vec::new() } else { queried },
            epochs_run: telemetry.epochs_run,
        });
        self.model = Some(model);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn into_result(self) -> ExperimentResult {
        let curve = self.curve();
        let auc = curve.as_ref().map(metrics::auc);
        ExperimentResult {
            run_id: run_id(&self.cfg),
            dataset: self.cfg.dataset.name.clone(),
            strategy: self.cfg.strategy.name.to_string(),
            classifier: self.classifier.name().to_string(),
            seed: self.cfg.protocol.run_seed,
            final_accuracy: self.records.last().and_then(|r| r.test_accuracy),
            auc,
            seed_ids: self.seed_ids,
            records: self.records,
            config: self.cfg,
        }
    }

    pub fn curve(&self) -> Option<LearningCurve> {
        let include_seed = self.cfg.protocol.auc_includes_seed;
        let points: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter(|r| include_seed || r.iteration > 0)
            .filter_map(|r| r.test_accuracy.map(|a| (r.num_labeled, a)))
            .collect();
        LearningCurve::new(points).ok()
    }
}

/// Runs one complete experiment against an oracle.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    train: Arc<Dataset>,
    test: Arc<Dataset>,
    classifier: Box<dyn Classifier>,
    oracle: &mut dyn Oracle,
) -> Result<ExperimentResult> {
    let mut learner = Learner::new(cfg.clone(), train, Some(test), classifier)?;
    let seed_ids = learner.seed_ids().to_vec();
    let labels = oracle.label(&seed_ids)?;
    learner.label_and_train(&zip_labels(&seed_ids, &labels)?, Vec::new(), 0.0)?;
    while !learner.is_finished() {
        let (batch, seconds) = learner.query()?;
        let labels = oracle.label(&batch)?;
        learner.label_and_train(&zip_labels(&batch, &labels)?, batch, seconds)?;
    }
    Ok(learner.into_result())
}

fn zip_labels(ids: &[usize], labels: &[usize]) -> Result<Vec<(usize, usize)>> {
    if ids.len() != labels.len() {
        return Err(Error::Oracle(format!(
            "oracle returned {} labels for {} instances",
            labels.len(),
            ids.len()
        )));
    }
    Ok(ids.iter().copied().zip(labels.iter().copied()).collect())
}

/// Runs a simulated experiment with the configured classifier.
pub fn run_simulated(cfg: &ExperimentConfig, train: Arc<Dataset>, test: Arc<Dataset>) -> Result<ExperimentResult> {
    let classifier = build_classifier(cfg, &train)?;
    let mut oracle = SimulatedOracle::new(Arc::clone(&train));
    run_experiment(cfg, train, test, classifier, &mut oracle)
}

/// Every strategy crossed with every seed, simulated oracle throughout.
///
/// A seed fixes the initial labeled set, so all strategies under one seed start
/// from identical data. Runs execute in parallel; results come back ordered by
/// strategy, then seed.
pub fn run_suite(
    base: &ExperimentConfig,
    strategies: &[strategies::Strategy],
    seeds: &[u64],
    train: Arc<Dataset>,
    test: Arc<Dataset>,
) -> Result<Vec<ExperimentResult>> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::Config("a suite needs at least one strategy and one seed".into()));
    }
    let runs: Vec<ExperimentConfig> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| base.for_run(s, seed)))
        .collect();
    let parallel = matches!(base.classifier, ClassifierConfig::Builtin { .. });
    let execute = |cfg: &ExperimentConfig| run_simulated(cfg, Arc::clone(&train), Arc::clone(&test));
    if parallel {
        runs.par_iter().map(execute).collect()
    } else {
        runs.iter().map(execute).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSchema;
    use crate::strategies::Strategy;

    fn toy(n: usize) -> (Arc<Dataset>, Arc<Dataset>) {
        let words = [["good", "great", "fine", "nice"], ["bad", "awful", "poor", "sad"]];
        let make = |n: usize, offset: usize| {
            let records = (0..n).map(|i| {
                let k = (i + offset) % 2;
                let w = &words[k];
                (format!("{} {} item{}", w[i % 4], w[(i / 4) % 4], i % 17), Some(k))
            });
            Dataset::new(LabelSchema::new(["pos", "neg"]).unwrap(), records).unwrap()
        };
        (Arc::new(make(n, 0)), Arc::new(make(40, 1)))
    }

    fn config(strategy: Strategy, iterations: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DatasetConfig::new(
            "toy",
            "unused",
            LabelSchema::new(["pos", "neg"]).unwrap(),
        ));
        cfg.strategy.name = strategy;
        cfg.strategy.ca.num_neighbors = 3;
        cfg.protocol.num_iterations = iterations;
        cfg.protocol.query_size = 10;
        cfg.protocol.seed_set_size = 10;
        cfg.protocol.timing = Timing::Off;
        cfg
    }

    #[test]
    fn zero_iterations_give_one_record() {
        let (train, test) = toy(100);
        let result = run_simulated(&config(Strategy::Bt, 0), train, test).unwrap();
        assert_eq!(result.records.len(), 1);
        assert!(result.records[0].queried_ids.is_empty());
        assert_eq!(result.records[0].num_labeled, 10);
    }

    #[test]
    fn records_follow_the_budget() {
        let (train, test) = toy(200);
        for strategy in Strategy::ALL {
            let result = run_simulated(&config(strategy, 4), Arc::clone(&train), Arc::clone(&test)).unwrap();
            let counts: Vec<usize> = result.records.iter().map(|r| r.num_labeled).collect();
            assert_eq!(counts, vec![10, 20, 30, 40, 50], "{strategy}");
            let mut all: Vec<usize> = result.seed_ids.clone();
            for r in &result.records {
                all.extend(&r.queried_ids);
            }
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), total, "{strategy} queried an instance twice");
        }
    }

    #[test]
    fn over_budget_config_is_rejected() {
        let (train, test) = toy(45);
        let err = run_simulated(&config(Strategy::Rs, 4), train, test).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn learner_rejects_wrong_batch() {
        let (train, test) = toy(100);
        let cfg = config(Strategy::Lc, 2);
        let clf = build_classifier(&cfg, &train).unwrap();
        let mut learner = Learner::new(cfg, Arc::clone(&train), Some(test), clf).unwrap();
        assert!(learner.query().is_err());
        let not_seed: Vec<(usize, usize)> = (0..100)
            .filter(|i| !learner.seed_ids().contains(i))
            .take(10)
            .map(|i| (i, 0))
            .collect();
        assert!(learner.label_and_train(&not_seed, Vec::new(), 0.0).is_err());
        assert_eq!(learner.pool().labeled().len(), 0);
    }
}
