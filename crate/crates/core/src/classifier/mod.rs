//! Probabilistic classifiers.
//!
//! The active-learning loop only sees the [`Classifier`] and [`Model`] traits.
//! [`SoftmaxRegression`] is the built-in implementation; [`ExternalClassifier`]
//! forwards the same calls to a child process over line-delimited JSON.

mod external;
mod softmax;

use serde::{Deserialize, Serialize};

pub use external::{ExternalClassifier, ExternalRequest, ExternalResponse, ProtocolExample};
pub use softmax::{loss_and_gradient, Gradient, Parameters, SoftmaxModel, SoftmaxRegression};

use crate::corpus::{Dataset, LabelSchema};
use crate::error::{Error, Result};
use crate::features::SparseVector;

/// Probabilities clamp to this floor before taking logs in losses.
pub const LOG_FLOOR: f64 = 1e-12;

/// A predicted distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates non-negativity and that entries sum to one within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("empty class distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Most likely class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Cross-entropy against a gold class, with the probability floored.
    pub fn cross_entropy(&self, gold: usize) -> f64 {
        -self.probs[gold].max(LOG_FLOOR).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub early_stop_patience: usize,
    pub early_stop_accuracy: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            learning_rate: 0.5,
            l2_penalty: 1e-4,
            batch_size: 16,
            val_fraction: 0.10,
            early_stop_patience: 5,
            early_stop_accuracy: 0.98,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        if !(self.early_stop_accuracy > 0.0 && self.early_stop_accuracy <= 1.0) {
            return bad("early_stop_accuracy must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AccuracyReached,
    Patience,
    MaxEpochs,
    /// Reported by backends that do not expose their training loop.
    External,
}

/// What happened during one `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTelemetry {
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_loss_history: Vec<f64>,
    pub stop_reason: StopReason,
}

/// A labeled training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example<'a> {
    pub text: &'a str,
    pub label: usize,
}

/// Something that can be trained from scratch on labeled examples.
pub trait Classifier: Send {
    fn name(&self) -> &str;

    /// Trains a fresh model. Implementations never warm-start from an earlier
    /// call.
    fn fit(&mut self, examples: &[Example<'_>], schema: &LabelSchema, seed: u64) -> Result<Box<dyn Model>>;
}

/// A trained model.
pub trait Model: Send + Sync {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>>;

    /// The representation used for neighbour search.
    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>>;

    fn telemetry(&self) -> &TrainTelemetry;
}

/// Checks the preconditions every `fit` shares.
pub(crate) fn check_examples(examples: &[Example<'_>], schema: &LabelSchema) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::InvalidTrainingSet("no examples".into()));
    }
    let c = schema.num_classes();
    for ex in examples {
        schema.check_class(ex.label)?;
    }
    if examples.len() < c {
        return Err(Error::InvalidTrainingSet(format!(
            "{} examples for {c} classes",
            examples.len()
        )));
    }
    let first = examples[0].label;
    if examples.iter().all(|e| e.label == first) {
        return Err(Error::InvalidTrainingSet(format!("all examples have class {first}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Accuracy and mean floored cross-entropy on a gold-labeled dataset.
pub fn evaluate(model: &dyn Model, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let gold: Vec<usize> = test
        .instances()
        .iter()
        .map(|i| i.gold_label.ok_or(Error::MissingGoldLabel(i.id)))
        .collect::<Result<_>>()?;
    let predictions = model.predict_proba(&test.texts())?;
    Ok(score_predictions(&predictions, &gold))
}

pub(crate) fn score_predictions(predictions: &[ClassDistribution], gold: &[usize]) -> Evaluation {
    let n = gold.len() as f64;
    let correct = predictions.iter().zip(gold).filter(|(p, &g)| p.argmax() == g).count();
    let loss: f64 = predictions.iter().zip(gold).map(|(p, &g)| p.cross_entropy(g)).sum();
    Evaluation {
        accuracy: correct as f64 / n,
        mean_loss: loss / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = ClassDistribution::from_logits(&[0.0, 0.0, 0.0]);
        for &x in p.probs() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = ClassDistribution::from_logits(&[2f64.ln(), 0.0]);
        assert!((p.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.probs()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let p = ClassDistribution::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(p.argmax(), 0);
        let p = ClassDistribution::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(p.argmax(), 1);
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassDistribution::new(vec![]).is_err());
        assert!(ClassDistribution::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn uniform_binary_loss_is_ln2() {
        let preds = vec![ClassDistribution::uniform(2); 4];
        let e = score_predictions(&preds, &[0, 1, 1, 0]);
        assert!((e.mean_loss - 2f64.ln()).abs() < 1e-15);
        assert!((e.mean_loss - std::f64::consts::LN_2).abs() < 1e-4);
        // Ties go to class 0.
        assert_eq!(e.accuracy, 0.5);
    }

    #[test]
    fn floored_loss_is_finite() {
        let preds = vec![ClassDistribution::new(vec![1.0, 0.0]).unwrap()];
        let e = score_predictions(&preds, &[1]);
        assert!((e.mean_loss - (-LOG_FLOOR.ln())).abs() < 1e-12);
        let e = score_predictions(&preds, &[0]);
        assert!(e.mean_loss < 1e-11);
        assert_eq!(e.accuracy, 1.0);
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            val_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
