use std::sync::Arc;

use rand::seq::SliceRandom;

use super::{
    check_examples, score_predictions, ClassDistribution, Classifier, Example, Model, StopReason, TrainConfig,
    TrainTelemetry,
};
use crate::corpus::LabelSchema;
use crate::error::Result;
use crate::features::{SparseVector, Vectorizer, VectorizerConfig};
use crate::seed;

/// Weights (row-major, `classes x dim`) and biases of a softmax regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Parameters {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                let dot: f64 = x
                    .entries()
                    .iter()
                    .filter(|(d, _)| (*d as usize) < self.dim)
                    .map(|&(d, w)| row[d as usize] * w)
                    .sum();
                dot + self.bias[k]
            })
            .collect()
    }

    pub fn predict(&self, x: &SparseVector) -> ClassDistribution {
        ClassDistribution::from_logits(&self.logits(x))
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean cross-entropy over the batch plus `l2 / 2 * ||W||^2`, and its gradient.
/// Biases are not penalized.
pub fn loss_and_gradient(params: &Parameters, batch: &[(&SparseVector, usize)], l2: f64) -> (f64, Gradient) {
    let n = batch.len().max(1) as f64;
    let mut grad = Gradient {
        weights: params.weights.iter().map(|w| l2 * w).collect(),
        bias: vec![0.0; params.classes],
    };
    let mut loss = 0.5 * l2 * params.weights.iter().map(|w| w * w).sum::<f64>();
    for &(x, label) in batch {
        let logits = params.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += (log_norm - logits[label]) / n;
        for (k, z) in logits.iter().enumerate() {
            let residual = ((z - log_norm).exp() - f64::from(u8::from(k == label))) / n;
            grad.bias[k] += residual;
            let row = &mut grad.weights[k * params.dim..(k + 1) * params.dim];
            for &(d, w) in x.entries() {
                if (d as usize) < params.dim {
                    row[d as usize] += residual * w;
                }
            }
        }
    }
    (loss, grad)
}

/// Built-in classifier: multinomial logistic regression on tf-idf features,
/// trained by mini-batch gradient descent with validation-based early stopping.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    config: TrainConfig,
    vectorizer: Option<Arc<Vectorizer>>,
    vectorizer_config: VectorizerConfig,
}

impl SoftmaxRegression {
    /// A classifier that fits its vectorizer on each training set.
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            vectorizer: None,
            vectorizer_config: VectorizerConfig::default(),
        }
    }

    /// A classifier that reuses a vectorizer fitted once, typically on the
    /// whole pool, so embeddings stay comparable between iterations.
    pub fn with_vectorizer(config: TrainConfig, vectorizer: Arc<Vectorizer>) -> Self {
        Self {
            config,
            vectorizer_config: vectorizer.config().clone(),
            vectorizer: Some(vectorizer),
        }
    }

    pub fn with_vectorizer_config(mut self, config: VectorizerConfig) -> Self {
        self.vectorizer_config = config;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Trains with the seed from the config.
    pub fn fit_model(&self, examples: &[Example<'_>], schema: &LabelSchema) -> Result<SoftmaxModel> {
        self.train(examples, schema, self.config.seed)
    }

    fn train(&self, examples: &[Example<'_>], schema: &LabelSchema, seed: u64) -> Result<SoftmaxModel> {
        self.config.validate()?;
        check_examples(examples, schema)?;
        let vectorizer = match &self.vectorizer {
            Some(v) => Arc::clone(v),
            None => {
                let texts: Vec<&str> = examples.iter().map(|e| e.text).collect();
                Arc::new(Vectorizer::fit(&texts, self.vectorizer_config.clone())?)
            }
        };
        let features: Vec<SparseVector> = examples.iter().map(|e| vectorizer.vectorize(e.text)).collect();
        let mut rng = seed::rng(seed);

        let n = examples.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_val = ((n as f64 * self.config.val_fraction).round() as usize).clamp(1, n - 1);
        let (val_idx, train_idx) = order.split_at(n_val);
        let val_gold: Vec<usize> = val_idx.iter().map(|&i| examples[i].label).collect();
        let mut train_idx = train_idx.to_vec();

        let mut params = Parameters::zeros(schema.num_classes(), vectorizer.dimension());
        let mut best = params.clone();
        let mut best_loss = f64::INFINITY;
        let mut best_accuracy = 0.0;
        let mut best_epoch = 0;
        let mut history = Vec::new();
        let mut stale_epochs = 0;
        let mut stop_reason = StopReason::MaxEpochs;
        let lr = self.config.learning_rate;

        for epoch in 1..=self.config.max_epochs {
            train_idx.shuffle(&mut rng);
            for chunk in train_idx.chunks(self.config.batch_size) {
                let batch: Vec<(&SparseVector, usize)> =
                    chunk.iter().map(|&i| (&features[i], examples[i].label)).collect();
                let (_, grad) = loss_and_gradient(&params, &batch, self.config.l2_penalty);
                for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
                    *w -= lr * g;
                }
                for (b, g) in params.bias.iter_mut().zip(&grad.bias) {
                    *b -= lr * g;
                }
            }
            if !params.is_finite() {
                return Err(crate::Error::InvalidTrainingSet(format!(
                    "parameters diverged at epoch {epoch}; lower the learning rate"
                )));
            }

            let predictions: Vec<ClassDistribution> = val_idx.iter().map(|&i| params.predict(&features[i])).collect();
            let eval = score_predictions(&predictions, &val_gold);
            history.push(eval.mean_loss);
            if eval.mean_loss < best_loss {
                best_loss = eval.mean_loss;
                best_accuracy = eval.accuracy;
                best_epoch = epoch;
                best.clone_from(&params);
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
            }
            if eval.accuracy > self.config.early_stop_accuracy {
                stop_reason = StopReason::AccuracyReached;
                break;
            }
            if stale_epochs >= self.config.early_stop_patience {
                stop_reason = StopReason::Patience;
                break;
            }
        }

        Ok(SoftmaxModel {
            params: best,
            vectorizer,
            telemetry: TrainTelemetry {
                epochs_run: history.len(),
                best_epoch,
                val_loss: best_loss,
                val_accuracy: best_accuracy,
                val_loss_history: history,
                stop_reason,
            },
        })
    }
}

impl Classifier for SoftmaxRegression {
    fn name(&self) -> &str {
        "builtin"
    }

    fn fit(&mut self, examples: &[Example<'_>], schema: &LabelSchema, seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(self.train(examples, schema, seed)?))
    }
}

#[derive(Debug, Clone)]
pub struct SoftmaxModel {
    params: Parameters,
    vectorizer: Arc<Vectorizer>,
    telemetry: TrainTelemetry,
}

impl SoftmaxModel {
    /// Assembles a model from explicit parameters.
    pub fn from_parts(params: Parameters, vectorizer: Arc<Vectorizer>, telemetry: TrainTelemetry) -> Self {
        Self {
            params,
            vectorizer,
            telemetry,
        }
    }

    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    pub fn vectorizer(&self) -> &Vectorizer {
        &self.vectorizer
    }

    pub fn embed_one(&self, text: &str) -> SparseVector {
        self.vectorizer.vectorize(text)
    }
}

impl Model for SoftmaxModel {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>> {
        Ok(texts
            .iter()
            .map(|t| self.params.predict(&self.vectorizer.vectorize(t)))
            .collect())
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>> {
        Ok(texts.iter().map(|t| self.vectorizer.vectorize(t)).collect())
    }

    fn telemetry(&self) -> &TrainTelemetry {
        &self.telemetry
    }
}
