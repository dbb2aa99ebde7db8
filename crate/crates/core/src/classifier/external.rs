//! Adapter for classifiers living in another process.
//!
//! The child reads one JSON request per line on stdin and answers with one JSON
//! response per line on stdout:
//!
//! ```text
//! {"op":"fit","examples":[{"text":"...","label":0}],"num_classes":2,"seed":7}
//! {"op":"predict_proba","texts":["..."]}      -> {"ok":true,"probs":[[0.9,0.1]]}
//! {"op":"embed","texts":["..."]}              -> {"ok":true,"embeddings":[[0.1,0.0,0.3]]}
//! ```
//!
//! Any `{"ok":false,"error":"..."}` response becomes [`Error::External`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{check_examples, ClassDistribution, Classifier, Example, Model, StopReason, TrainTelemetry};
use crate::corpus::LabelSchema;
use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolExample {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ExternalRequest {
    Fit {
        examples: Vec<ProtocolExample>,
        num_classes: usize,
        seed: u64,
    },
    PredictProba {
        texts: Vec<String>,
    },
    Embed {
        texts: Vec<String>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

impl ExternalResponse {
    pub fn success() -> Self {
        Self {
            ok: true,
            ..Default::default()
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Default::default()
        }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    /// Incremented on every fit; a model only answers for its own generation.
    generation: u64,
}

impl Process {
    fn call(&mut self, request: &ExternalRequest) -> Result<ExternalResponse> {
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::External(format!("write to child failed: {e}")))?;
        let mut reply = String::new();
        let read = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::External(format!("read from child failed: {e}")))?;
        if read == 0 {
            return Err(Error::External("child closed its stdout".into()));
        }
        let response: ExternalResponse = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::External(format!("bad response {reply:?}: {e}")))?;
        if !response.ok {
            return Err(Error::External(
                response.error.unwrap_or_else(|| "unspecified error".into()),
            ));
        }
        Ok(response)
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalClassifier {
    process: Arc<Mutex<Process>>,
}

impl ExternalClassifier {
    /// Spawns `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("external classifier command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            process: Arc::new(Mutex::new(Process {
                child,
                stdin,
                stdout,
                generation: 0,
            })),
        })
    }
}

impl Classifier for ExternalClassifier {
    fn name(&self) -> &str {
        "external"
    }

    fn fit(&mut self, examples: &[Example<'_>], schema: &LabelSchema, seed: u64) -> Result<Box<dyn Model>> {
        check_examples(examples, schema)?;
        let request = ExternalRequest::Fit {
            examples: examples
                .iter()
                .map(|e| ProtocolExample {
                    text: e.text.to_string(),
                    label: e.label,
                })
                .collect(),
            num_classes: schema.num_classes(),
            seed,
        };
        let mut process = self.process.lock();
        let response = process.call(&request)?;
        process.generation += 1;
        let epochs = response.epochs.unwrap_or(0);
        Ok(Box::new(ExternalModel {
            process: Arc::clone(&self.process),
            generation: process.generation,
            num_classes: schema.num_classes(),
            telemetry: TrainTelemetry {
                epochs_run: epochs,
                best_epoch: epochs,
                val_loss: response.val_loss.unwrap_or(f64::NAN),
                val_accuracy: f64::NAN,
                val_loss_history: Vec::new(),
                stop_reason: StopReason::External,
            },
        }))
    }
}

struct ExternalModel {
    process: Arc<Mutex<Process>>,
    generation: u64,
    num_classes: usize,
    telemetry: TrainTelemetry,
}

impl ExternalModel {
    fn call(&self, request: ExternalRequest) -> Result<ExternalResponse> {
        let mut process = self.process.lock();
        if process.generation != self.generation {
            return Err(Error::External(
                "model was superseded by a later fit in the same process".into(),
            ));
        }
        process.call(&request)
    }
}

fn owned(texts: &[&str]) -> Vec<String> {
    texts.iter().map(|t| t.to_string()).collect()
}

impl Model for ExternalModel {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<ClassDistribution>> {
        let probs = self
            .call(ExternalRequest::PredictProba { texts: owned(texts) })?
            .probs
            .ok_or_else(|| Error::External("response lacks `probs`".into()))?;
        if probs.len() != texts.len() {
            return Err(Error::External(format!(
                "expected {} distributions, got {}",
                texts.len(),
                probs.len()
            )));
        }
        probs
            .into_iter()
            .map(|p| {
                if p.len() != self.num_classes {
                    return Err(Error::External(format!(
                        "distribution has {} entries, expected {}",
                        p.len(),
                        self.num_classes
                    )));
                }
                ClassDistribution::new(p).map_err(|e| Error::External(e.to_string()))
            })
            .collect()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<SparseVector>> {
        let embeddings = self
            .call(ExternalRequest::Embed { texts: owned(texts) })?
            .embeddings
            .ok_or_else(|| Error::External("response lacks `embeddings`".into()))?;
        if embeddings.len() != texts.len() {
            return Err(Error::External(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                embeddings.len()
            )));
        }
        embeddings.iter().map(|e| SparseVector::from_dense(e)).collect()
    }

    fn telemetry(&self) -> &TrainTelemetry {
        &self.telemetry
    }
}
