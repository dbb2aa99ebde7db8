use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{build_classifier, CsvRow, ExperimentConfig, Learner};

pub const CONFIG_FILE: &str = "config.json";
pub const LABEL_LOG_FILE: &str = "labels.jsonl";
pub const RESULTS_FILE: &str = "results.csv";

/// One line of the append-only label log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub batch_id: u64,
    pub instance_id: usize,
    pub label: usize,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingLabels,
    Training,
    Finished,
    /// Training raised an error; the session cannot continue.
    Failed,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SessionStatus::AwaitingLabels => "awaiting_labels",
            SessionStatus::Training => "training",
            SessionStatus::Finished => "finished",
            SessionStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Accepted,
    /// The batch had already been applied with identical labels.
    AlreadyApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceView {
    pub id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub batch_id: u64,
    pub instances: Vec<InstanceView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub num_labeled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

/// Read-only snapshot of a session, as served over HTTP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub iteration: usize,
    pub num_labeled: usize,
    pub class_names: Vec<String>,
    pub curve: Vec<CurvePoint>,
    pub batch: Option<BatchView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
struct PendingBatch {
    batch_id: u64,
    ids: Vec<usize>,
    query_seconds: f64,
}

/// A human labeling run backed by a directory:
/// `config.json`, `labels.jsonl` (append-only), and `results.csv`.
pub struct Session {
    id: String,
    dir: PathBuf,
    learner: Learner,
    status: SessionStatus,
    pending: Option<PendingBatch>,
    /// Labels accepted for the pending batch, waiting for training.
    staged: Option<Vec<(usize, usize)>>,
    last_applied: Option<(u64, BTreeMap<usize, usize>)>,
    error: Option<String>,
}

impl Session {
    /// Creates `dir`, snapshots the config, and exposes the seed set as the
    /// first pending batch.
    pub fn create(id: String, dir: PathBuf, mut cfg: ExperimentConfig) -> Result<Self> {
        cfg.dataset.make_absolute()?;
        let session = Self::from_config(id, dir.clone(), cfg)?;
        fs::write(dir.join(CONFIG_FILE), session.learner.config().to_json_pretty()).map_err(|e| Error::io(&dir, e))?;
        File::create(dir.join(LABEL_LOG_FILE)).map_err(|e| Error::io(&dir, e))?;
        Ok(session)
    }

    fn from_config(id: String, dir: PathBuf, cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, test) = cfg.dataset.load()?;
        let train = Arc::new(train);
        let classifier = build_classifier(&cfg, &train)?;
        let learner = Learner::new(cfg, Arc::clone(&train), test.map(Arc::new), classifier)?;
        let pending = PendingBatch {
            batch_id: 0,
            ids: learner.seed_ids().to_vec(),
            query_seconds: 0.0,
        };
        Ok(Self {
            id,
            dir,
            learner,
            status: SessionStatus::AwaitingLabels,
            pending: Some(pending),
            staged: None,
            last_applied: None,
            error: None,
        })
    }

    /// Rebuilds a session by replaying its label log.
    pub fn open(dir: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptSession {
            path: dir.to_path_buf(),
            reason,
        };
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| corrupt("directory name is not a session id".into()))?
            .to_string();
        let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE)).map_err(|e| corrupt(e.to_string()))?;
        let mut session = Self::from_config(id, dir.to_path_buf(), cfg).map_err(|e| corrupt(e.to_string()))?;
        let entries = read_log(&dir.join(LABEL_LOG_FILE)).map_err(|e| corrupt(e.to_string()))?;
        session.replay(&entries).map_err(|e| corrupt(e.to_string()))?;
        Ok(session)
    }

    fn replay(&mut self, entries: &[LogEntry]) -> Result<()> {
        // Entries of one batch are contiguous; a batch may have been appended
        // more than once if a write was interrupted, later lines win.
        let mut start = 0;
        while start < entries.len() {
            let batch_id = entries[start].batch_id;
            let mut end = start;
            while end < entries.len() && entries[end].batch_id == batch_id {
                end += 1;
            }
            let labels: BTreeMap<usize, usize> = entries[start..end].iter().map(|e| (e.instance_id, e.label)).collect();
            let pending = self
                .pending
                .as_ref()
                .ok_or_else(|| Error::Oracle(format!("log has batch {batch_id} after the session finished")))?;
            if pending.batch_id != batch_id {
                return Err(Error::Oracle(format!(
                    "log has batch {batch_id} where batch {} was expected",
                    pending.batch_id
                )));
            }
            let complete = pending.ids.len() == labels.len() && pending.ids.iter().all(|id| labels.contains_key(id));
            if complete {
                let pairs: Vec<(usize, usize)> = labels.into_iter().collect();
                self.stage(batch_id, &pairs)?;
                self.train_pending()?;
                if self.status == SessionStatus::Failed {
                    break;
                }
            } else if end != entries.len() {
                return Err(Error::Oracle(format!("batch {batch_id} is incomplete in the log")));
            }
            start = end;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn status(&self) -> &SessionStatus {
        &self.status
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn pending_batch(&self) -> Option<(u64, &[usize])> {
        self.pending.as_ref().map(|p| (p.batch_id, p.ids.as_slice()))
    }

    fn validate_submission(&self, batch_id: u64, labels: &[(usize, usize)]) -> Result<Option<SubmitOutcome>> {
        if let Some((applied_id, applied)) = &self.last_applied {
            if *applied_id == batch_id {
                let same = labels.len() == applied.len() && labels.iter().all(|(i, l)| applied.get(i) == Some(l));
                if same {
                    return Ok(Some(SubmitOutcome::AlreadyApplied));
                }
            }
        }
        let pending_id = self.pending.as_ref().map(|p| p.batch_id);
        if self.staged.is_some() {
            if pending_id == Some(batch_id) {
                return Err(Error::SessionState(SessionStatus::Training.to_string()));
            }
            return Err(Error::StaleBatch {
                submitted: batch_id,
                pending: pending_id,
            });
        }
        if self.status != SessionStatus::AwaitingLabels {
            return Err(Error::SessionState(self.status.to_string()));
        }
        let pending = self.pending.as_ref().expect("awaiting labels implies a batch");
        if pending.batch_id != batch_id {
            return Err(Error::StaleBatch {
                submitted: batch_id,
                pending: Some(pending.batch_id),
            });
        }
        let schema = self.learner.train_data().schema();
        for &(_, label) in labels {
            schema.check_class(label)?;
        }
        let submitted: BTreeMap<usize, usize> = labels.iter().copied().collect();
        let missing: Vec<usize> = pending
            .ids
            .iter()
            .copied()
            .filter(|i| !submitted.contains_key(i))
            .collect();
        let mut unexpected: Vec<usize> = submitted.keys().copied().filter(|i| !pending.ids.contains(i)).collect();
        if submitted.len() != labels.len() {
            // Duplicate ids in one submission.
            let mut seen = std::collections::HashSet::new();
            unexpected.extend(labels.iter().map(|&(i, _)| i).filter(|i| !seen.insert(*i)));
        }
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(Error::IncompleteLabels { missing, unexpected });
        }
        Ok(None)
    }

    fn stage(&mut self, batch_id: u64, labels: &[(usize, usize)]) -> Result<Option<SubmitOutcome>> {
        if let Some(outcome) = self.validate_submission(batch_id, labels)? {
            return Ok(Some(outcome));
        }
        self.staged = Some(labels.to_vec());
        self.status = SessionStatus::Training;
        Ok(None)
    }

    /// Validates a labeled batch and appends it to the log. The session moves
    /// to `training`; call [`Session::train_pending`] to finish the step.
    pub fn accept_labels(&mut self, batch_id: u64, labels: &[(usize, usize)]) -> Result<SubmitOutcome> {
        if let Some(outcome) = self.validate_submission(batch_id, labels)? {
            return Ok(outcome);
        }
        let timestamp = chrono::Utc::now().to_rfc3339();
        let mut lines = String::new();
        for &(instance_id, label) in labels {
            let entry = LogEntry {
                batch_id,
                instance_id,
                label,
                timestamp: timestamp.clone(),
            };
            lines.push_str(&serde_json::to_string(&entry)?);
            lines.push('\n');
        }
        let path = self.dir.join(LABEL_LOG_FILE);
        let mut log = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        log.write_all(lines.as_bytes())
            .and_then(|_| log.sync_data())
            .map_err(|e| Error::io(&path, e))?;
        self.stage(batch_id, labels)?;
        Ok(SubmitOutcome::Accepted)
    }

    /// Trains on the staged batch and queries the next one.
    pub fn train_pending(&mut self) -> Result<()> {
        let Some(labels) = self.staged.take() else {
            return Ok(());
        };
        let pending = self.pending.take().expect("staged labels imply a pending batch");
        let queried = if pending.batch_id == 0 {
            Vec::new()
        } else {
            pending.ids.clone()
        };
        let step = self
            .learner
            .label_and_train(&labels, queried, pending.query_seconds)
            .map(|_| ())
            .and_then(|_| {
                if self.learner.is_finished() {
                    Ok(None)
                } else {
                    self.learner.query().map(Some)
                }
            });
        self.last_applied = Some((pending.batch_id, labels.into_iter().collect()));
        match step {
            Ok(Some((ids, query_seconds))) => {
                self.pending = Some(PendingBatch {
                    batch_id: pending.batch_id + 1,
                    ids,
                    query_seconds,
                });
                self.status = SessionStatus::AwaitingLabels;
            }
            Ok(None) => self.status = SessionStatus::Finished,
            Err(e) => {
                self.status = SessionStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
        self.write_results()
    }

    /// Accepts a batch and trains synchronously.
    pub fn submit_labels(&mut self, batch_id: u64, labels: &[(usize, usize)]) -> Result<SubmitOutcome> {
        let outcome = self.accept_labels(batch_id, labels)?;
        self.train_pending()?;
        Ok(outcome)
    }

    fn write_results(&self) -> Result<()> {
        let cfg = self.learner.config();
        let path = self.dir.join(RESULTS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for r in self.learner.records() {
            writer.serialize(CsvRow {
                run_id: self.id.clone(),
                dataset: cfg.dataset.name.clone(),
                strategy: cfg.strategy.name.to_string(),
                classifier: cfg.classifier.label().to_string(),
                seed: cfg.protocol.run_seed,
                iteration: r.iteration,
                num_labeled: r.num_labeled,
                accuracy: r.test_accuracy,
                val_loss: r.val_loss,
                query_seconds: r.query_seconds,
            })?;
        }
        writer.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn view(&self) -> SessionView {
        let records = self.learner.records();
        let train = self.learner.train_data();
        let batch = match (&self.status, &self.pending) {
            (SessionStatus::AwaitingLabels, Some(p)) => Some(BatchView {
                batch_id: p.batch_id,
                instances: p
                    .ids
                    .iter()
                    .map(|&id| InstanceView {
                        id,
                        text: train.instances()[id].text.clone(),
                    })
                    .collect(),
            }),
            _ => None,
        };
        SessionView {
            session_id: self.id.clone(),
            status: self.status.clone(),
            iteration: records.len().saturating_sub(1),
            num_labeled: self.learner.pool().labeled().len(),
            class_names: train.schema().class_names().to_vec(),
            curve: records
                .iter()
                .map(|r| CurvePoint {
                    num_labeled: r.num_labeled,
                    accuracy: r.test_accuracy,
                })
                .collect(),
            batch,
            error: self.error.clone(),
        }
    }
}

pub(crate) fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut entries = Vec::new();
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.len();
    for (n, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogEntry>(&line) {
            Ok(entry) => entries.push(entry),
            // A torn final line from an interrupted append is dropped.
            Err(_) if n + 1 == last => break,
            Err(e) => {
                return Err(Error::MalformedRecord {
                    line: n + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(entries)
}
