//! Label sources.
//!
//! Benchmarks use [`SimulatedOracle`], which answers with gold labels. Human
//! annotation goes through a [`Session`]: the engine exposes one pending batch
//! at a time, labels are appended to a durable log, and a restarted process
//! rebuilds every session by replaying its log.

mod session;
mod store;

use std::sync::Arc;

pub use session::{
    BatchView, CurvePoint, InstanceView, LogEntry, Session, SessionStatus, SessionView, SubmitOutcome, CONFIG_FILE,
    LABEL_LOG_FILE, RESULTS_FILE,
};
pub use store::{SessionSlot, SessionStore};

use crate::corpus::Dataset;
use crate::error::Result;

/// Anything that can label pool instances on request.
pub trait Oracle {
    /// Labels for `ids`, in the same order.
    fn label(&mut self, ids: &[usize]) -> Result<Vec<usize>>;
}

/// Gold labels of `ids`, in order.
pub fn simulated_label(dataset: &Dataset, ids: &[usize]) -> Result<Vec<usize>> {
    ids.iter().map(|&id| dataset.gold_label(id)).collect()
}

/// Answers from the dataset's gold labels.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    dataset: Arc<Dataset>,
}

impl SimulatedOracle {
    pub fn new(dataset: Arc<Dataset>) -> Self {
        Self { dataset }
    }
}

impl Oracle for SimulatedOracle {
    fn label(&mut self, ids: &[usize]) -> Result<Vec<usize>> {
        simulated_label(&self.dataset, ids)
    }
}
