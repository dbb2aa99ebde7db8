//! Pool-based active learning for text classification.
//!
//! The crate is organized around one loop: train a model on what is labeled,
//! let a query strategy pick the next batch from the unlabeled pool, ask an
//! oracle for labels, and repeat.
//!
//! - [`corpus`]: datasets, splits, the labeled/unlabeled [`corpus::Pool`]
//! - [`features`]: tf-idf vectors and cosine kNN
//! - [`classifier`]: the [`classifier::Classifier`] contract, the built-in
//!   softmax regression, and the external-process adapter
//! - [`strategies`]: PE, BT, LC, CA and RS
//! - [`runner`]: simulated experiments and multi-seed suites
//! - [`metrics`]: AUC, mean ranks, aggregation, reports
//! - [`oracle`]: simulated labels and durable human labeling sessions
//! - [`service`] and [`cli`]: the HTTP API and the `al` command
//! - [`synthetic`]: seeded topic corpora for tests and demos
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod classifier;
pub mod cli;
pub mod corpus;
mod error;
pub mod features;
pub mod metrics;
pub mod oracle;
pub mod runner;
pub mod seed;
pub mod service;
pub mod strategies;
pub mod synthetic;

pub use error::{Error, Result};
