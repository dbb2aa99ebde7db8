//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use al_core::corpus::{Dataset, LabelSchema};
use al_core::runner::{DatasetConfig, ExperimentConfig, Timing};
use al_core::strategies::Strategy;
use al_core::synthetic::{class_names, generate, write_jsonl, SyntheticConfig};

pub fn corpus(n: usize, classes: usize, seed: u64) -> Dataset {
    generate(&SyntheticConfig {
        num_instances: n,
        num_classes: classes,
        seed,
        ..Default::default()
    })
    .expect("synthetic corpus")
}

pub fn train_test(n: usize, classes: usize) -> (Arc<Dataset>, Arc<Dataset>) {
    (Arc::new(corpus(n, classes, 101)), Arc::new(corpus(400, classes, 202)))
}

pub fn schema(classes: usize) -> LabelSchema {
    LabelSchema::new(class_names(classes)).expect("schema")
}

/// A small, fast protocol: 10 seed labels, `iterations` rounds of 10.
pub fn small_config(strategy: Strategy, iterations: usize, classes: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetConfig::new("synthetic", "in-memory", schema(classes)));
    cfg.strategy.name = strategy;
    cfg.protocol.seed_set_size = 10;
    cfg.protocol.query_size = 10;
    cfg.protocol.num_iterations = iterations;
    cfg.protocol.timing = Timing::Off;
    cfg
}

/// Writes a pool file (with a held-out fraction) and returns a session-ready config.
pub fn session_config(dir: &Path, n: usize, iterations: usize) -> ExperimentConfig {
    let path = dir.join("pool.jsonl");
    write_jsonl(&corpus(n, 3, 7), &path).expect("write pool");
    let mut dataset = DatasetConfig::new("pool", &path, schema(3));
    dataset.test_fraction = Some(0.2);
    let mut cfg = ExperimentConfig::new(dataset);
    cfg.protocol.seed_set_size = 10;
    cfg.protocol.query_size = 10;
    cfg.protocol.num_iterations = iterations;
    cfg.protocol.timing = Timing::Off;
    cfg
}

/// Writes train/test files plus an experiment config JSON; returns its path.
pub fn write_experiment(dir: &Path, body: serde_json::Value) -> PathBuf {
    write_jsonl(&corpus(300, 2, 1), &dir.join("train.jsonl")).expect("write train");
    write_jsonl(&corpus(100, 2, 2), &dir.join("test.jsonl")).expect("write test");
    let mut cfg = serde_json::json!({
        "dataset": {
            "name": "toy",
            "path": "train.jsonl",
            "test_path": "test.jsonl",
            "class_names": ["c0", "c1"]
        },
        "loop": {"seed_set_size": 10, "query_size": 10, "num_iterations": 3, "timing": "off"}
    });
    merge(&mut cfg, body);
    let path = dir.join("experiment.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, value) => *slot = value,
    }
}

/// Gold labels for the pending batch of a session over `pool`.
pub fn gold(pool: &Dataset, ids: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    ids.into_iter().map(|id| (id, pool.gold_label(id).unwrap())).collect()
}
