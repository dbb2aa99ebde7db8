//! Writes a synthetic train/test corpus and a ready-to-run experiment config.
//!
//! ```text
//! cargo run --example synthetic_corpus -- demo
//! cargo run --bin al -- run --config demo/experiment.json --out demo/results
//! cargo run --bin al -- report --manifest demo/results/manifest.json --format markdown
//! ```

use std::path::PathBuf;

use al_core::synthetic::{self, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let train = synthetic::generate(&SyntheticConfig {
        num_instances: 1500,
        seed: 1,
        ..Default::default()
    })?;
    let test = synthetic::generate(&SyntheticConfig {
        num_instances: 400,
        seed: 2,
        ..Default::default()
    })?;
    synthetic::write_jsonl(&train, &dir.join("train.jsonl"))?;
    synthetic::write_jsonl(&test, &dir.join("test.jsonl"))?;

    let config = serde_json::json!({
        "dataset": {
            "name": "synthetic",
            "path": "train.jsonl",
            "test_path": "test.jsonl",
            "class_names": train.schema().class_names(),
        },
        "classifier": { "kind": "builtin" },
        "strategy": { "name": "bt" },
        "loop": { "num_iterations": 10 },
        "suite": { "strategies": ["rs", "bt", "ca"], "seeds": [0, 1] },
    });
    let path = dir.join("experiment.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config)?).expect("write config");
    println!("wrote {} and the corpus next to it", path.display());
    Ok(())
}
