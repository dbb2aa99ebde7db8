//! A durable labeling session driven in-process.
//!
//! A scripted "annotator" answers each pending batch with gold labels. Halfway
//! through, the store is dropped and reopened from disk: the session resumes
//! exactly where it was, because its label log is replayed.

use al_core::corpus::LabelSchema;
use al_core::oracle::{SessionStatus, SessionStore};
use al_core::runner::{DatasetConfig, ExperimentConfig};
use al_core::synthetic::{class_names, generate, write_jsonl, SyntheticConfig};

fn main() -> al_core::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let data = generate(&SyntheticConfig {
        num_instances: 500,
        seed: 5,
        ..Default::default()
    })?;
    let path = dir.path().join("pool.jsonl");
    write_jsonl(&data, &path)?;

    let mut dataset = DatasetConfig::new("synthetic", &path, LabelSchema::new(class_names(4))?);
    dataset.test_fraction = Some(0.2);
    let mut cfg = ExperimentConfig::new(dataset);
    cfg.protocol.num_iterations = 4;

    let store_dir = dir.path().join("sessions");
    let id = {
        let store = SessionStore::open(&store_dir)?;
        let slot = store.create(cfg)?;
        let id = slot.view().session_id;
        for _ in 0..2 {
            annotate(&store, &id)?;
        }
        id
    };
    println!("-- restart --");
    let store = SessionStore::open(&store_dir)?;
    while store.get(&id)?.view().status != SessionStatus::Finished {
        annotate(&store, &id)?;
    }
    let view = store.get(&id)?.view();
    for p in &view.curve {
        println!(
            "{:>4} labels → accuracy {:.3}",
            p.num_labeled,
            p.accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// Labels the pending batch from the gold labels of the session's own pool.
fn annotate(store: &SessionStore, id: &str) -> al_core::Result<()> {
    let slot = store.get(id)?;
    let view = slot.view();
    let batch = view.batch.expect("session awaits labels");
    let cfg_path = store.root().join(id).join(al_core::oracle::CONFIG_FILE);
    let (pool, _) = ExperimentConfig::load(&cfg_path)?.dataset.load()?;
    let labels: Vec<(usize, usize)> = batch
        .instances
        .iter()
        .map(|inst| Ok((inst.id, pool.gold_label(inst.id)?)))
        .collect::<al_core::Result<_>>()?;
    slot.submit(batch.batch_id, &labels)?;
    let view = slot.view();
    println!(
        "batch {} applied: iteration {}, {} labeled, status {}",
        batch.batch_id, view.iteration, view.num_labeled, view.status
    );
    Ok(())
}
