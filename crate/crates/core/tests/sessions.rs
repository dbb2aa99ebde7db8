mod common;

use std::sync::Arc;

use al_core::oracle::{Session, SessionStatus, SessionStore, SubmitOutcome, LABEL_LOG_FILE};
use al_core::runner::{run_simulated, ExperimentConfig};
use al_core::Error;

use common::{gold, session_config};

fn new_session(root: &std::path::Path, cfg: ExperimentConfig) -> Session {
    let dir = root.join("s1");
    std::fs::create_dir(&dir).unwrap();
    Session::create("s1".into(), dir, cfg).unwrap()
}

fn pending_gold(session: &Session) -> (u64, Vec<(usize, usize)>) {
    let (batch_id, ids) = session.pending_batch().expect("pending batch");
    (batch_id, gold(session.learner().train_data(), ids.to_vec()))
}

fn label_pending(session: &mut Session) {
    let (batch_id, labels) = pending_gold(session);
    assert_eq!(
        session.submit_labels(batch_id, &labels).unwrap(),
        SubmitOutcome::Accepted
    );
}

#[test]
fn default_protocol_exposes_the_seed_set_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = session_config(dir.path(), 300, 2);
    cfg.protocol = Default::default();
    cfg.protocol.num_iterations = 2;
    let session = new_session(dir.path(), cfg);
    let view = session.view();
    assert_eq!(view.status, SessionStatus::AwaitingLabels);
    let batch = view.batch.unwrap();
    assert_eq!(batch.batch_id, 0);
    assert_eq!(batch.instances.len(), 25);
    assert!(batch.instances.iter().all(|i| !i.text.is_empty()));
    assert_eq!(view.num_labeled, 0);
    assert!(view.curve.is_empty());
}

#[test]
fn accepted_batch_moves_through_training_to_a_fresh_batch() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let (batch_id, labels) = pending_gold(&session);
    let seed: Vec<usize> = labels.iter().map(|l| l.0).collect();

    assert_eq!(
        session.accept_labels(batch_id, &labels).unwrap(),
        SubmitOutcome::Accepted
    );
    assert_eq!(session.status(), &SessionStatus::Training);
    assert!(session.view().batch.is_none());

    session.train_pending().unwrap();
    let view = session.view();
    assert_eq!(view.status, SessionStatus::AwaitingLabels);
    assert_eq!(view.num_labeled, 10);
    assert_eq!(view.curve.len(), 1);
    assert!(view.curve[0].accuracy.is_some());
    let next = view.batch.unwrap();
    assert_eq!(next.batch_id, 1);
    assert_eq!(next.instances.len(), 10);
    assert!(next.instances.iter().all(|i| !seed.contains(&i.id)));
}

#[test]
fn session_finishes_after_the_configured_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 2));
    for _ in 0..3 {
        label_pending(&mut session);
    }
    let view = session.view();
    assert_eq!(view.status, SessionStatus::Finished);
    assert_eq!(view.num_labeled, 30);
    assert_eq!(view.iteration, 2);
    assert!(view.batch.is_none());
    let err = session.submit_labels(3, &[(0, 0)]).unwrap_err();
    assert!(matches!(err, Error::SessionState(ref s) if s == "finished"), "{err}");
}

#[test]
fn identical_resubmission_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let (batch_id, labels) = pending_gold(&session);
    session.submit_labels(batch_id, &labels).unwrap();
    let log = dir.path().join("s1").join(LABEL_LOG_FILE);
    let before = (std::fs::read(&log).unwrap(), session.view());

    // Order of the pairs does not matter.
    let mut shuffled = labels.clone();
    shuffled.reverse();
    assert_eq!(
        session.submit_labels(batch_id, &shuffled).unwrap(),
        SubmitOutcome::AlreadyApplied
    );
    assert_eq!((std::fs::read(&log).unwrap(), session.view()), before);

    // Different labels for an applied batch are a conflict, not a relabeling.
    let mut changed = labels.clone();
    changed[0].1 = (changed[0].1 + 1) % 3;
    let err = session.submit_labels(batch_id, &changed).unwrap_err();
    assert!(
        matches!(
            err,
            Error::StaleBatch {
                submitted: 0,
                pending: Some(1)
            }
        ),
        "{err}"
    );
}

#[test]
fn incomplete_batch_lists_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let (batch_id, labels) = pending_gold(&session);
    let dropped = labels[4].0;
    let partial: Vec<_> = labels.iter().copied().filter(|l| l.0 != dropped).collect();
    match session.submit_labels(batch_id, &partial).unwrap_err() {
        Error::IncompleteLabels { missing, unexpected } => {
            assert_eq!(missing, vec![dropped]);
            assert!(unexpected.is_empty());
        }
        other => panic!("unexpected error {other}"),
    }

    let mut extra = labels.clone();
    let outsider = (0..200).find(|i| !labels.iter().any(|l| l.0 == *i)).unwrap();
    extra.push((outsider, 0));
    assert!(matches!(
        session.submit_labels(batch_id, &extra),
        Err(Error::IncompleteLabels { ref unexpected, .. }) if unexpected == &vec![outsider]
    ));
    // Nothing was logged or applied.
    assert_eq!(std::fs::read(dir.path().join("s1").join(LABEL_LOG_FILE)).unwrap(), b"");
    assert_eq!(session.view().num_labeled, 0);
}

#[test]
fn out_of_range_class_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let (batch_id, mut labels) = pending_gold(&session);
    labels[0].1 = 3;
    assert!(matches!(
        session.submit_labels(batch_id, &labels),
        Err(Error::InvalidClass {
            index: 3,
            num_classes: 3
        })
    ));
    assert_eq!(session.status(), &SessionStatus::AwaitingLabels);
}

#[test]
fn unknown_batch_is_stale() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let (_, labels) = pending_gold(&session);
    assert!(matches!(
        session.submit_labels(5, &labels),
        Err(Error::StaleBatch {
            submitted: 5,
            pending: Some(0)
        })
    ));
}

#[test]
fn replay_restores_pool_and_pending_batch() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 4));
    label_pending(&mut session);
    label_pending(&mut session);

    let reopened = Session::open(&dir.path().join("s1")).unwrap();
    assert_eq!(reopened.view(), session.view());
    assert_eq!(reopened.learner().pool().labeled(), session.learner().pool().labeled());
    assert_eq!(
        reopened.learner().pool().unlabeled(),
        session.learner().pool().unlabeled()
    );
    assert_eq!(reopened.pending_batch(), session.pending_batch());
    assert_eq!(reopened.learner().records(), session.learner().records());
}

#[test]
fn labels_logged_before_a_crash_are_applied_on_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mut reference = {
        let sub = dir.path().join("ref");
        std::fs::create_dir(&sub).unwrap();
        new_session(&sub, session_config(&sub, 200, 3))
    };
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    label_pending(&mut reference);
    let (batch_id, labels) = pending_gold(&session);
    session.accept_labels(batch_id, &labels).unwrap();
    drop(session); // training never ran

    let reopened = Session::open(&dir.path().join("s1")).unwrap();
    assert_eq!(reopened.status(), &SessionStatus::AwaitingLabels);
    assert_eq!(reopened.pending_batch(), reference.pending_batch());
    assert_eq!(reopened.learner().records(), reference.learner().records());
}

#[test]
fn torn_final_log_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    label_pending(&mut session);
    let log = dir.path().join("s1").join(LABEL_LOG_FILE);
    let mut bytes = std::fs::read(&log).unwrap();
    bytes.extend_from_slice(br#"{"batch_id":1,"instance_id":4"#);
    std::fs::write(&log, bytes).unwrap();

    let reopened = Session::open(&dir.path().join("s1")).unwrap();
    assert_eq!(reopened.view(), session.view());
}

#[test]
fn gold_labeled_session_matches_the_simulated_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session_config(dir.path(), 240, 4);
    let (train, test) = cfg.dataset.load().unwrap();
    let simulated = run_simulated(&cfg, Arc::new(train), Arc::new(test.unwrap())).unwrap();

    let mut session = new_session(dir.path(), cfg);
    while session.status() != &SessionStatus::Finished {
        label_pending(&mut session);
    }
    assert_eq!(session.learner().seed_ids(), simulated.seed_ids.as_slice());
    let queried: Vec<_> = session
        .learner()
        .records()
        .iter()
        .map(|r| r.queried_ids.clone())
        .collect();
    let expected: Vec<_> = simulated.records.iter().map(|r| r.queried_ids.clone()).collect();
    assert_eq!(queried, expected);
    let accuracy: Vec<_> = session.learner().records().iter().map(|r| r.test_accuracy).collect();
    assert_eq!(
        accuracy,
        simulated.records.iter().map(|r| r.test_accuracy).collect::<Vec<_>>()
    );
}

#[test]
fn label_log_only_grows() {
    let dir = tempfile::tempdir().unwrap();
    let mut session = new_session(dir.path(), session_config(dir.path(), 200, 3));
    let log = dir.path().join("s1").join(LABEL_LOG_FILE);
    let mut previous = std::fs::read(&log).unwrap();
    for _ in 0..3 {
        label_pending(&mut session);
        let now = std::fs::read(&log).unwrap();
        assert!(now.len() > previous.len());
        assert!(now.starts_with(&previous));
        previous = now;
    }
}

#[test]
fn store_skips_corrupt_sessions_and_serves_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session_config(dir.path(), 200, 3);
    let root = dir.path().join("store");
    let id = {
        let store = SessionStore::open(&root).unwrap();
        let good = store.create(cfg.clone()).unwrap();
        let bad = store.create(cfg).unwrap();
        let bad_id = bad.view().session_id;
        std::fs::write(root.join(&bad_id).join("config.json"), "{ not json").unwrap();
        good.view().session_id
    };
    let store = SessionStore::open(&root).unwrap();
    let listed = store.list();
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].session_id, id);
    assert!(matches!(store.get("nope"), Err(Error::SessionNotFound(_))));
}

#[test]
fn concurrent_submissions_apply_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(SessionStore::open(dir.path().join("store")).unwrap());
    let slot = store.create(session_config(dir.path(), 200, 3)).unwrap();
    let id = slot.view().session_id;
    let cfg = ExperimentConfig::load(&store.root().join(&id).join("config.json")).unwrap();
    let (pool, _) = cfg.dataset.load().unwrap();
    let batch = slot.view().batch.unwrap();
    let labels = gold(&pool, batch.instances.iter().map(|i| i.id));

    let outcomes: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let slot = Arc::clone(&slot);
                let labels = labels.clone();
                scope.spawn(move || slot.submit(0, &labels))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let accepted = outcomes
        .iter()
        .filter(|o| matches!(o, Ok(SubmitOutcome::Accepted)))
        .count();
    assert_eq!(accepted, 1, "{outcomes:?}");
    for o in &outcomes {
        assert!(matches!(o, Ok(_) | Err(Error::SessionState(_))), "{o:?}");
    }
    let view = slot.view();
    assert_eq!(view.num_labeled, 10);
    assert_eq!(view.batch.unwrap().batch_id, 1);
}
