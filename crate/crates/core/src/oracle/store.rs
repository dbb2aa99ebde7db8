use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::session::{Session, SessionView, SubmitOutcome};
use crate::error::{Error, Result};
use crate::runner::ExperimentConfig;

/// A session plus a cached view, so progress reads never wait on training.
pub struct SessionSlot {
    session: Mutex<Session>,
    view: RwLock<SessionView>,
}

impl SessionSlot {
    fn new(session: Session) -> Self {
        let view = RwLock::new(session.view());
        Self {
            session: Mutex::new(session),
            view,
        }
    }

    pub fn view(&self) -> SessionView {
        self.view.read().clone()
    }

    /// Validates and logs a batch; the session then reports `training`.
    pub fn accept(&self, batch_id: u64, labels: &[(usize, usize)]) -> Result<SubmitOutcome> {
        let mut session = self.session.lock();
        let outcome = session.accept_labels(batch_id, labels)?;
        *self.view.write() = session.view();
        Ok(outcome)
    }

    /// Trains on whatever was accepted and queries the next batch. Blocking.
    pub fn train(&self) -> Result<()> {
        let mut session = self.session.lock();
        let result = session.train_pending();
        *self.view.write() = session.view();
        result
    }

    pub fn submit(&self, batch_id: u64, labels: &[(usize, usize)]) -> Result<SubmitOutcome> {
        let outcome = self.accept(batch_id, labels)?;
        self.train()?;
        Ok(outcome)
    }
}

/// All sessions below one directory, one subdirectory each.
pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
}

impl SessionStore {
    /// Opens `root`, creating it if needed, and replays every session in it.
    /// Sessions that fail to replay are skipped with a warning.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
            let entry = entry.map_err(|e| Error::io(&root, e))?;
            if !entry.file_type().map(|t| t.is_dir()).unwrap_or(false) {
                continue;
            }
            match Session::open(&entry.path()) {
                Ok(mut session) => {
                    // Labels logged right before a crash are trained on now.
                    session.train_pending()?;
                    sessions.insert(session.id().to_string(), Arc::new(SessionSlot::new(session)));
                }
                Err(e) => tracing::warn!(path = %entry.path().display(), error = %e, "skipping session"),
            }
        }
        Ok(Self {
            root,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Starts a new session; blocks while the data is loaded.
    pub fn create(&self, cfg: ExperimentConfig) -> Result<Arc<SessionSlot>> {
        let (id, dir) = loop {
            let id = uuid::Uuid::new_v4().simple().to_string();
            let dir = self.root.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&dir, e)),
            }
        };
        let session = match Session::create(id.clone(), dir.clone(), cfg) {
            Ok(s) => s,
            Err(e) => {
                let _ = fs::remove_dir_all(&dir);
                return Err(e);
            }
        };
        let slot = Arc::new(SessionSlot::new(session));
        self.sessions.write().insert(id, Arc::clone(&slot));
        Ok(slot)
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionSlot>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    pub fn list(&self) -> Vec<SessionView> {
        self.sessions.read().values().map(|s| s.view()).collect()
    }
}
