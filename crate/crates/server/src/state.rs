use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use gems_core::llm::ChatClient;
use gems_core::scoring::RemoteClient;
use gems_core::session::{load_session, new_session_id, save_session, Services, Session, SessionEvent, SCHEMA_VERSION};
use serde::Serialize;
use tokio::sync::broadcast;

use crate::error::ApiError;

/// Event as sent on the stream.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub schema_version: u32,
    pub session_id: String,
    #[serde(flatten)]
    pub event: SessionEvent,
}

pub struct Inner {
    pub session: Session,
    pub services: Services,
}

pub struct SessionSlot {
    inner: RwLock<Inner>,
    events: broadcast::Sender<Envelope>,
    pub cancel: AtomicBool,
    pub llm_busy: AtomicBool,
}

impl SessionSlot {
    fn new(inner: Inner) -> Self {
        SessionSlot {
            inner: RwLock::new(inner),
            events: broadcast::channel(256).0,
            cancel: AtomicBool::new(false),
            llm_busy: AtomicBool::new(false),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Envelope> {
        self.events.subscribe()
    }

    pub fn emit(&self, session_id: &str, events: impl IntoIterator<Item = SessionEvent>) {
        for event in events {
            // no subscribers is fine
            let _ = self.events.send(Envelope {
                schema_version: SCHEMA_VERSION,
                session_id: session_id.to_string(),
                event,
            });
        }
    }
}

#[derive(Default)]
pub struct Options {
    /// Directory holding one JSON file per session.
    pub data_dir: Option<PathBuf>,
    pub llm: Option<Arc<dyn ChatClient>>,
    /// Replaces HTTP clients built from session endpoints.
    pub remote: Option<Arc<dyn RemoteClient>>,
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    pub options: Options,
}

impl AppState {
    pub fn new(options: Options) -> Result<Arc<Self>, ApiError> {
        let state = AppState {
            sessions: RwLock::new(HashMap::new()),
            options,
        };
        if let Some(dir) = &state.options.data_dir {
            fs::create_dir_all(dir).map_err(ApiError::internal)?;
            for entry in fs::read_dir(dir).map_err(ApiError::internal)? {
                let path = entry.map_err(ApiError::internal)?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let session = load_session(&path)?;
                    state.insert(session);
                }
            }
        }
        Ok(Arc::new(state))
    }

    pub fn services_for(&self, session: &Session) -> Services {
        match &self.options.remote {
            Some(r) => Services::with_remote(r.clone()),
            None => Services::for_endpoints(&session.config.endpoints),
        }
    }

    pub fn insert(&self, session: Session) -> Arc<SessionSlot> {
        let services = self.services_for(&session);
        let id = session.id.clone();
        let slot = Arc::new(SessionSlot::new(Inner { session, services }));
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, slot.clone());
        slot
    }

    pub fn remove(&self, slot: &Arc<SessionSlot>) {
        let id = slot.read().session.id.clone();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(&id);
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }

    pub fn fresh_id(&self) -> String {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        loop {
            let id = new_session_id();
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    fn path_for(&self, id: &str) -> Option<PathBuf> {
        self.options.data_dir.as_deref().map(|d| d.join(format!("{id}.json")))
    }

    pub fn persist(&self, session: &Session) -> Result<(), ApiError> {
        match self.path_for(&session.id) {
            Some(p) => save(session, &p),
            None => Ok(()),
        }
    }
}

fn save(session: &Session, path: &Path) -> Result<(), ApiError> {
    save_session(session, path).map_err(ApiError::from)
}

/// Background body of a run. `start_run` has already succeeded.
pub fn run_job(state: Arc<AppState>, slot: Arc<SessionSlot>, generations: usize) {
    let mut completed = 0;
    for _ in 0..generations {
        if slot.cancel.load(Ordering::SeqCst) {
            break;
        }
        let computed = {
            let g = slot.read();
            let step = g.session.next_step();
            step.execute(g.services.context())
        };
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        match computed {
            Ok(snapshot) => {
                let events = session.commit_step(snapshot, services);
                completed += 1;
                // persistence failures must not stop the run
                let _ = state.persist(session);
                slot.emit(&session.id, events);
            }
            Err(e) => {
                let message = gems_core::session::SessionError::from(e).to_string();
                let events = session.fail_run(message, services);
                let _ = state.persist(session);
                slot.emit(&session.id, events);
                return;
            }
        }
    }
    let mut g = slot.write();
    let Inner { session, services } = &mut *g;
    slot.cancel.store(false, Ordering::SeqCst);
    let cancelled = completed < generations;
    let events = session.finish_run(cancelled, services);
    let _ = state.persist(session);
    slot.emit(&session.id, events);
}
