use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthHeader {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub id: String,
    pub url: String,
    #[serde(default)]
    pub auth: Option<AuthHeader>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("no remote client configured")]
    NotConfigured,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// Fetches one property for a batch of canonical SMILES. A `None` value
/// marks a per-molecule failure.
pub trait RemoteClient: Send + Sync {
    fn fetch(&self, endpoint_id: &str, smiles: &[String]) -> Result<BTreeMap<String, Option<f64>>, RemoteError>;
}

#[derive(Serialize)]
struct Request<'a> {
    smiles: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    values: BTreeMap<String, Option<f64>>,
}

/// JSON-over-HTTP client: POST `{"smiles": [..]}`, expect
/// `{"values": {"<smiles>": number | null}}`.
pub struct HttpRemoteClient {
    endpoints: BTreeMap<String, RemoteEndpoint>,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpRemoteClient {
    pub const TIMEOUT: Duration = Duration::from_secs(10);
    pub const RETRIES: u32 = 2;

    pub fn new(endpoints: impl IntoIterator<Item = RemoteEndpoint>) -> Self {
        Self::with_timing(endpoints, Self::TIMEOUT, Duration::from_millis(250))
    }

    pub fn with_timing(endpoints: impl IntoIterator<Item = RemoteEndpoint>, timeout: Duration, backoff: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpRemoteClient {
            endpoints: endpoints.into_iter().map(|e| (e.id.clone(), e)).collect(),
            agent,
            retries: Self::RETRIES,
            backoff,
        }
    }

    fn attempt(&self, endpoint: &RemoteEndpoint, smiles: &[String]) -> Result<Response, RemoteError> {
        let mut req = self.agent.post(&endpoint.url);
        if let Some(auth) = &endpoint.auth {
            req = req.header(auth.name.as_str(), auth.value.as_str());
        }
        let mut resp = req
            .send_json(Request { smiles })
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_json::<Response>()
            .map_err(|e| RemoteError::Malformed(e.to_string()))
    }
}

impl RemoteClient for HttpRemoteClient {
    fn fetch(&self, endpoint_id: &str, smiles: &[String]) -> Result<BTreeMap<String, Option<f64>>, RemoteError> {
        let endpoint = self
            .endpoints
            .get(endpoint_id)
            .ok_or_else(|| RemoteError::UnknownEndpoint(endpoint_id.to_string()))?;
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(endpoint, smiles) {
                Ok(resp) => return Ok(resp.values),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

type ValueFn = dyn Fn(&str) -> Option<f64> + Send + Sync;

/// In-process client driven by a closure; counts requests and molecules.
pub struct ScriptedRemoteClient {
    compute: Box<ValueFn>,
    requests: AtomicUsize,
    molecules: AtomicUsize,
    log: Mutex<Vec<(String, usize)>>,
}

impl ScriptedRemoteClient {
    pub fn new(compute: impl Fn(&str) -> Option<f64> + Send + Sync + 'static) -> Self {
        ScriptedRemoteClient {
            compute: Box::new(compute),
            requests: AtomicUsize::new(0),
            molecules: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn molecules(&self) -> usize {
        self.molecules.load(Ordering::SeqCst)
    }

    /// (endpoint id, batch size) per request.
    pub fn batches(&self) -> Vec<(String, usize)> {
        self.log.lock().expect("log lock").clone()
    }
}

impl RemoteClient for ScriptedRemoteClient {
    fn fetch(&self, endpoint_id: &str, smiles: &[String]) -> Result<BTreeMap<String, Option<f64>>, RemoteError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.molecules.fetch_add(smiles.len(), Ordering::SeqCst);
        self.log
            .lock()
            .expect("log lock")
            .push((endpoint_id.to_string(), smiles.len()));
        Ok(smiles.iter().map(|s| (s.clone(), (self.compute)(s))).collect())
    }
}

/// Successful remote values keyed by (endpoint id, canonical SMILES).
#[derive(Debug, Default)]
pub struct PropertyCache {
    inner: RwLock<HashMap<(String, String), f64>>,
}

impl PropertyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, endpoint_id: &str, smiles: &str) -> Option<f64> {
        self.inner
            .read()
            .expect("cache lock")
            .get(&(endpoint_id.to_string(), smiles.to_string()))
            .copied()
    }

    pub fn insert(&self, endpoint_id: &str, smiles: &str, value: f64) {
        self.inner
            .write()
            .expect("cache lock")
            .insert((endpoint_id.to_string(), smiles.to_string()), value);
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.inner.write().expect("cache lock").clear();
    }
}
