//! Sessions: the human-in-the-loop protocol around the GA. A session holds
//! configuration, scoring-spec history, immutable generation snapshots, the
//! working population, tombstones and an append-only audit log.

mod export;
mod payload;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{parse_dataset, sample, DuplicateWarning};
use crate::ga::{
    crossover, evolve_generation, generation_rng, mutate, rescore, seed_individuals, GaConfig, GaError,
    GenerationSnapshot, GenerationStats, Individual, Origin, ScoreContext,
};
use crate::llm::{llm_edit, ChatClient, LlmEditRequest, LlmEditResult, LlmError, PromptTemplate};
use crate::molgraph::{parse_single, Molecule, SmilesError};
use crate::scoring::{
    FieldError, HttpRemoteClient, PropertyCache, PropertySource, RemoteClient, RemoteEndpoint, ScoringSpec, SpecError,
};

pub use export::{export_csv, export_json, import_json, load_session, save_session, SessionFile};
pub use payload::{
    population_payload, FilterField, IndividualPayload, PayloadOptions, PopulationPayload, RangeFilter, SortKey,
    StructureGraph,
};

/// Version of every JSON document the service emits or accepts.
pub const SCHEMA_VERSION: u32 = 1;

pub const MIN_DATASET_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionError {
    #[error("dataset has {valid} valid unique molecules, at least {MIN_DATASET_SIZE} are required")]
    DatasetTooSmall { valid: usize, errors: Vec<LineDiagnostic> },
    #[error("unknown sample dataset `{name}`")]
    UnknownSample { name: String },
    #[error("the session already has a dataset")]
    DatasetAlreadyLoaded,
    #[error("the session has no dataset yet")]
    NoDataset,
    #[error("validation failed")]
    ValidationFailed { fields: Vec<FieldError> },
    #[error("a run is already in progress")]
    AlreadyRunning,
    #[error("interventions are not allowed while a run is in progress")]
    Busy,
    #[error("unknown canonical key `{key}`")]
    UnknownKey { key: String },
    #[error("unknown generation {index}")]
    UnknownGeneration { index: usize },
    #[error("invalid structure: {error}")]
    InvalidEdit { error: SmilesError },
    #[error("`{key}` was deleted and cannot be re-introduced")]
    Tombstoned { key: String },
    #[error("operator produced no valid offspring")]
    OperatorRejected,
    #[error("population collapsed: every candidate is tombstoned or invalid")]
    PopulationCollapse,
    #[error("{error}")]
    Llm { error: LlmError },
    #[error("storage error: {message}")]
    Storage { message: String },
}

impl From<LlmError> for SessionError {
    fn from(error: LlmError) -> Self {
        SessionError::Llm { error }
    }
}

impl From<SpecError> for SessionError {
    fn from(e: SpecError) -> Self {
        let SpecError::ValidationFailed { fields } = e;
        SessionError::ValidationFailed { fields }
    }
}

impl From<GaError> for SessionError {
    fn from(e: GaError) -> Self {
        match e {
            GaError::InvalidConfig { fields } => SessionError::ValidationFailed { fields },
            GaError::Rejected => SessionError::OperatorRejected,
            GaError::NoValidCandidates | GaError::PopulationCollapse => SessionError::PopulationCollapse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub text: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub accepted: usize,
    pub duplicates: Vec<DuplicateWarning>,
    pub errors: Vec<LineDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Text { text: String },
    Sample { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub version: u64,
    pub ga: GaConfig,
    #[serde(default)]
    pub endpoints: Vec<RemoteEndpoint>,
    #[serde(default)]
    pub prompt_template: PromptTemplate,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            version: 1,
            ga: GaConfig::default(),
            endpoints: Vec::new(),
            prompt_template: PromptTemplate::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let mut fields = match self.ga.validate() {
            Ok(()) => Vec::new(),
            Err(GaError::InvalidConfig { fields }) => fields
                .into_iter()
                .map(|f| FieldError {
                    field: format!("ga.{}", f.field),
                    message: f.message,
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        for (i, e) in self.endpoints.iter().enumerate() {
            if e.id.is_empty() {
                fields.push(FieldError {
                    field: format!("endpoints[{i}].id"),
                    message: "must not be empty".into(),
                });
            }
            if self.endpoints[..i].iter().any(|o| o.id == e.id) {
                fields.push(FieldError {
                    field: format!("endpoints[{i}].id"),
                    message: "duplicate endpoint id".into(),
                });
            }
            if !(e.url.starts_with("http://") || e.url.starts_with("https://")) {
                fields.push(FieldError {
                    field: format!("endpoints[{i}].url"),
                    message: "must be an http or https URL".into(),
                });
            }
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(SessionError::ValidationFailed { fields })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunState {
    #[default]
    Idle,
    Running {
        completed: usize,
        total: usize,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub deleted_at_ms: u64,
    /// Audit sequence number of the deleting action.
    pub audit_seq: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Delete,
    ManualMutate,
    ManualCrossover,
    EditStructure,
    LlmEdit,
    SpecUpdate,
    ConfigUpdate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultingKeys {
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub seq: usize,
    pub action: Action,
    pub payload: serde_json::Value,
    pub resulting_keys: ResultingKeys,
    /// Index of the latest snapshot when the action was applied.
    pub generation: usize,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    #[default]
    Replace,
    Add,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Intervention {
    Delete {
        keys: Vec<String>,
    },
    ManualMutate {
        key: String,
    },
    ManualCrossover {
        keys: [String; 2],
    },
    EditStructure {
        #[serde(default)]
        key: Option<String>,
        smiles: String,
        #[serde(default)]
        mode: EditMode,
        #[serde(default)]
        tombstone_original: bool,
        /// The structure came from a reviewed LLM candidate.
        #[serde(default)]
        from_llm: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionOutcome {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub tombstoned: Vec<String>,
    /// The produced structure was already present; nothing was added.
    pub duplicate: bool,
    pub population_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    RunStarted {
        generations: usize,
    },
    Generation {
        #[serde(flatten)]
        stats: GenerationStats,
        exhausted: bool,
        spec_version: u64,
    },
    SpecUpdated {
        version: u64,
    },
    ConfigUpdated {
        version: u64,
    },
    RunFinished {
        completed: usize,
        cancelled: bool,
    },
    RunFailed {
        completed: usize,
        message: String,
    },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::RunStarted { .. } => "run_started",
            SessionEvent::Generation { .. } => "generation",
            SessionEvent::SpecUpdated { .. } => "spec_updated",
            SessionEvent::ConfigUpdated { .. } => "config_updated",
            SessionEvent::RunFinished { .. } => "run_finished",
            SessionEvent::RunFailed { .. } => "run_failed",
        }
    }
}

/// Scoring resources that live beside a session but are not persisted.
pub struct Services {
    pub cache: PropertyCache,
    remote: Option<Arc<dyn RemoteClient>>,
    injected: bool,
}

impl Default for Services {
    fn default() -> Self {
        Services {
            cache: PropertyCache::new(),
            remote: None,
            injected: false,
        }
    }
}

impl Services {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_endpoints(endpoints: &[RemoteEndpoint]) -> Self {
        let mut s = Services::new();
        s.update_endpoints(endpoints);
        s
    }

    /// Uses a fixed client regardless of the configured endpoints.
    pub fn with_remote(remote: Arc<dyn RemoteClient>) -> Self {
        Services {
            cache: PropertyCache::new(),
            remote: Some(remote),
            injected: true,
        }
    }

    pub fn update_endpoints(&mut self, endpoints: &[RemoteEndpoint]) {
        self.cache.clear();
        if self.injected {
            return;
        }
        self.remote = (!endpoints.is_empty())
            .then(|| Arc::new(HttpRemoteClient::new(endpoints.iter().cloned())) as Arc<dyn RemoteClient>);
    }

    pub fn context(&self) -> ScoreContext<'_> {
        ScoreContext {
            cache: &self.cache,
            remote: self.remote.as_deref(),
        }
    }
}

/// Everything needed to compute one generation outside the session lock.
#[derive(Debug, Clone)]
pub struct StepInput {
    pub index: usize,
    pub population: Vec<Individual>,
    pub config: GaConfig,
    pub spec: ScoringSpec,
    pub tombstones: BTreeSet<String>,
}

impl StepInput {
    pub fn execute(&self, ctx: ScoreContext<'_>) -> Result<GenerationSnapshot, GaError> {
        let mut rng = generation_rng(self.config.rng_seed, self.index);
        evolve_generation(
            &self.population,
            self.index,
            &self.config,
            &self.spec,
            &|k| self.tombstones.contains(k),
            ctx,
            &mut rng,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub completed: usize,
    pub cancelled: bool,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn new_session_id() -> String {
    format!("s{:016x}", rand::random::<u64>())
}

/// Parses, validates and canonicalizes a user-supplied structure. Manual
/// edits and LLM candidates share this path.
pub fn structure_from_smiles(text: &str) -> Result<Molecule, SmilesError> {
    parse_single(text.trim()).map(|m| m.canonicalized())
}

/// RNG for manual operators, independent of the generation streams.
fn manual_rng(seed: u64, audit_len: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_6e75_616c_0000);
    rng.set_stream(audit_len as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at_ms: u64,
    pub config: SessionConfig,
    pub spec: ScoringSpec,
    pub spec_history: Vec<ScoringSpec>,
    pub snapshots: Vec<GenerationSnapshot>,
    pub population: Vec<Individual>,
    pub tombstones: BTreeMap<String, Tombstone>,
    pub audit_log: Vec<InterventionRecord>,
    #[serde(default)]
    pub dataset: DatasetReport,
    #[serde(skip)]
    pub run_state: RunState,
    #[serde(skip)]
    pending_spec: Option<ScoringSpec>,
    #[serde(skip)]
    pending_config: Option<SessionConfig>,
}

impl Session {
    /// An empty session awaiting a dataset.
    pub fn new(id: impl Into<String>, config: SessionConfig, spec: ScoringSpec) -> Result<Self, SessionError> {
        config.validate()?;
        spec.validate()?;
        let mut config = config;
        config.version = config.version.max(1);
        let mut spec = spec;
        spec.version = spec.version.max(1);
        check_endpoints(&spec, &config)?;
        Ok(Session {
            id: id.into(),
            created_at_ms: now_ms(),
            config,
            spec_history: vec![spec.clone()],
            spec,
            snapshots: Vec::new(),
            population: Vec::new(),
            tombstones: BTreeMap::new(),
            audit_log: Vec::new(),
            dataset: DatasetReport::default(),
            run_state: RunState::Idle,
            pending_spec: None,
            pending_config: None,
        })
    }

    /// Creates a session and loads its seed dataset as generation 0.
    pub fn create(
        id: impl Into<String>,
        dataset: &DatasetSource,
        config: SessionConfig,
        spec: ScoringSpec,
        services: &Services,
    ) -> Result<Self, SessionError> {
        let mut s = Session::new(id, config, spec)?;
        s.load_dataset(dataset, services)?;
        Ok(s)
    }

    pub fn load_dataset(&mut self, source: &DatasetSource, services: &Services) -> Result<&DatasetReport, SessionError> {
        if !self.snapshots.is_empty() {
            return Err(SessionError::DatasetAlreadyLoaded);
        }
        let text = match source {
            DatasetSource::Text { text } => text.as_str(),
            DatasetSource::Sample { name } => {
                sample(name).ok_or_else(|| SessionError::UnknownSample { name: name.clone() })?
            }
        };
        let parsed = parse_dataset(text);
        let errors: Vec<LineDiagnostic> = parsed
            .errors
            .iter()
            .map(|e| LineDiagnostic {
                line: e.line,
                text: e.text.clone(),
                offset: e.error.offset,
                message: e.error.kind.to_string(),
            })
            .collect();
        if parsed.molecules.len() < MIN_DATASET_SIZE {
            return Err(SessionError::DatasetTooSmall {
                valid: parsed.molecules.len(),
                errors,
            });
        }
        let individuals = seed_individuals(parsed.molecules, &self.spec, services.context());
        self.dataset = DatasetReport {
            accepted: individuals.len(),
            duplicates: parsed.duplicates,
            errors,
        };
        self.population = individuals.clone();
        self.snapshots.push(GenerationSnapshot {
            index: 0,
            individuals,
            config_used: self.config.ga.clone(),
            spec_version_used: self.spec.version,
            exhausted: false,
        });
        Ok(&self.dataset)
    }

    pub fn is_running(&self) -> bool {
        matches!(self.run_state, RunState::Running { .. })
    }

    pub fn current_generation(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    pub fn is_tombstoned(&self, key: &str) -> bool {
        self.tombstones.contains_key(key)
    }

    pub fn find(&self, key: &str) -> Option<usize> {
        self.population.iter().position(|i| i.key() == key)
    }

    fn require(&self, key: &str) -> Result<usize, SessionError> {
        self.find(key)
            .ok_or_else(|| SessionError::UnknownKey { key: key.to_string() })
    }

    fn record(&mut self, action: Action, payload: serde_json::Value, keys: ResultingKeys) {
        let seq = self.audit_log.len();
        self.audit_log.push(InterventionRecord {
            seq,
            action,
            payload,
            resulting_keys: keys,
            generation: self.current_generation(),
            timestamp_ms: now_ms(),
        });
    }

    pub fn pending_spec(&self) -> Option<&ScoringSpec> {
        self.pending_spec.as_ref()
    }

    pub fn pending_config(&self) -> Option<&SessionConfig> {
        self.pending_config.as_ref()
    }

    /// Validates and installs a new spec, or queues it while a run is in
    /// progress. Returns the version the scoring spec receives.
    pub fn update_spec(&mut self, new_spec: ScoringSpec, services: &Services) -> Result<u64, SessionError> {
        new_spec.validate()?;
        let config = self.pending_config.as_ref().unwrap_or(&self.config);
        check_endpoints(&new_spec, config)?;
        let latest = self.pending_spec.as_ref().map_or(self.spec.version, |s| s.version);
        let mut spec = new_spec;
        spec.version = latest + 1;
        let version = spec.version;
        if self.is_running() {
            self.pending_spec = Some(spec);
        } else {
            self.apply_spec(spec, services);
        }
        Ok(version)
    }

    fn apply_spec(&mut self, spec: ScoringSpec, services: &Services) {
        let payload = serde_json::to_value(&spec).expect("spec serializes");
        self.spec = spec.clone();
        self.spec_history.push(spec);
        rescore(&mut self.population, &self.spec, services.context());
        self.record(Action::SpecUpdate, payload, ResultingKeys::default());
    }

    pub fn update_config(&mut self, new_config: SessionConfig, services: &mut Services) -> Result<u64, SessionError> {
        new_config.validate()?;
        let spec = self.pending_spec.as_ref().unwrap_or(&self.spec);
        check_endpoints(spec, &new_config)?;
        let latest = self.pending_config.as_ref().map_or(self.config.version, |c| c.version);
        let mut config = new_config;
        config.version = latest + 1;
        let version = config.version;
        if self.is_running() {
            self.pending_config = Some(config);
        } else {
            self.apply_config(config, services);
        }
        Ok(version)
    }

    fn apply_config(&mut self, config: SessionConfig, services: &mut Services) {
        if config.endpoints != self.config.endpoints {
            services.update_endpoints(&config.endpoints);
        }
        let payload = serde_json::to_value(&config).expect("config serializes");
        self.config = config;
        self.record(Action::ConfigUpdate, payload, ResultingKeys::default());
    }

    /// Applies queued updates; returns the events to publish.
    fn apply_pending(&mut self, services: &mut Services) -> Vec<SessionEvent> {
        let mut events = Vec::new();
        if let Some(config) = self.pending_config.take() {
            let version = config.version;
            self.apply_config(config, services);
            events.push(SessionEvent::ConfigUpdated { version });
        }
        if let Some(spec) = self.pending_spec.take() {
            let version = spec.version;
            self.apply_spec(spec, services);
            events.push(SessionEvent::SpecUpdated { version });
        }
        events
    }

    fn new_individual(&self, molecule: Molecule, origin: Origin, services: &Services) -> Individual {
        let report = services
            .context()
            .score(std::slice::from_ref(&molecule), &self.spec)
            .pop()
            .expect("one report");
        Individual {
            molecule,
            report,
            origin,
            generation_born: self.current_generation(),
        }
    }

    /// Applies one manual intervention between runs.
    pub fn intervene(&mut self, action: Intervention, services: &Services) -> Result<InterventionOutcome, SessionError> {
        if self.is_running() {
            return Err(SessionError::Busy);
        }
        if self.snapshots.is_empty() {
            return Err(SessionError::NoDataset);
        }
        let payload = serde_json::to_value(&action).expect("intervention serializes");
        let mut outcome = InterventionOutcome {
            added: Vec::new(),
            removed: Vec::new(),
            tombstoned: Vec::new(),
            duplicate: false,
            population_size: 0,
        };
        let kind = match action {
            Intervention::Delete { keys } => {
                let unique: BTreeSet<&String> = keys.iter().collect();
                for k in &unique {
                    self.require(k)?;
                }
                let seq = self.audit_log.len();
                for k in keys.iter().filter(|k| unique.contains(k)) {
                    if let Some(i) = self.find(k) {
                        self.population.remove(i);
                        self.tombstones.insert(
                            k.clone(),
                            Tombstone {
                                deleted_at_ms: now_ms(),
                                audit_seq: seq,
                            },
                        );
                        outcome.removed.push(k.clone());
                        outcome.tombstoned.push(k.clone());
                    }
                }
                Action::Delete
            }
            Intervention::ManualMutate { key } => {
                let i = self.require(&key)?;
                let mut rng = manual_rng(self.config.ga.rng_seed, self.audit_log.len());
                let (mol, edit) = mutate(
                    &self.population[i].molecule,
                    &mut rng,
                    self.config.ga.max_operator_retries,
                )?;
                let origin = Origin::Mutation {
                    parent: key,
                    edit: edit.kind(),
                };
                self.add_if_novel(mol, origin, services, &mut outcome)?;
                Action::ManualMutate
            }
            Intervention::ManualCrossover { keys } => {
                let a = self.require(&keys[0])?;
                let b = self.require(&keys[1])?;
                let mut rng = manual_rng(self.config.ga.rng_seed, self.audit_log.len());
                let (mol, _) = crossover(
                    &self.population[a].molecule,
                    &self.population[b].molecule,
                    &mut rng,
                    self.config.ga.max_operator_retries,
                )?;
                let origin = Origin::Crossover {
                    parents: keys,
                    mutation: None,
                };
                self.add_if_novel(mol, origin, services, &mut outcome)?;
                Action::ManualCrossover
            }
            Intervention::EditStructure {
                key,
                smiles,
                mode,
                tombstone_original,
                from_llm,
            } => {
                let original = match &key {
                    Some(k) => Some(self.require(k)?),
                    None if mode == EditMode::Replace => {
                        return Err(SessionError::ValidationFailed {
                            fields: vec![FieldError {
                                field: "key".into(),
                                message: "replace mode needs the key of the edited molecule".into(),
                            }],
                        })
                    }
                    None => None,
                };
                let mol = structure_from_smiles(&smiles).map_err(|error| SessionError::InvalidEdit { error })?;
                let new_key = mol.canonical_key().to_string();
                if self.is_tombstoned(&new_key) {
                    return Err(SessionError::Tombstoned { key: new_key });
                }
                if self.find(&new_key).is_some() {
                    outcome.duplicate = true;
                } else {
                    let origin = if from_llm {
                        Origin::Llm {
                            parents: key.iter().cloned().collect(),
                        }
                    } else {
                        Origin::ManualEdit { source: key.clone() }
                    };
                    let individual = self.new_individual(mol, origin, services);
                    match (mode, original) {
                        (EditMode::Replace, Some(i)) => {
                            let old = std::mem::replace(&mut self.population[i], individual);
                            outcome.removed.push(old.key().to_string());
                        }
                        _ => {
                            if let (true, Some(i)) = (tombstone_original, original) {
                                let old = self.population.remove(i);
                                outcome.removed.push(old.key().to_string());
                            }
                            self.population.push(individual);
                        }
                    }
                    outcome.added.push(new_key);
                    if tombstone_original {
                        let seq = self.audit_log.len();
                        for k in &outcome.removed {
                            self.tombstones.insert(
                                k.clone(),
                                Tombstone {
                                    deleted_at_ms: now_ms(),
                                    audit_seq: seq,
                                },
                            );
                            outcome.tombstoned.push(k.clone());
                        }
                    }
                }
                Action::EditStructure
            }
        };
        self.record(
            kind,
            payload,
            ResultingKeys {
                added: outcome.added.clone(),
                removed: outcome.removed.clone(),
            },
        );
        outcome.population_size = self.population.len();
        Ok(outcome)
    }

    fn add_if_novel(
        &mut self,
        mol: Molecule,
        origin: Origin,
        services: &Services,
        outcome: &mut InterventionOutcome,
    ) -> Result<(), SessionError> {
        let key = mol.canonical_key().to_string();
        if self.find(&key).is_some() || self.is_tombstoned(&key) {
            outcome.duplicate = true;
            return Ok(());
        }
        let individual = self.new_individual(mol, origin, services);
        self.population.push(individual);
        outcome.added.push(key);
        Ok(())
    }

    /// Asks the text-generation client for candidates. Nothing is added to
    /// the population; accepted candidates go through `EditStructure`.
    pub fn llm_edit(
        &mut self,
        request: &LlmEditRequest,
        client: &dyn ChatClient,
        services: &Services,
    ) -> Result<LlmEditResult, SessionError> {
        let result = self.llm_candidates(request, client, services)?;
        self.record_llm_edit(request, &result);
        result.map_err(|error| SessionError::Llm { error })
    }

    /// The read-only half of `llm_edit`. The outer error covers requests
    /// that never reached the client; the inner one is recorded.
    pub fn llm_candidates(
        &self,
        request: &LlmEditRequest,
        client: &dyn ChatClient,
        services: &Services,
    ) -> Result<Result<LlmEditResult, LlmError>, SessionError> {
        if self.is_running() {
            return Err(SessionError::Busy);
        }
        request.validate().map_err(|error| SessionError::Llm { error })?;
        let mut inputs = Vec::new();
        for k in request.mode.keys() {
            inputs.push(&self.population[self.require(k)?].molecule);
        }
        let known = |k: &str| self.find(k).is_some() || self.is_tombstoned(k);
        Ok(llm_edit(
            request,
            &inputs,
            &self.config.prompt_template,
            client,
            &structure_from_smiles,
            &known,
            &self.spec,
            services.context(),
        ))
    }

    pub fn record_llm_edit(&mut self, request: &LlmEditRequest, result: &Result<LlmEditResult, LlmError>) {
        let payload = serde_json::json!({
            "request": request,
            "prompt_version": self.config.prompt_template.version,
            "outcome": match result {
                Ok(r) => serde_json::json!({
                    "raw_response_id": r.raw_response_id,
                    "accepted": r.accepted.iter().map(|a| a.molecule.canonical_key()).collect::<Vec<_>>(),
                    "rejected": r.rejected,
                }),
                Err(e) => serde_json::to_value(e).expect("error serializes"),
            },
        });
        self.record(Action::LlmEdit, payload, ResultingKeys::default());
    }

    pub fn start_run(&mut self, generations: usize) -> Result<SessionEvent, SessionError> {
        if self.is_running() {
            return Err(SessionError::AlreadyRunning);
        }
        if self.snapshots.is_empty() {
            return Err(SessionError::NoDataset);
        }
        if generations == 0 {
            return Err(SessionError::ValidationFailed {
                fields: vec![FieldError {
                    field: "generations".into(),
                    message: "must be at least 1".into(),
                }],
            });
        }
        self.run_state = RunState::Running {
            completed: 0,
            total: generations,
        };
        Ok(SessionEvent::RunStarted { generations })
    }

    pub fn next_step(&self) -> StepInput {
        StepInput {
            index: self.snapshots.len(),
            population: self.population.clone(),
            config: self.config.ga.clone(),
            spec: self.spec.clone(),
            tombstones: self.tombstones.keys().cloned().collect(),
        }
    }

    /// Publishes a computed generation and applies queued updates at the
    /// boundary. Returns the events in publication order.
    pub fn commit_step(&mut self, snapshot: GenerationSnapshot, services: &mut Services) -> Vec<SessionEvent> {
        debug_assert_eq!(snapshot.index, self.snapshots.len());
        let event = SessionEvent::Generation {
            stats: snapshot.stats(),
            exhausted: snapshot.exhausted,
            spec_version: snapshot.spec_version_used,
        };
        self.population = snapshot.individuals.clone();
        self.snapshots.push(snapshot);
        if let RunState::Running { completed, .. } = &mut self.run_state {
            *completed += 1;
        }
        let mut events = vec![event];
        events.extend(self.apply_pending(services));
        events
    }

    pub fn finish_run(&mut self, cancelled: bool, services: &mut Services) -> Vec<SessionEvent> {
        let completed = match self.run_state {
            RunState::Running { completed, .. } => completed,
            _ => 0,
        };
        self.run_state = RunState::Idle;
        let mut events = self.apply_pending(services);
        events.push(SessionEvent::RunFinished { completed, cancelled });
        events
    }

    pub fn fail_run(&mut self, message: String, services: &mut Services) -> Vec<SessionEvent> {
        let completed = match self.run_state {
            RunState::Running { completed, .. } => completed,
            _ => 0,
        };
        self.run_state = RunState::Error {
            message: message.clone(),
        };
        let mut events = self.apply_pending(services);
        events.push(SessionEvent::RunFailed { completed, message });
        events
    }

    /// Runs generations in the calling thread. `cancel` is checked at every
    /// generation boundary; `on_event` sees the session after each event.
    pub fn run(
        &mut self,
        generations: usize,
        services: &mut Services,
        cancel: &AtomicBool,
        mut on_event: impl FnMut(&Session, &SessionEvent),
    ) -> Result<RunSummary, SessionError> {
        let started = self.start_run(generations)?;
        on_event(self, &started);
        for _ in 0..generations {
            if cancel.load(Ordering::SeqCst) {
                break;
            }
            match self.next_step().execute(services.context()) {
                Ok(snapshot) => {
                    for e in self.commit_step(snapshot, services) {
                        on_event(self, &e);
                    }
                }
                Err(e) => {
                    let err = SessionError::from(e);
                    for ev in self.fail_run(err.to_string(), services) {
                        on_event(self, &ev);
                    }
                    return Err(err);
                }
            }
        }
        let cancelled = match self.run_state {
            RunState::Running { completed, total } => completed < total,
            _ => false,
        };
        let events = self.finish_run(cancelled, services);
        let mut summary = RunSummary {
            completed: 0,
            cancelled,
        };
        for e in &events {
            if let SessionEvent::RunFinished { completed, .. } = e {
                summary.completed = *completed;
            }
            on_event(self, e);
        }
        Ok(summary)
    }

    /// Reconstructs the working population's keys from snapshot 0, later
    /// snapshots and the audit log.
    pub fn replay_population_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = Vec::new();
        for (g, snap) in self.snapshots.iter().enumerate() {
            keys = snap.keys().map(str::to_string).collect();
            for r in self.audit_log.iter().filter(|r| r.generation == g) {
                let replaced_in_place = r.action == Action::EditStructure
                    && r.payload.get("mode").and_then(|m| m.as_str()) == Some("replace")
                    && r.resulting_keys.removed.len() == 1
                    && r.resulting_keys.added.len() == 1;
                if replaced_in_place {
                    if let Some(i) = keys.iter().position(|k| *k == r.resulting_keys.removed[0]) {
                        keys[i] = r.resulting_keys.added[0].clone();
                    }
                    continue;
                }
                keys.retain(|k| !r.resulting_keys.removed.contains(k));
                keys.extend(r.resulting_keys.added.iter().cloned());
            }
        }
        keys
    }

    pub fn snapshot(&self, index: usize) -> Result<&GenerationSnapshot, SessionError> {
        self.snapshots
            .get(index)
            .ok_or(SessionError::UnknownGeneration { index })
    }
}

fn check_endpoints(spec: &ScoringSpec, config: &SessionConfig) -> Result<(), SessionError> {
    let fields: Vec<FieldError> = spec
        .terms
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match &t.source {
            PropertySource::Remote { endpoint_id } if !config.endpoints.iter().any(|e| &e.id == endpoint_id) => {
                Some(FieldError {
                    field: format!("terms[{i}].source.endpoint_id"),
                    message: format!("no endpoint `{endpoint_id}` is registered in the session config"),
                })
            }
            _ => None,
        })
        .collect();
    if fields.is_empty() {
        Ok(())
    } else {
        Err(SessionError::ValidationFailed { fields })
    }
}
