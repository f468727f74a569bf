use std::convert::Infallible;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use gems_core::dataset::SAMPLES;
use gems_core::llm::{LlmEditRequest, LlmError};
use gems_core::molgraph::layout_2d;
use gems_core::scoring::{FieldError, ScoringSpec, SpecError};
use gems_core::session::{
    export_csv, export_json, import_json, population_payload, structure_from_smiles, DatasetSource, Intervention,
    PayloadOptions, RangeFilter, Session, SessionConfig, SessionError, SortKey, StructureGraph, SCHEMA_VERSION,
};
use gems_core::substructure::parse_pattern;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::state::{run_job, AppState, Inner, SessionSlot};

type ApiResult<T = Json<Value>> = Result<T, ApiError>;
type AppRef = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/samples", get(samples))
        .route("/sessions", post(create_session))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/dataset", post(load_dataset))
        .route("/sessions/{id}/config", get(get_config).put(put_config))
        .route("/sessions/{id}/spec", get(get_spec).put(put_spec))
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/generations/{k}", get(generation))
        .route("/sessions/{id}/population", get(population))
        .route("/sessions/{id}/interventions", post(intervene))
        .route("/sessions/{id}/llm-edit", post(llm_edit))
        .route("/sessions/{id}/audit", get(audit))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/events", get(events))
        .route("/validate/smiles", post(validate_smiles))
        .route("/validate/pattern", post(validate_pattern))
        .route("/validate/spec", post(validate_spec))
        .with_state(state)
}

fn versioned(mut v: Value) -> Json<Value> {
    if let Some(obj) = v.as_object_mut() {
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Json(v)
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("response serializes")
}

/// Runs session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn samples() -> Json<Value> {
    versioned(json!({ "samples": SAMPLES }))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct CreateRequest {
    dataset: Option<DatasetSource>,
    config: Option<SessionConfig>,
    spec: Option<ScoringSpec>,
}

fn summary(session: &Session) -> Value {
    json!({
        "session_id": session.id,
        "created_at_ms": session.created_at_ms,
        "run_state": session.run_state,
        "generations": session.snapshots.len(),
        "current_generation": session.current_generation(),
        "population_size": session.population.len(),
        "spec_version": session.spec.version,
        "config_version": session.config.version,
        "tombstones": session.tombstones.len(),
        "audit_records": session.audit_log.len(),
        "dataset": session.dataset,
    })
}

async fn create_session(State(state): AppRef, body: Option<Json<CreateRequest>>) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|b| b.0).unwrap_or_default();
    blocking(move || {
        let session = Session::new(
            state.fresh_id(),
            req.config.unwrap_or_default(),
            req.spec.unwrap_or_default(),
        )?;
        let slot = state.insert(session);
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        if let Some(d) = &req.dataset {
            if let Err(e) = session.load_dataset(d, services) {
                drop(g);
                state.remove(&slot);
                return Err(e.into());
            }
        }
        state.persist(session)?;
        Ok((StatusCode::CREATED, versioned(summary(session))))
    })
    .await
}

async fn import_session(State(state): AppRef, body: String) -> ApiResult<(StatusCode, Json<Value>)> {
    blocking(move || {
        let mut session = import_json(&body)?;
        session.id = state.fresh_id();
        let slot = state.insert(session);
        let g = slot.read();
        state.persist(&g.session)?;
        Ok((StatusCode::CREATED, versioned(summary(&g.session))))
    })
    .await
}

async fn session_summary(State(state): AppRef, Path(id): Path<String>) -> ApiResult {
    let slot = state.get(&id)?;
    let g = slot.read();
    Ok(versioned(summary(&g.session)))
}

async fn load_dataset(State(state): AppRef, Path(id): Path<String>, Json(source): Json<DatasetSource>) -> ApiResult {
    let slot = state.get(&id)?;
    blocking(move || {
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        if session.is_running() {
            return Err(SessionError::Busy.into());
        }
        let report = session.load_dataset(&source, services)?.clone();
        state.persist(session)?;
        Ok(versioned(json!({ "dataset": report, "population_size": session.population.len() })))
    })
    .await
}

async fn get_config(State(state): AppRef, Path(id): Path<String>) -> ApiResult {
    let slot = state.get(&id)?;
    let g = slot.read();
    Ok(versioned(json!({
        "config": g.session.config,
        "pending": g.session.pending_config(),
    })))
}

async fn put_config(State(state): AppRef, Path(id): Path<String>, Json(config): Json<SessionConfig>) -> ApiResult {
    let slot = state.get(&id)?;
    blocking(move || {
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        let version = session.update_config(config, services)?;
        state.persist(session)?;
        Ok(versioned(json!({ "version": version, "queued": session.is_running() })))
    })
    .await
}

async fn get_spec(State(state): AppRef, Path(id): Path<String>) -> ApiResult {
    let slot = state.get(&id)?;
    let g = slot.read();
    Ok(versioned(json!({
        "spec": g.session.spec,
        "history": g.session.spec_history,
        "pending": g.session.pending_spec(),
    })))
}

async fn put_spec(State(state): AppRef, Path(id): Path<String>, Json(spec): Json<ScoringSpec>) -> ApiResult {
    let slot = state.get(&id)?;
    blocking(move || {
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        let version = session.update_spec(spec, services)?;
        state.persist(session)?;
        Ok(versioned(json!({ "version": version, "queued": session.is_running() })))
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct RunRequest {
    generations: Option<usize>,
}

async fn run(
    State(state): AppRef,
    Path(id): Path<String>,
    body: Option<Json<RunRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let slot = state.get(&id)?;
    let generations = {
        let mut g = slot.write();
        let n = body
            .and_then(|b| b.0.generations)
            .unwrap_or(g.session.config.ga.generations_per_run);
        let started = g.session.start_run(n)?;
        slot.cancel.store(false, Ordering::SeqCst);
        slot.emit(&id, [started]);
        n
    };
    let job_slot = slot.clone();
    tokio::task::spawn_blocking(move || run_job(state, job_slot, generations));
    Ok((StatusCode::ACCEPTED, versioned(json!({ "generations": generations }))))
}

async fn cancel(State(state): AppRef, Path(id): Path<String>) -> ApiResult {
    let slot = state.get(&id)?;
    let running = slot.read().session.is_running();
    if running {
        slot.cancel.store(true, Ordering::SeqCst);
    }
    Ok(versioned(json!({ "cancelling": running })))
}

fn parse_bound(s: &str, field: &str) -> Result<Option<f64>, FieldError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| FieldError {
        field: field.into(),
        message: format!("`{s}` is not a number"),
    })
}

fn sort_key(s: &str) -> SortKey {
    match s {
        "total" => SortKey::Total,
        "smiles" => SortKey::Smiles,
        id => SortKey::Property { id: id.to_string() },
    }
}

/// Query keys: `sort`, `order=asc|desc`, `rescore=true`, and repeated
/// `filter=<field>:<min>:<max>` with empty bounds left open.
fn payload_options(params: &[(String, String)], generation: Option<usize>) -> Result<PayloadOptions, ApiError> {
    let mut opts = PayloadOptions {
        generation,
        ..PayloadOptions::default()
    };
    let mut errors = Vec::new();
    for (k, v) in params {
        match k.as_str() {
            "sort" => opts.sort = Some(sort_key(v)),
            "order" => match v.as_str() {
                "asc" => opts.ascending = true,
                "desc" => opts.ascending = false,
                _ => errors.push(FieldError {
                    field: "order".into(),
                    message: "expected asc or desc".into(),
                }),
            },
            "rescore" => opts.rescore = v == "true" || v == "1",
            "filter" => {
                let parts: Vec<&str> = v.split(':').collect();
                if parts.len() != 3 || parts[0].is_empty() {
                    errors.push(FieldError {
                        field: "filter".into(),
                        message: "expected <field>:<min>:<max>".into(),
                    });
                    continue;
                }
                match (parse_bound(parts[1], "filter"), parse_bound(parts[2], "filter")) {
                    (Ok(min), Ok(max)) => opts.filters.push(RangeFilter {
                        field: sort_key(parts[0]),
                        min,
                        max,
                    }),
                    (Err(e), _) | (_, Err(e)) => errors.push(e),
                }
            }
            other => errors.push(FieldError {
                field: other.into(),
                message: "unknown query parameter".into(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(opts)
    } else {
        Err(ApiError::bad_request(errors))
    }
}

fn payload_response(slot: &SessionSlot, opts: PayloadOptions) -> ApiResult {
    let g = slot.read();
    let payload = population_payload(&g.session, &opts, &g.services)?;
    Ok(Json(to_value(payload)))
}

async fn generation(
    State(state): AppRef,
    Path((id, k)): Path<(String, usize)>,
    Query(params): Query<Vec<(String, String)>>,
) -> ApiResult {
    let slot = state.get(&id)?;
    let opts = payload_options(&params, Some(k))?;
    blocking(move || payload_response(&slot, opts)).await
}

async fn population(
    State(state): AppRef,
    Path(id): Path<String>,
    Query(params): Query<Vec<(String, String)>>,
) -> ApiResult {
    let slot = state.get(&id)?;
    let opts = payload_options(&params, None)?;
    blocking(move || payload_response(&slot, opts)).await
}

async fn intervene(State(state): AppRef, Path(id): Path<String>, Json(action): Json<Intervention>) -> ApiResult {
    let slot = state.get(&id)?;
    blocking(move || {
        let mut g = slot.write();
        let Inner { session, services } = &mut *g;
        let outcome = session.intervene(action, services)?;
        state.persist(session)?;
        Ok(versioned(to_value(outcome)))
    })
    .await
}

async fn llm_edit(State(state): AppRef, Path(id): Path<String>, Json(request): Json<LlmEditRequest>) -> ApiResult {
    let slot = state.get(&id)?;
    let Some(client) = state.options.llm.clone() else {
        return Err(SessionError::from(LlmError::EndpointUnavailable {
            message: "no text-generation endpoint is configured".into(),
        })
        .into());
    };
    if slot.llm_busy.swap(true, Ordering::SeqCst) {
        return Err(ApiError::conflict("llm_busy", "a text-generation request is already in flight"));
    }
    let guard_slot = slot.clone();
    let result = blocking(move || {
        let outcome = {
            let g = slot.read();
            g.session.llm_candidates(&request, client.as_ref(), &g.services)?
        };
        let mut g = slot.write();
        g.session.record_llm_edit(&request, &outcome);
        state.persist(&g.session)?;
        Ok(outcome.map_err(SessionError::from)?)
    })
    .await;
    guard_slot.llm_busy.store(false, Ordering::SeqCst);
    Ok(versioned(to_value(result?)))
}

async fn audit(State(state): AppRef, Path(id): Path<String>) -> ApiResult {
    let slot = state.get(&id)?;
    let g = slot.read();
    Ok(versioned(json!({
        "audit_log": g.session.audit_log,
        "tombstones": g.session.tombstones,
    })))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default = "default_format")]
    format: String,
}

fn default_format() -> String {
    "json".into()
}

async fn export(State(state): AppRef, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let slot = state.get(&id)?;
    let g = slot.read();
    let (mime, body, ext) = match q.format.as_str() {
        "csv" => ("text/csv", export_csv(&g.session)?, "csv"),
        "json" => ("application/json", export_json(&g.session)?, "json"),
        _ => {
            return Err(ApiError::bad_request(vec![FieldError {
                field: "format".into(),
                message: "expected csv or json".into(),
            }]))
        }
    };
    let disposition = format!("attachment; filename=\"{id}.{ext}\"");
    Ok(([(header::CONTENT_TYPE, mime.to_string()), (header::CONTENT_DISPOSITION, disposition)], body).into_response())
}

async fn events(
    State(state): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let rx = state.get(&id)?.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(envelope) => {
                    let event = Event::default()
                        .event(envelope.event.name())
                        .json_data(&envelope)
                        .expect("event serializes");
                    return Some((Ok(event), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
struct SmilesQuery {
    smiles: String,
}

async fn validate_smiles(Json(q): Json<SmilesQuery>) -> Json<Value> {
    match structure_from_smiles(&q.smiles) {
        Ok(mol) => versioned(json!({
            "valid": true,
            "canonical_smiles": mol.canonical_key(),
            "graph": StructureGraph::from(&mol),
            "layout": layout_2d(&mol),
        })),
        Err(e) => {
            let mut error = to_value(&e.kind);
            error["offset"] = json!(e.offset);
            error["message"] = json!(e.to_string());
            versioned(json!({ "valid": false, "error": error }))
        }
    }
}

#[derive(Deserialize)]
struct PatternQuery {
    pattern: String,
}

async fn validate_pattern(Json(q): Json<PatternQuery>) -> Json<Value> {
    match parse_pattern(&q.pattern) {
        Ok(p) => versioned(json!({ "valid": true, "atoms": p.atoms().len() })),
        Err(e) => {
            let mut error = to_value(&e);
            error["message"] = json!(e.to_string());
            versioned(json!({ "valid": false, "error": error }))
        }
    }
}

async fn validate_spec(Json(spec): Json<ScoringSpec>) -> Json<Value> {
    match spec.validate() {
        Ok(()) => versioned(json!({ "valid": true, "fields": [] })),
        Err(SpecError::ValidationFailed { fields }) => versioned(json!({ "valid": false, "fields": fields })),
    }
}
