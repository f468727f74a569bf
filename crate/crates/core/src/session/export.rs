//! CSV and JSON export, JSON import and on-disk persistence.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Session, SessionError, SCHEMA_VERSION};
use crate::ga::Individual;
use crate::metrics::PropertyStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub schema_version: u32,
    pub session: Session,
}

fn storage(e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage { message: e.to_string() }
}

fn term_columns(session: &Session) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    let all = session.snapshots.iter().flat_map(|s| &s.individuals);
    for t in all.flat_map(|i| &i.report.terms) {
        if !ids.contains(&t.property_id) {
            ids.push(t.property_id.clone());
        }
    }
    ids
}

fn fmt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row(generation: usize, ind: &Individual, terms: &[String]) -> Vec<String> {
    let mut out = vec![
        generation.to_string(),
        ind.key().to_string(),
        ind.report.spec_version.to_string(),
    ];
    for id in terms {
        match ind.report.term(id) {
            Some(t) => {
                let raw = match &t.raw.status {
                    PropertyStatus::Ok => fmt_f64(t.raw.value),
                    PropertyStatus::Missing => "missing".into(),
                    PropertyStatus::Error(_) => "error".into(),
                };
                out.push(raw);
                out.push(fmt_f64(t.desirability));
            }
            None => out.extend([String::new(), String::new()]),
        }
    }
    out.push(fmt_f64(ind.report.total));
    out.push(ind.report.valid.to_string());
    out.push(ind.origin.label().to_string());
    out.push(
        ind.report
            .alerts()
            .map(|h| h.label.as_str())
            .collect::<Vec<_>>()
            .join(";"),
    );
    out
}

/// One row per individual of every stored generation.
pub fn export_csv(session: &Session) -> Result<String, SessionError> {
    let terms = term_columns(session);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["generation".to_string(), "canonical_smiles".into(), "spec_version".into()];
    for id in &terms {
        header.push(format!("{id}_raw"));
        header.push(format!("{id}_desirability"));
    }
    header.extend(["total", "valid", "origin", "alerts"].map(String::from));
    w.write_record(&header).map_err(storage)?;
    for snap in &session.snapshots {
        for ind in &snap.individuals {
            w.write_record(row(snap.index, ind, &terms)).map_err(storage)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(storage)?).map_err(storage)
}

pub fn export_json(session: &Session) -> Result<String, SessionError> {
    let file = SessionFile {
        schema_version: SCHEMA_VERSION,
        session: session.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(storage)
}

pub fn import_json(text: &str) -> Result<Session, SessionError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(storage)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(SessionError::Storage {
                message: format!("unsupported schema_version {v}"),
            })
        }
        None => {
            return Err(SessionError::Storage {
                message: "missing schema_version".into(),
            })
        }
    }
    let file: SessionFile = serde_json::from_value(value).map_err(storage)?;
    Ok(file.session)
}

/// Writes the session atomically through a temporary sibling file.
pub fn save_session(session: &Session, path: &Path) -> Result<(), SessionError> {
    let text = export_json(session)?;
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(storage)?;
        f.write_all(text.as_bytes()).map_err(storage)?;
        f.sync_all().map_err(storage)?;
    }
    fs::rename(&tmp, path).map_err(storage)
}

pub fn load_session(path: &Path) -> Result<Session, SessionError> {
    import_json(&fs::read_to_string(path).map_err(storage)?)
}
