//! Population payloads consumed by the web client.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{Services, Session, SessionError, SCHEMA_VERSION};
use crate::ga::{rescore, Individual, Origin};
use crate::metrics::{morgan_fingerprint, FingerprintParams};
use crate::molgraph::{layout_2d, Atom, Bond, Layout, Molecule};
use crate::projection::project;
use crate::scoring::ScoreReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum SortKey {
    Total,
    Property { id: String },
    Smiles,
}

pub type FilterField = SortKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeFilter {
    pub field: FilterField,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PayloadOptions {
    /// Snapshot index; `None` selects the working population.
    #[serde(default)]
    pub generation: Option<usize>,
    /// Re-score a historical snapshot under the current spec. The stored
    /// snapshot is not modified.
    #[serde(default)]
    pub rescore: bool,
    #[serde(default)]
    pub sort: Option<SortKey>,
    #[serde(default)]
    pub ascending: bool,
    #[serde(default)]
    pub filters: Vec<RangeFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl From<&Molecule> for StructureGraph {
    fn from(m: &Molecule) -> Self {
        StructureGraph {
            atoms: m.atoms().to_vec(),
            bonds: m.bonds().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualPayload {
    pub key: String,
    pub graph: StructureGraph,
    pub layout: Layout,
    pub report: ScoreReport,
    pub origin: Origin,
    pub generation_born: usize,
    pub projection: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPayload {
    pub schema_version: u32,
    pub session_id: String,
    pub generation: Option<usize>,
    pub spec_version: u64,
    pub rescored: bool,
    /// Individuals before filtering.
    pub total_count: usize,
    /// Individuals hidden by the filters.
    pub excluded: usize,
    pub explained_variance: [f64; 2],
    pub projection_method: String,
    pub individuals: Vec<IndividualPayload>,
}

fn field_value(ind: &Individual, field: &SortKey) -> Option<f64> {
    match field {
        SortKey::Total => ind.report.total,
        SortKey::Property { id } => ind.report.term(id).and_then(|t| t.raw.value),
        SortKey::Smiles => None,
    }
}

/// Invalid or missing values sort last in either direction.
fn compare(a: &Individual, b: &Individual, key: &SortKey, ascending: bool) -> Ordering {
    if *key == SortKey::Smiles {
        let o = a.key().cmp(b.key());
        return if ascending { o } else { o.reverse() };
    }
    match (field_value(a, key), field_value(b, key)) {
        (Some(x), Some(y)) => {
            let o = x.total_cmp(&y);
            let o = if ascending { o } else { o.reverse() };
            o.then_with(|| a.key().cmp(b.key()))
        }
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.key().cmp(b.key()),
    }
}

fn passes(ind: &Individual, f: &RangeFilter) -> bool {
    let Some(v) = field_value(ind, &f.field) else {
        return f.min.is_none() && f.max.is_none();
    };
    f.min.is_none_or(|lo| v >= lo) && f.max.is_none_or(|hi| v <= hi)
}

pub fn population_payload(
    session: &Session,
    options: &PayloadOptions,
    services: &Services,
) -> Result<PopulationPayload, SessionError> {
    let mut individuals: Vec<Individual> = match options.generation {
        Some(k) => session.snapshot(k)?.individuals.clone(),
        None => session.population.clone(),
    };
    let spec_version = if options.rescore {
        rescore(&mut individuals, &session.spec, services.context());
        session.spec.version
    } else {
        match options.generation {
            Some(k) => session.snapshots[k].spec_version_used,
            None => session.spec.version,
        }
    };
    let fps: Vec<_> = individuals
        .iter()
        .map(|i| morgan_fingerprint(&i.molecule, FingerprintParams::default()).expect("default params are valid"))
        .collect();
    let projection = project(&fps).expect("fingerprints share a width");
    let total_count = individuals.len();
    let mut rows: Vec<(Individual, [f64; 2])> = individuals
        .into_iter()
        .zip(projection.coords)
        .filter(|(ind, _)| options.filters.iter().all(|f| passes(ind, f)))
        .collect();
    if let Some(key) = &options.sort {
        rows.sort_by(|a, b| compare(&a.0, &b.0, key, options.ascending));
    }
    let excluded = total_count - rows.len();
    Ok(PopulationPayload {
        schema_version: SCHEMA_VERSION,
        session_id: session.id.clone(),
        generation: options.generation,
        spec_version,
        rescored: options.rescore,
        total_count,
        excluded,
        explained_variance: projection.explained_variance,
        projection_method: projection.method_id,
        individuals: rows
            .into_iter()
            .map(|(ind, xy)| IndividualPayload {
                key: ind.key().to_string(),
                graph: StructureGraph::from(&ind.molecule),
                layout: layout_2d(&ind.molecule),
                report: ind.report,
                origin: ind.origin,
                generation_born: ind.generation_born,
                projection: xy,
            })
            .collect(),
    })
}
