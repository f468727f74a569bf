//! Multi-objective scoring: property terms with directions and weights,
//! substructure rules, remote properties and per-molecule reports.

mod evaluate;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{BuiltinProperty, PropertyStatus, PropertyValue};
use crate::molgraph::Molecule;
use crate::substructure::{match_count, parse_pattern, RuleKind, StructureRule};

pub use evaluate::{evaluate_population, evaluate_population_with, REMOTE_BATCH_SIZE};
pub use remote::{
    AuthHeader, HttpRemoteClient, PropertyCache, RemoteClient, RemoteEndpoint, RemoteError, ScriptedRemoteClient,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropertySource {
    Builtin,
    Remote { endpoint_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
    Target { value: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTerm {
    pub property_id: String,
    pub source: PropertySource,
    pub direction: Direction,
    pub bounds: Bounds,
    pub weight: f64,
}

impl PropertyTerm {
    pub fn builtin(property: BuiltinProperty, direction: Direction, low: f64, high: f64, weight: f64) -> Self {
        PropertyTerm {
            property_id: property.as_str().to_string(),
            source: PropertySource::Builtin,
            direction,
            bounds: Bounds { low, high },
            weight,
        }
    }

    pub fn remote(property_id: &str, endpoint_id: &str, direction: Direction, low: f64, high: f64, weight: f64) -> Self {
        PropertyTerm {
            property_id: property_id.to_string(),
            source: PropertySource::Remote {
                endpoint_id: endpoint_id.to_string(),
            },
            direction,
            bounds: Bounds { low, high },
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSpec {
    pub version: u64,
    pub terms: Vec<PropertyTerm>,
    #[serde(default)]
    pub rules: Vec<StructureRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecError {
    #[error("scoring spec failed validation: {}", fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    ValidationFailed { fields: Vec<FieldError> },
}

impl Default for ScoringSpec {
    /// Four equal-weight terms balancing synthesizability, lipophilicity,
    /// size and halogen load.
    fn default() -> Self {
        ScoringSpec {
            version: 1,
            terms: vec![
                PropertyTerm::builtin(BuiltinProperty::SaProxy, Direction::Maximize, 0.0, 1.0, 0.25),
                PropertyTerm::builtin(
                    BuiltinProperty::LogpEstimate,
                    Direction::Target {
                        value: 2.0,
                        tolerance: 3.0,
                    },
                    -5.0,
                    10.0,
                    0.25,
                ),
                PropertyTerm::builtin(
                    BuiltinProperty::MolWeight,
                    Direction::Target {
                        value: 350.0,
                        tolerance: 150.0,
                    },
                    0.0,
                    1000.0,
                    0.25,
                ),
                PropertyTerm::builtin(BuiltinProperty::HalogenCount, Direction::Minimize, 0.0, 6.0, 0.25),
            ],
            rules: Vec::new(),
        }
    }
}

impl ScoringSpec {
    pub fn new(terms: Vec<PropertyTerm>, rules: Vec<StructureRule>) -> Self {
        ScoringSpec { version: 1, terms, rules }
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Endpoint ids referenced by remote terms, in first-use order.
    pub fn remote_endpoints(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            if let PropertySource::Remote { endpoint_id } = &t.source {
                if !out.contains(&endpoint_id.as_str()) {
                    out.push(endpoint_id);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let mut fields = Vec::new();
        let mut push = |field: String, message: &str| {
            fields.push(FieldError {
                field,
                message: message.to_string(),
            })
        };
        if self.terms.is_empty() {
            push("terms".into(), "at least one term is required");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let f = |name: &str| format!("terms[{i}].{name}");
            if t.property_id.is_empty() {
                push(f("property_id"), "must not be empty");
            }
            if self.terms[..i].iter().any(|o| o.property_id == t.property_id) {
                push(f("property_id"), "duplicate property id");
            }
            match &t.source {
                PropertySource::Builtin => {
                    if t.property_id.parse::<BuiltinProperty>().is_err() {
                        push(f("property_id"), "unknown builtin property");
                    }
                }
                PropertySource::Remote { endpoint_id } => {
                    if endpoint_id.is_empty() {
                        push(f("source.endpoint_id"), "must not be empty");
                    }
                }
            }
            if !(t.bounds.low.is_finite() && t.bounds.high.is_finite() && t.bounds.low < t.bounds.high) {
                push(f("bounds"), "low must be finite and strictly below high");
            }
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                push(f("weight"), "must be finite and non-negative");
            }
            if let Direction::Target { value, tolerance } = t.direction {
                if !value.is_finite() {
                    push(f("direction.value"), "must be finite");
                }
                if !(tolerance.is_finite() && tolerance > 0.0) {
                    push(f("direction.tolerance"), "must be finite and positive");
                }
            }
        }
        if !self.terms.is_empty() && (self.total_weight() <= 0.0 || self.total_weight().is_nan()) {
            push("terms".into(), "weights must sum to a positive value");
        }
        for (i, r) in self.rules.iter().enumerate() {
            if r.validate().is_err() {
                push(format!("rules[{i}].magnitude"), "must lie in [0, 1]");
            }
            if let Err(e) = parse_pattern(r.pattern.source()) {
                push(format!("rules[{i}].pattern"), &e.to_string());
            }
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(SpecError::ValidationFailed { fields })
        }
    }
}

/// Maps a raw value onto [0, 1] for the term's direction.
pub fn desirability(raw: f64, term: &PropertyTerm) -> f64 {
    let Bounds { low, high } = term.bounds;
    let x = raw.clamp(low, high);
    let u = (x - low) / (high - low);
    match term.direction {
        Direction::Maximize => u,
        Direction::Minimize => 1.0 - u,
        Direction::Target { value, tolerance } => (1.0 - (x - value).abs() / tolerance).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub property_id: String,
    pub raw: PropertyValue,
    pub desirability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleHit {
    pub label: String,
    pub kind: RuleKind,
    pub count: usize,
    /// Search budget exhausted; the count is reported as zero.
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub spec_version: u64,
    pub valid: bool,
    /// Weighted mean of desirabilities before rule adjustment.
    pub base_total: Option<f64>,
    pub total: Option<f64>,
    pub terms: Vec<TermScore>,
    pub rule_hits: Vec<RuleHit>,
}

impl ScoreReport {
    pub fn alerts(&self) -> impl Iterator<Item = &RuleHit> {
        self.rule_hits.iter().filter(|h| h.kind == RuleKind::Alert && h.count > 0)
    }

    pub fn term(&self, property_id: &str) -> Option<&TermScore> {
        self.terms.iter().find(|t| t.property_id == property_id)
    }

    /// First non-ok term status, for error badges.
    pub fn error_message(&self) -> Option<String> {
        self.terms.iter().find_map(|t| match &t.raw.status {
            PropertyStatus::Ok => None,
            PropertyStatus::Missing => Some(format!("{}: missing value", t.property_id)),
            PropertyStatus::Error(m) => Some(format!("{}: {m}", t.property_id)),
        })
    }
}

pub fn rule_hits(mol: &Molecule, rules: &[StructureRule]) -> Vec<RuleHit> {
    rules
        .iter()
        .map(|r| {
            let (count, timed_out) = match match_count(mol, &r.pattern) {
                Ok(n) => (n, false),
                Err(_) => (0, true),
            };
            RuleHit {
                label: r.label.clone(),
                kind: r.kind,
                count,
                timed_out,
            }
        })
        .collect()
}

/// Scores one molecule from already-computed property values. A term
/// without an ok value makes the report invalid.
pub fn score(mol: &Molecule, spec: &ScoringSpec, values: &[PropertyValue]) -> ScoreReport {
    score_with_hits(spec, values, rule_hits(mol, &spec.rules))
}

pub(crate) fn score_with_hits(spec: &ScoringSpec, values: &[PropertyValue], hits: Vec<RuleHit>) -> ScoreReport {
    let mut terms = Vec::with_capacity(spec.terms.len());
    let mut valid = true;
    for t in &spec.terms {
        let raw = values
            .iter()
            .find(|v| v.property_id == t.property_id)
            .cloned()
            .unwrap_or_else(|| PropertyValue::missing(t.property_id.clone()));
        let d = match (raw.is_ok(), raw.value) {
            (true, Some(v)) => Some(desirability(v, t)),
            _ => {
                valid = false;
                None
            }
        };
        terms.push(TermScore {
            property_id: t.property_id.clone(),
            raw,
            desirability: d,
        });
    }
    let (base_total, total) = if valid {
        let weight = spec.total_weight();
        let base: f64 = spec
            .terms
            .iter()
            .zip(&terms)
            .map(|(t, s)| t.weight * s.desirability.unwrap_or(0.0))
            .sum::<f64>()
            / weight;
        let adjust: f64 = spec
            .rules
            .iter()
            .zip(&hits)
            .filter(|(_, h)| h.count > 0)
            .map(|(r, _)| match r.kind {
                RuleKind::Reward => r.magnitude,
                RuleKind::Penalty => -r.magnitude,
                RuleKind::Alert => 0.0,
            })
            .sum();
        (Some(base), Some((base + adjust).clamp(0.0, 1.0)))
    } else {
        (None, None)
    };
    ScoreReport {
        spec_version: spec.version,
        valid,
        base_total,
        total,
        terms,
        rule_hits: hits,
    }
}
