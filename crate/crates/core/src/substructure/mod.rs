//! Substructure patterns and matching for structural rewards, penalties
//! and alerts.

mod matcher;
mod pattern;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matcher::{find_matches, match_count, MatchError, MatchSet, SEARCH_BUDGET};
pub use pattern::{parse_pattern, Pattern, PatternError, QueryAtom, QueryBond, MAX_PATTERN_ATOMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Reward,
    Penalty,
    Alert,
}

/// A pattern with a score effect (reward/penalty) or a visual flag (alert).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRule {
    pub pattern: Pattern,
    pub kind: RuleKind,
    /// On the normalized score scale, in [0, 1]. Ignored for alerts.
    pub magnitude: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule magnitude must lie in [0, 1], got {0}")]
pub struct RuleError(pub String);

impl StructureRule {
    pub fn new(pattern: &str, kind: RuleKind, magnitude: f64, label: impl Into<String>) -> Result<Self, PatternError> {
        Ok(StructureRule {
            pattern: parse_pattern(pattern)?,
            kind,
            magnitude,
            label: label.into(),
        })
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if !(self.magnitude.is_finite() && (0.0..=1.0).contains(&self.magnitude)) {
            return Err(RuleError(self.magnitude.to_string()));
        }
        Ok(())
    }
}
