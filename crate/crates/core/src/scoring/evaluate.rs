use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::remote::{PropertyCache, RemoteClient, RemoteError};
use super::{rule_hits, score_with_hits, PropertySource, ScoreReport, ScoringSpec};
use crate::metrics::{BuiltinProperty, PropertyValue};
use crate::molgraph::Molecule;

/// Maximum number of molecules per remote request.
pub const REMOTE_BATCH_SIZE: usize = 64;

/// Scores a population. Builtin properties are computed locally; remote
/// properties come from the cache or from batched requests. Failures only
/// invalidate the affected molecules.
pub fn evaluate_population(
    mols: &[Molecule],
    spec: &ScoringSpec,
    cache: &PropertyCache,
    remote: Option<&dyn RemoteClient>,
) -> Vec<ScoreReport> {
    evaluate_population_with(mols, spec, cache, remote, |_| {})
}

/// As [`evaluate_population`], reporting each remote failure message.
pub fn evaluate_population_with(
    mols: &[Molecule],
    spec: &ScoringSpec,
    cache: &PropertyCache,
    remote: Option<&dyn RemoteClient>,
    mut on_error: impl FnMut(&RemoteError),
) -> Vec<ScoreReport> {
    let keys: Vec<&str> = mols.iter().map(|m| m.canonical_key()).collect();
    let mut failures: BTreeMap<(&str, &str), String> = BTreeMap::new();
    for endpoint in spec.remote_endpoints() {
        let mut seen = BTreeSet::new();
        let pending: Vec<String> = keys
            .iter()
            .filter(|k| cache.get(endpoint, k).is_none() && seen.insert(**k))
            .map(|k| k.to_string())
            .collect();
        for batch in pending.chunks(REMOTE_BATCH_SIZE) {
            let result = match remote {
                Some(client) => client.fetch(endpoint, batch),
                None => Err(RemoteError::NotConfigured),
            };
            match result {
                Ok(values) => {
                    for s in batch {
                        match values.get(s).copied().flatten() {
                            Some(v) if v.is_finite() => cache.insert(endpoint, s, v),
                            _ => {
                                let k = keys.iter().find(|k| **k == s).expect("pending key");
                                failures.insert((endpoint, k), "endpoint returned no value".into());
                            }
                        }
                    }
                }
                Err(e) => {
                    on_error(&e);
                    for s in batch {
                        let k = keys.iter().find(|k| **k == s).expect("pending key");
                        failures.insert((endpoint, k), e.to_string());
                    }
                }
            }
        }
    }

    mols.par_iter()
        .zip(keys.par_iter())
        .map(|(mol, key)| {
            let values: Vec<PropertyValue> = spec
                .terms
                .iter()
                .map(|t| match &t.source {
                    PropertySource::Builtin => match t.property_id.parse::<BuiltinProperty>() {
                        Ok(p) => PropertyValue::ok(t.property_id.clone(), p.compute(mol)),
                        Err(e) => PropertyValue::error(t.property_id.clone(), e.to_string()),
                    },
                    PropertySource::Remote { endpoint_id } => match cache.get(endpoint_id, key) {
                        Some(v) => PropertyValue::ok(t.property_id.clone(), v),
                        None => match failures.get(&(endpoint_id.as_str(), *key)) {
                            Some(msg) => PropertyValue::error(t.property_id.clone(), msg.clone()),
                            None => PropertyValue::missing(t.property_id.clone()),
                        },
                    },
                })
                .collect();
            score_with_hits(spec, &values, rule_hits(mol, &spec.rules))
        })
        .collect()
}
