use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::molgraph::{cycle_rank, molecular_weight, Element, Molecule};

const LOGP_TABLE: &str = include_str!("../../data/logp_contributions.csv");

static LOGP: LazyLock<BTreeMap<(Element, bool), f64>> = LazyLock::new(|| {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(LOGP_TABLE.as_bytes());
    let mut table = BTreeMap::new();
    for row in reader.records() {
        let row = row.expect("logp table is well formed");
        let element = Element::from_symbol(&row[0]).expect("known element");
        let aromatic: bool = row[1].parse().expect("boolean aromatic flag");
        let value: f64 = row[2].parse().expect("numeric contribution");
        table.insert((element, aromatic), value);
    }
    table
});

/// Contribution of one atom to the additive logP estimate. Aromatic atoms
/// fall back to the aliphatic entry when the table has no aromatic one.
pub fn logp_contribution(element: Element, aromatic: bool) -> f64 {
    LOGP.get(&(element, aromatic))
        .or_else(|| LOGP.get(&(element, false)))
        .copied()
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuiltinProperty {
    MolWeight,
    LogpEstimate,
    SaProxy,
    RingCount,
    HbdCount,
    HbaCount,
    HeavyAtomCount,
    HalogenCount,
}

impl BuiltinProperty {
    pub const ALL: [BuiltinProperty; 8] = [
        BuiltinProperty::MolWeight,
        BuiltinProperty::LogpEstimate,
        BuiltinProperty::SaProxy,
        BuiltinProperty::RingCount,
        BuiltinProperty::HbdCount,
        BuiltinProperty::HbaCount,
        BuiltinProperty::HeavyAtomCount,
        BuiltinProperty::HalogenCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinProperty::MolWeight => "mol_weight",
            BuiltinProperty::LogpEstimate => "logp_estimate",
            BuiltinProperty::SaProxy => "sa_proxy",
            BuiltinProperty::RingCount => "ring_count",
            BuiltinProperty::HbdCount => "hbd_count",
            BuiltinProperty::HbaCount => "hba_count",
            BuiltinProperty::HeavyAtomCount => "heavy_atom_count",
            BuiltinProperty::HalogenCount => "halogen_count",
        }
    }

    pub fn compute(self, mol: &Molecule) -> f64 {
        let heavy = || (0..mol.atom_count()).filter(|&i| mol.atom(i).element.is_heavy());
        let is_on = |i: &usize| matches!(mol.atom(*i).element, Element::O | Element::N);
        match self {
            BuiltinProperty::MolWeight => molecular_weight(mol),
            BuiltinProperty::LogpEstimate => {
                let mut counts: BTreeMap<(Element, bool), u32> = BTreeMap::new();
                for i in heavy() {
                    *counts.entry((mol.atom(i).element, mol.atom(i).aromatic)).or_default() += 1;
                }
                counts
                    .into_iter()
                    .map(|((e, aromatic), n)| f64::from(n) * logp_contribution(e, aromatic))
                    .sum()
            }
            BuiltinProperty::SaProxy => {
                let atoms = mol.heavy_atom_count() as f64;
                let rings = cycle_rank(mol) as f64;
                let branches = heavy().filter(|&i| mol.heavy_degree(i) >= 3).count() as f64;
                1.0 / (1.0 + 0.05 * atoms + 0.30 * rings + 0.10 * branches)
            }
            BuiltinProperty::RingCount => cycle_rank(mol) as f64,
            BuiltinProperty::HbdCount => heavy()
                .filter(is_on)
                .filter(|&i| mol.total_hydrogens(i) >= 1)
                .count() as f64,
            BuiltinProperty::HbaCount => heavy().filter(is_on).count() as f64,
            BuiltinProperty::HeavyAtomCount => mol.heavy_atom_count() as f64,
            BuiltinProperty::HalogenCount => heavy().filter(|&i| mol.atom(i).element.is_halogen()).count() as f64,
        }
    }
}

impl FromStr for BuiltinProperty {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinProperty::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| MetricsError::UnknownProperty(s.to_string()))
    }
}

impl fmt::Display for BuiltinProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyStatus {
    Ok,
    Missing,
    Error(String),
}

/// A raw property value as shown next to a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub property_id: String,
    /// Always `Some` and finite when `status` is `Ok`.
    pub value: Option<f64>,
    pub status: PropertyStatus,
}

impl PropertyValue {
    pub fn ok(property_id: impl Into<String>, value: f64) -> Self {
        if !value.is_finite() {
            return PropertyValue::error(property_id, "non-finite value");
        }
        PropertyValue {
            property_id: property_id.into(),
            value: Some(value),
            status: PropertyStatus::Ok,
        }
    }

    pub fn missing(property_id: impl Into<String>) -> Self {
        PropertyValue {
            property_id: property_id.into(),
            value: None,
            status: PropertyStatus::Missing,
        }
    }

    pub fn error(property_id: impl Into<String>, message: impl Into<String>) -> Self {
        PropertyValue {
            property_id: property_id.into(),
            value: None,
            status: PropertyStatus::Error(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == PropertyStatus::Ok
    }
}

pub fn builtin_property(mol: &Molecule, property_id: &str) -> Result<PropertyValue, MetricsError> {
    let prop: BuiltinProperty = property_id.parse()?;
    Ok(PropertyValue::ok(property_id, prop.compute(mol)))
}
