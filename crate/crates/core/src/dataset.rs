//! Seed datasets: uploaded SMILES lists or CSV files, and built-in samples.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::molgraph::{parse_smiles, Molecule, SmilesError};

const PHENOLIC: &str = include_str!("../data/phenolic_antioxidants.smi");
const SMALL: &str = include_str!("../data/small_molecules.smi");

/// Names of the built-in sample datasets.
pub const SAMPLES: [&str; 2] = ["phenolic-antioxidants", "small-molecules"];

pub fn sample(name: &str) -> Option<&'static str> {
    match name {
        "phenolic-antioxidants" => Some(PHENOLIC),
        "small-molecules" => Some(SMALL),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    /// Zero-based line index in the uploaded text.
    pub line: usize,
    pub text: String,
    pub error: SmilesError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateWarning {
    pub line: usize,
    pub key: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub molecules: Vec<Molecule>,
    pub duplicates: Vec<DuplicateWarning>,
    pub errors: Vec<LineError>,
}

/// Keeps the fragment with the most heavy atoms (the first on ties).
pub fn largest_fragment(frags: Vec<Molecule>) -> Option<Molecule> {
    let mut best: Option<Molecule> = None;
    for f in frags {
        if best
            .as_ref()
            .is_none_or(|b| f.heavy_atom_count() > b.heavy_atom_count())
        {
            best = Some(f);
        }
    }
    best
}

/// Parses an uploaded dataset. Plain text holds one SMILES per line
/// (optionally followed by whitespace and a name); CSV input needs a header
/// with a `smiles` column. Lines starting with `#` and blank lines are skipped.
pub fn parse_dataset(text: &str) -> Dataset {
    let entries = match csv_entries(text) {
        Some(entries) => entries,
        None => text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.trim();
                if l.is_empty() || l.starts_with('#') {
                    return None;
                }
                Some((i, l.split_whitespace().next().unwrap_or("").to_string()))
            })
            .collect(),
    };
    let mut out = Dataset::default();
    let mut seen = BTreeSet::new();
    for (line, smiles) in entries {
        match parse_smiles(&smiles) {
            Ok(frags) => {
                let mol = largest_fragment(frags).expect("parser returns at least one fragment").canonicalized();
                let key = mol.canonical_key().to_string();
                if seen.insert(key.clone()) {
                    out.molecules.push(mol);
                } else {
                    out.duplicates.push(DuplicateWarning { line, key });
                }
            }
            Err(error) => out.errors.push(LineError {
                line,
                text: smiles,
                error,
            }),
        }
    }
    out
}

fn csv_entries(text: &str) -> Option<Vec<(usize, String)>> {
    let header_line = text.lines().position(|l| !l.trim().is_empty())?;
    let header = text.lines().nth(header_line)?;
    if !header.contains(',') {
        return None;
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let column = reader
        .headers()
        .ok()?
        .iter()
        .position(|h| h.eq_ignore_ascii_case("smiles"))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let Ok(record) = record else { continue };
        let line = record.position().map_or(0, |p| p.line() as usize - 1);
        let smiles = record.get(column).unwrap_or("").to_string();
        if smiles.is_empty() {
            continue;
        }
        out.push((line, smiles));
    }
    Some(out)
}
