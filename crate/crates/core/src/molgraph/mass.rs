use std::collections::BTreeMap;
use std::sync::LazyLock;

use super::{Element, Molecule};

const MASS_TABLE: &str = include_str!("../../data/atomic_masses.csv");

static MASSES: LazyLock<BTreeMap<Element, f64>> = LazyLock::new(|| {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(MASS_TABLE.as_bytes());
    let mut table = BTreeMap::new();
    for row in reader.records() {
        let row = row.expect("atomic mass table is well formed");
        let element = Element::from_symbol(&row[0]).expect("known element in mass table");
        let mass: f64 = row[1].parse().expect("numeric mass");
        table.insert(element, mass);
    }
    table
});

pub fn atomic_mass(element: Element) -> f64 {
    MASSES[&element]
}

/// Average molecular weight in g/mol, rounded to three decimals.
pub fn molecular_weight(mol: &Molecule) -> f64 {
    let mut counts: BTreeMap<Element, u32> = BTreeMap::new();
    for a in mol.atoms() {
        *counts.entry(a.element).or_default() += 1;
        *counts.entry(Element::H).or_default() += u32::from(a.implicit_hydrogens);
    }
    let total: f64 = counts.into_iter().map(|(e, n)| f64::from(n) * atomic_mass(e)).sum();
    (total * 1000.0).round() / 1000.0
}
