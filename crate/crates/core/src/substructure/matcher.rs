use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use super::pattern::{Pattern, QueryAtom};
use crate::molgraph::{ring_atoms, Element, Molecule};

/// Maximum number of search nodes expanded per (molecule, pattern) pair.
pub const SEARCH_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchError {
    #[error("substructure search exceeded {nodes} nodes")]
    Timeout { nodes: u64 },
}

/// Distinct matched atom sets, each sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchSet {
    pub atom_sets: BTreeSet<Vec<usize>>,
}

impl MatchSet {
    pub fn count(&self) -> usize {
        self.atom_sets.len()
    }

    pub fn atoms(&self) -> BTreeSet<usize> {
        self.atom_sets.iter().flatten().copied().collect()
    }
}

fn atom_ok(q: &QueryAtom, mol: &Molecule, ring: &[bool], i: usize) -> bool {
    let a = mol.atom(i);
    if a.element == Element::H {
        return false;
    }
    q.element.is_none_or(|e| e == a.element)
        && q.aromatic.is_none_or(|f| f == a.aromatic)
        && q.in_ring.is_none_or(|f| f == ring[i])
        && q.charge.is_none_or(|c| c == a.formal_charge)
        && q.hydrogens.is_none_or(|h| usize::from(h) == mol.total_hydrogens(i))
}

struct Search<'a> {
    mol: &'a Molecule,
    pattern: &'a Pattern,
    ring: Vec<bool>,
    /// Pattern atoms in visit order; each after the first has an earlier neighbour.
    order: Vec<usize>,
    /// For each position in `order`, the pattern bonds back to earlier atoms.
    back: Vec<Vec<(usize, usize)>>,
    degree: Vec<usize>,
    map: Vec<Option<usize>>,
    used: Vec<bool>,
    nodes: u64,
    budget: u64,
    found: MatchSet,
}

impl<'a> Search<'a> {
    fn new(mol: &'a Molecule, pattern: &'a Pattern, budget: u64) -> Self {
        let n = pattern.atoms.len();
        let mut adj = vec![Vec::new(); n];
        for (k, &(a, b, _)) in pattern.bonds.iter().enumerate() {
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        let mut order = vec![0];
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut head = 0;
        while head < order.len() {
            let q = order[head];
            head += 1;
            for &(nb, _) in &adj[q] {
                if !seen[nb] {
                    seen[nb] = true;
                    order.push(nb);
                }
            }
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &q) in order.iter().enumerate() {
            pos[q] = p;
        }
        let back = order
            .iter()
            .map(|&q| {
                adj[q]
                    .iter()
                    .filter(|&&(nb, _)| pos[nb] < pos[q])
                    .copied()
                    .collect()
            })
            .collect();
        Search {
            mol,
            pattern,
            ring: ring_atoms(mol),
            degree: adj.iter().map(Vec::len).collect(),
            order,
            back,
            map: vec![None; n],
            used: vec![false; mol.atom_count()],
            nodes: 0,
            budget,
            found: MatchSet::default(),
        }
    }

    fn feasible(&self, depth: usize, q: usize, i: usize) -> bool {
        if self.used[i]
            || self.mol.heavy_degree(i) < self.degree[q]
            || !atom_ok(&self.pattern.atoms[q], self.mol, &self.ring, i)
        {
            return false;
        }
        self.back[depth].iter().all(|&(nb, k)| {
            let j = self.map[nb].expect("earlier atoms are mapped");
            self.mol
                .bond_between(i, j)
                .is_some_and(|b| self.pattern.bonds[k].2.accepts(self.mol.bonds()[b].order))
        })
    }

    fn extend(&mut self, depth: usize) -> Result<(), MatchError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(MatchError::Timeout { nodes: self.budget });
        }
        if depth == self.order.len() {
            let mut set: Vec<usize> = self.map.iter().map(|m| m.expect("complete")).collect();
            set.sort_unstable();
            self.found.atom_sets.insert(set);
            return Ok(());
        }
        let q = self.order[depth];
        let candidates: Vec<usize> = match self.back[depth].first() {
            Some(&(nb, _)) => {
                let anchor = self.map[nb].expect("earlier atoms are mapped");
                self.mol.neighbors(anchor).iter().map(|n| n.atom).collect()
            }
            None => (0..self.mol.atom_count()).collect(),
        };
        for i in candidates {
            if !self.feasible(depth, q, i) {
                continue;
            }
            self.map[q] = Some(i);
            self.used[i] = true;
            let r = self.extend(depth + 1);
            self.map[q] = None;
            self.used[i] = false;
            r?;
        }
        Ok(())
    }
}

/// All distinct atom sets of the molecule matched by the pattern.
pub fn find_matches(mol: &Molecule, pattern: &Pattern) -> Result<MatchSet, MatchError> {
    find_matches_with_budget(mol, pattern, SEARCH_BUDGET)
}

pub(crate) fn find_matches_with_budget(mol: &Molecule, pattern: &Pattern, budget: u64) -> Result<MatchSet, MatchError> {
    let mut search = Search::new(mol, pattern, budget);
    search.extend(0)?;
    Ok(search.found)
}

/// Number of distinct matched atom sets.
pub fn match_count(mol: &Molecule, pattern: &Pattern) -> Result<usize, MatchError> {
    find_matches(mol, pattern).map(|m| m.count())
}
