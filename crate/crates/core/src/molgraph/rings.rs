use std::collections::{BTreeSet, VecDeque};

use super::Molecule;

/// Marks every bond that lies on a cycle (i.e. is not a bridge).
pub(crate) fn ring_bond_mask(mol: &Molecule) -> Vec<bool> {
    let n = mol.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; mol.bonds().len()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative DFS: (atom, bond used to enter, next neighbour index).
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, parent_bond, ref mut next)) = stack.last_mut() {
            if let Some(nb) = mol.neighbors(u).get(*next).copied() {
                *next += 1;
                if Some(nb.bond) == parent_bond {
                    continue;
                }
                if disc[nb.atom] == usize::MAX {
                    disc[nb.atom] = timer;
                    low[nb.atom] = timer;
                    timer += 1;
                    stack.push((nb.atom, Some(nb.bond), 0));
                } else {
                    low[u] = low[u].min(disc[nb.atom]);
                }
            } else {
                stack.pop();
                if let (Some(bond), Some(&(p, _, _))) = (parent_bond, stack.last()) {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        is_bridge[bond] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

/// Indices of bonds that belong to at least one cycle.
pub fn ring_bonds(mol: &Molecule) -> BTreeSet<usize> {
    ring_bond_mask(mol)
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.then_some(i))
        .collect()
}

/// Per-atom ring membership.
pub fn ring_atoms(mol: &Molecule) -> Vec<bool> {
    let mask = ring_bond_mask(mol);
    (0..mol.atom_count())
        .map(|i| mol.neighbors(i).iter().any(|nb| mask[nb.bond]))
        .collect()
}

/// Number of independent cycles: bonds - atoms + components.
pub fn cycle_rank(mol: &Molecule) -> usize {
    let comps = mol.components().len();
    (mol.bonds().len() + comps).saturating_sub(mol.atom_count())
}

/// A smallest set of smallest rings, each as an ordered cycle of atoms.
///
/// Candidate cycles are the shortest cycle through each ring bond; they are
/// taken smallest first while linearly independent over GF(2).
pub fn smallest_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    let mask = ring_bond_mask(mol);
    let target = cycle_rank(mol);
    if target == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut seen = BTreeSet::new();
    for (bi, bond) in mol.bonds().iter().enumerate() {
        if !mask[bi] {
            continue;
        }
        if let Some(path) = shortest_path_avoiding(mol, &mask, bond.a, bond.b, bi) {
            let mut key = path.clone();
            key.sort_unstable();
            if seen.insert(key) {
                candidates.push(path);
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.len().cmp(&b.len()).then_with(|| {
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_unstable();
            sb.sort_unstable();
            sa.cmp(&sb)
        })
    });

    let words = mol.bonds().len().div_ceil(64);
    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut chosen = Vec::new();
    for cycle in candidates {
        let mut vec = vec![0u64; words];
        for k in 0..cycle.len() {
            let a = cycle[k];
            let b = cycle[(k + 1) % cycle.len()];
            let bond = mol.bond_between(a, b).expect("cycle follows bonds");
            vec[bond / 64] ^= 1 << (bond % 64);
        }
        if reduce_and_insert(&mut basis, vec) {
            chosen.push(cycle);
            if chosen.len() == target {
                break;
            }
        }
    }
    chosen
}

fn leading_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .rev()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// Gaussian elimination over GF(2); returns true if `v` was independent.
fn reduce_and_insert(basis: &mut Vec<Vec<u64>>, mut v: Vec<u64>) -> bool {
    loop {
        let Some(lead) = leading_bit(&v) else {
            return false;
        };
        match basis.iter().find(|b| leading_bit(b) == Some(lead)) {
            Some(b) => {
                for (x, y) in v.iter_mut().zip(b) {
                    *x ^= y;
                }
            }
            None => {
                basis.push(v);
                return true;
            }
        }
    }
}

/// BFS path from `from` to `to` over ring bonds, skipping `skip_bond`.
/// The returned path starts at `from` and ends at `to`.
fn shortest_path_avoiding(
    mol: &Molecule,
    mask: &[bool],
    from: usize,
    to: usize,
    skip_bond: usize,
) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; mol.atom_count()];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for nb in mol.neighbors(u) {
            if nb.bond == skip_bond || !mask[nb.bond] || prev[nb.atom] != usize::MAX {
                continue;
            }
            prev[nb.atom] = u;
            queue.push_back(nb.atom);
        }
    }
    if prev[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_single;

    #[test]
    fn acyclic_has_no_ring_bonds() {
        assert!(ring_bonds(&parse_single("CCO").unwrap()).is_empty());
    }

    #[test]
    fn benzene_all_ring_bonds() {
        let m = parse_single("c1ccccc1").unwrap();
        assert_eq!(ring_bonds(&m).len(), 6);
        assert_eq!(cycle_rank(&m), 1);
    }

    #[test]
    fn toluene_excludes_methyl_bond() {
        let m = parse_single("Cc1ccccc1").unwrap();
        let rb = ring_bonds(&m);
        assert_eq!(rb.len(), 6);
        let methyl = m.bond_between(0, 1).unwrap();
        assert!(!rb.contains(&methyl));
    }

    #[test]
    fn naphthalene_sssr() {
        let m = parse_single("c1ccc2ccccc2c1").unwrap();
        let rings = smallest_rings(&m);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 6));
    }

    #[test]
    fn spiro_and_bridged() {
        let spiro = parse_single("C1CCC2(C1)CCCC2").unwrap();
        let rings = smallest_rings(&spiro);
        assert_eq!(rings.len(), 2);
        let norbornane = parse_single("C1CC2CCC1C2").unwrap();
        let rings = smallest_rings(&norbornane);
        assert_eq!(rings.len(), 2);
        assert!(rings.iter().all(|r| r.len() == 5));
    }
}
