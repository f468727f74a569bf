//! Canonical SMILES.
//!
//! Atoms are ranked by iterative neighbourhood refinement seeded with
//! (element, degree, charge, aromatic, hydrogens, ring membership). Remaining
//! ties are broken by individualizing each member of the lowest tied class in
//! turn and keeping the lexicographically smallest output string. Members that
//! are twins (swapping them is an automorphism) are explored only once.

use super::{rings, valence, BondOrder, DraftAtom, Molecule};

/// Leaf budget for the tie-breaking search. Past it only the first candidate
/// of each tied class is explored.
const LEAF_BUDGET: usize = 2048;

pub fn canonical_smiles(mol: &Molecule) -> String {
    if mol.atom_count() == 0 {
        return String::new();
    }
    let ring = rings::ring_atoms(mol);
    let mut keys: Vec<(u8, usize, i8, bool, u8, bool)> = (0..mol.atom_count())
        .map(|i| {
            let a = mol.atom(i);
            (
                a.element.atomic_number(),
                mol.neighbors(i).len(),
                a.formal_charge,
                a.aromatic,
                a.implicit_hydrogens,
                ring[i],
            )
        })
        .collect();
    let initial = dense_ranks(&mut keys);
    let mut search = Search {
        mol,
        leaves: 0,
        best: None,
    };
    search.explore(initial);
    search.best.expect("at least one leaf")
}

fn dense_ranks<K: Ord + Clone>(keys: &mut [K]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    let mut r = 0u32;
    for w in 0..order.len() {
        if w > 0 && keys[order[w]] != keys[order[w - 1]] {
            r += 1;
        }
        ranks[order[w]] = r;
    }
    ranks
}

fn class_count(ranks: &[u32]) -> usize {
    ranks.iter().max().map_or(0, |&m| m as usize + 1)
}

/// Refines ranks until the partition is equitable.
pub(crate) fn refine(mol: &Molecule, mut ranks: Vec<u32>) -> Vec<u32> {
    let mut classes = class_count(&ranks);
    loop {
        let mut keys: Vec<(u32, Vec<(u32, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nbs: Vec<(u32, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|nb| (ranks[nb.atom], mol.bonds[nb.bond].order.code()))
                    .collect();
                nbs.sort_unstable();
                (ranks[i], nbs)
            })
            .collect();
        let next = dense_ranks(&mut keys);
        let next_classes = class_count(&next);
        ranks = next;
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
    }
}

struct Search<'a> {
    mol: &'a Molecule,
    leaves: usize,
    best: Option<String>,
}

impl Search<'_> {
    fn explore(&mut self, ranks: Vec<u32>) {
        let ranks = refine(self.mol, ranks);
        let n = ranks.len();
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r as usize] += 1;
        }
        let Some(tied) = counts.iter().position(|&c| c > 1) else {
            self.leaves += 1;
            let s = write_smiles(self.mol, &ranks);
            if self.best.as_ref().is_none_or(|b| s < *b) {
                self.best = Some(s);
            }
            return;
        };
        let tied = tied as u32;
        let candidates: Vec<usize> = (0..n).filter(|&i| ranks[i] == tied).collect();
        let mut reps: Vec<usize> = Vec::new();
        for &c in &candidates {
            if !reps.iter().any(|&r| are_twins(self.mol, r, c)) {
                reps.push(c);
            }
        }
        for (k, &c) in reps.iter().enumerate() {
            if k > 0 && self.leaves >= LEAF_BUDGET {
                break;
            }
            let next: Vec<u32> = ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| if i == c { 2 * r } else { 2 * r + 1 })
                .collect();
            self.explore(next);
        }
    }
}

/// True if swapping `x` and `y` maps the graph onto itself.
fn are_twins(mol: &Molecule, x: usize, y: usize) -> bool {
    if mol.neighbors(x).len() != mol.neighbors(y).len() {
        return false;
    }
    let order_to = |from: usize, to: usize| mol.bond_between(from, to).map(|b| mol.bonds[b].order);
    mol.neighbors(x).iter().all(|nb| {
        nb.atom == y || order_to(y, nb.atom) == Some(mol.bonds[nb.bond].order)
    })
}

fn bond_symbol(mol: &Molecule, bond: usize) -> &'static str {
    let bd = mol.bonds[bond];
    match bd.order {
        BondOrder::Single => {
            if mol.atom(bd.a).aromatic && mol.atom(bd.b).aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

fn atom_symbol(mol: &Molecule, i: usize) -> String {
    let a = mol.atom(i);
    let symbol = if a.aromatic {
        a.element.symbol().to_ascii_lowercase()
    } else {
        a.element.symbol().to_string()
    };
    if a.element.is_organic_subset() && a.formal_charge == 0 {
        let probe = DraftAtom {
            hydrogens: None,
            ..DraftAtom::from(*a)
        };
        if valence::default_hydrogens(&probe, i, &mol.bonds, &mol.adjacency) == Some(a.implicit_hydrogens) {
            return symbol;
        }
    }
    let mut out = String::with_capacity(8);
    out.push('[');
    out.push_str(&symbol);
    match a.implicit_hydrogens {
        0 => {}
        1 => out.push('H'),
        h => {
            out.push('H');
            out.push_str(&h.to_string());
        }
    }
    match a.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

/// Writes SMILES following the given (discrete) ranking: each fragment starts
/// at its lowest-ranked atom and neighbours are visited in rank order.
pub(crate) fn write_smiles(mol: &Molecule, ranks: &[u32]) -> String {
    let n = mol.atom_count();
    let sorted_neighbors = |u: usize| {
        let mut v = mol.neighbors(u).to_vec();
        v.sort_by_key(|nb| ranks[nb.atom]);
        v
    };

    // Pass 1: DFS to classify tree bonds and ring-closure bonds.
    let mut visit = vec![usize::MAX; n];
    let mut tree_bond = vec![false; mol.bonds.len()];
    let mut counter = 0;
    let mut roots: Vec<usize> = Vec::new();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| ranks[i]);
    for &start in &by_rank {
        if visit[start] != usize::MAX {
            continue;
        }
        roots.push(start);
        let mut stack = vec![(start, usize::MAX, sorted_neighbors(start), 0usize)];
        visit[start] = counter;
        counter += 1;
        while let Some((_, parent_bond, nbs, idx)) = stack.last_mut() {
            if let Some(nb) = nbs.get(*idx).copied() {
                *idx += 1;
                if nb.bond == *parent_bond {
                    continue;
                }
                if visit[nb.atom] == usize::MAX {
                    tree_bond[nb.bond] = true;
                    visit[nb.atom] = counter;
                    counter += 1;
                    let child_nbs = sorted_neighbors(nb.atom);
                    stack.push((nb.atom, nb.bond, child_nbs, 0));
                }
            } else {
                stack.pop();
            }
        }
    }

    // Pass 2: emit.
    let mut out = String::new();
    let mut digit_of_bond: Vec<Option<usize>> = vec![None; mol.bonds.len()];
    let mut digits_in_use: Vec<bool> = Vec::new();
    for (ri, &root) in roots.iter().enumerate() {
        if ri > 0 {
            out.push('.');
        }
        emit(
            mol,
            ranks,
            root,
            usize::MAX,
            &visit,
            &tree_bond,
            &mut digit_of_bond,
            &mut digits_in_use,
            &mut out,
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    ranks: &[u32],
    u: usize,
    parent_bond: usize,
    visit: &[usize],
    tree_bond: &[bool],
    digit_of_bond: &mut Vec<Option<usize>>,
    digits_in_use: &mut Vec<bool>,
    out: &mut String,
) {
    out.push_str(&atom_symbol(mol, u));
    let mut nbs = mol.neighbors(u).to_vec();
    nbs.sort_by_key(|nb| ranks[nb.atom]);

    // Closures: ring bonds whose other end was visited earlier.
    let mut closing: Vec<(usize, usize)> = nbs
        .iter()
        .filter(|nb| nb.bond != parent_bond && !tree_bond[nb.bond] && visit[nb.atom] < visit[u])
        .map(|nb| (digit_of_bond[nb.bond].expect("opened earlier"), nb.bond))
        .collect();
    closing.sort_unstable();
    for &(d, _) in &closing {
        out.push_str(&ring_label(d));
        digits_in_use[d] = false;
    }
    for nb in nbs
        .iter()
        .filter(|nb| !tree_bond[nb.bond] && visit[nb.atom] > visit[u])
    {
        let d = match digits_in_use.iter().skip(1).position(|used| !used) {
            Some(p) => p + 1,
            None => {
                if digits_in_use.is_empty() {
                    digits_in_use.push(true);
                }
                digits_in_use.push(false);
                digits_in_use.len() - 1
            }
        };
        digits_in_use[d] = true;
        digit_of_bond[nb.bond] = Some(d);
        out.push_str(bond_symbol(mol, nb.bond));
        out.push_str(&ring_label(d));
    }

    let children: Vec<_> = nbs
        .iter()
        .filter(|nb| tree_bond[nb.bond] && nb.bond != parent_bond && visit[nb.atom] > visit[u])
        .copied()
        .collect();
    for (k, child) in children.iter().enumerate() {
        let last = k + 1 == children.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_symbol(mol, child.bond));
        emit(
            mol,
            ranks,
            child.atom,
            child.bond,
            visit,
            tree_bond,
            digit_of_bond,
            digits_in_use,
            out,
        );
        if !last {
            out.push(')');
        }
    }
}
