use rand::Rng;
use serde::{Deserialize, Serialize};

use super::select::pick_index;
use super::GaError;
use crate::molgraph::{ring_bonds, Bond, BondOrder, DraftAtom, Molecule, MoleculeDraft};

/// One crossover choice: the cut bond in each parent and which side of the
/// cut is kept (`true` keeps the fragment holding the bond's `a` atom).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverCut {
    pub bond_a: usize,
    pub keep_first_a: bool,
    pub bond_b: usize,
    pub keep_first_b: bool,
}

/// Single bonds outside rings whose endpoints are both heavy atoms.
pub fn acyclic_single_bonds(mol: &Molecule) -> Vec<usize> {
    let ring = ring_bonds(mol);
    mol.bonds()
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            b.order == BondOrder::Single
                && !ring.contains(i)
                && mol.atom(b.a).element.is_heavy()
                && mol.atom(b.b).element.is_heavy()
        })
        .map(|(i, _)| i)
        .collect()
}

/// Atoms reachable from `start` without crossing bond `cut`, in BFS order.
fn fragment(mol: &Molecule, start: usize, cut: usize) -> Vec<usize> {
    let mut seen = vec![false; mol.atom_count()];
    seen[start] = true;
    let mut out = vec![start];
    let mut head = 0;
    while head < out.len() {
        let a = out[head];
        head += 1;
        for nb in mol.neighbors(a) {
            if nb.bond != cut && !seen[nb.atom] {
                seen[nb.atom] = true;
                out.push(nb.atom);
            }
        }
    }
    out
}

fn copy_fragment(draft: &mut MoleculeDraft, mol: &Molecule, atoms: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; mol.atom_count()];
    for &a in atoms {
        map[a] = Some(draft.add_atom(DraftAtom::from(*mol.atom(a))));
    }
    for b in mol.bonds() {
        if let (Some(x), Some(y)) = (map[b.a], map[b.b]) {
            draft.bonds.push(Bond { a: x, b: y, order: b.order });
        }
    }
    map
}

/// Applies a fixed cut choice. Hydrogen counts are unchanged: each
/// attachment atom loses one single bond and gains another.
pub fn crossover_with(a: &Molecule, b: &Molecule, cut: CrossoverCut) -> Option<Molecule> {
    let ba = a.bonds().get(cut.bond_a)?;
    let bb = b.bonds().get(cut.bond_b)?;
    let root_a = if cut.keep_first_a { ba.a } else { ba.b };
    let root_b = if cut.keep_first_b { bb.a } else { bb.b };
    let frag_a = fragment(a, root_a, cut.bond_a);
    let frag_b = fragment(b, root_b, cut.bond_b);
    if frag_a.contains(&ba.other(root_a)) || frag_b.contains(&bb.other(root_b)) {
        return None;
    }
    let mut draft = MoleculeDraft::default();
    let map_a = copy_fragment(&mut draft, a, &frag_a);
    let map_b = copy_fragment(&mut draft, b, &frag_b);
    draft.add_bond(map_a[root_a]?, map_b[root_b]?, BondOrder::Single);
    let child = draft.build().ok()?;
    child.is_connected().then(|| child.canonicalized())
}

/// Every offspring reachable from the two parents, one per cut choice.
pub fn enumerate_crossovers(a: &Molecule, b: &Molecule) -> Vec<(CrossoverCut, Molecule)> {
    let mut out = Vec::new();
    for bond_a in acyclic_single_bonds(a) {
        for keep_first_a in [true, false] {
            for bond_b in acyclic_single_bonds(b) {
                for keep_first_b in [true, false] {
                    let cut = CrossoverCut {
                        bond_a,
                        keep_first_a,
                        bond_b,
                        keep_first_b,
                    };
                    if let Some(m) = crossover_with(a, b, cut) {
                        out.push((cut, m));
                    }
                }
            }
        }
    }
    out
}

/// Graph crossover: cut one random acyclic single bond in each parent and
/// join one fragment of each with a new single bond. Invalid offspring are
/// resampled up to `retries` times.
pub fn crossover<R: Rng + ?Sized>(
    a: &Molecule,
    b: &Molecule,
    rng: &mut R,
    retries: u32,
) -> Result<(Molecule, CrossoverCut), GaError> {
    let cuts_a = acyclic_single_bonds(a);
    let cuts_b = acyclic_single_bonds(b);
    if cuts_a.is_empty() || cuts_b.is_empty() {
        return Err(GaError::Rejected);
    }
    for _ in 0..=retries {
        let cut = CrossoverCut {
            bond_a: cuts_a[pick_index(rng, cuts_a.len())],
            keep_first_a: rng.random::<bool>(),
            bond_b: cuts_b[pick_index(rng, cuts_b.len())],
            keep_first_b: rng.random::<bool>(),
        };
        if let Some(child) = crossover_with(a, b, cut) {
            return Ok((child, cut));
        }
    }
    Err(GaError::Rejected)
}
