use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::select::pick_index;
use super::GaError;
use crate::molgraph::{ring_bonds, BondOrder, DraftAtom, Element, Molecule, MoleculeDraft};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    AppendAtom,
    DeleteAtom,
    SubstituteElement,
    ChangeBondOrder,
    InsertAtom,
    FormRing,
    BreakRing,
}

/// Mutation edits and their draw probabilities.
pub const MUTATION_CATALOGUE: [(EditKind, f64); 7] = [
    (EditKind::AppendAtom, 0.25),
    (EditKind::DeleteAtom, 0.15),
    (EditKind::SubstituteElement, 0.20),
    (EditKind::ChangeBondOrder, 0.15),
    (EditKind::InsertAtom, 0.10),
    (EditKind::FormRing, 0.075),
    (EditKind::BreakRing, 0.075),
];

pub const APPEND_ELEMENTS: [Element; 6] = [Element::C, Element::N, Element::O, Element::F, Element::Cl, Element::S];
pub const SUBSTITUTE_ELEMENTS: [Element; 7] = [
    Element::C,
    Element::N,
    Element::O,
    Element::S,
    Element::F,
    Element::Cl,
    Element::Br,
];
pub const AROMATIC_SUBSTITUTE_ELEMENTS: [Element; 2] = [Element::C, Element::N];
pub const INSERT_ELEMENTS: [Element; 4] = [Element::C, Element::N, Element::O, Element::S];

/// One concrete graph edit. Indices refer to the input molecule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    AppendAtom { anchor: usize, element: Element },
    DeleteAtom { atom: usize },
    SubstituteElement { atom: usize, element: Element },
    ChangeBondOrder { bond: usize, order: BondOrder },
    InsertAtom { bond: usize, element: Element },
    /// Closes a 5- or 6-membered ring with a new single bond.
    FormRing { a: usize, b: usize },
    BreakRing { bond: usize },
}

impl Edit {
    pub fn kind(&self) -> EditKind {
        match self {
            Edit::AppendAtom { .. } => EditKind::AppendAtom,
            Edit::DeleteAtom { .. } => EditKind::DeleteAtom,
            Edit::SubstituteElement { .. } => EditKind::SubstituteElement,
            Edit::ChangeBondOrder { .. } => EditKind::ChangeBondOrder,
            Edit::InsertAtom { .. } => EditKind::InsertAtom,
            Edit::FormRing { .. } => EditKind::FormRing,
            Edit::BreakRing { .. } => EditKind::BreakRing,
        }
    }
}

fn order_value(o: BondOrder) -> i32 {
    i32::from(o.base_valence())
}

fn heavy(mol: &Molecule, i: usize) -> bool {
    mol.atom(i).element.is_heavy()
}

fn bond_distances(mol: &Molecule, from: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; mol.atom_count()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(a) = queue.pop_front() {
        for nb in mol.neighbors(a) {
            if dist[nb.atom] == usize::MAX {
                dist[nb.atom] = dist[a] + 1;
                queue.push_back(nb.atom);
            }
        }
    }
    dist
}

/// Every applicable edit of one kind, in a fixed order.
pub fn candidate_edits(mol: &Molecule, kind: EditKind) -> Vec<Edit> {
    let n = mol.atom_count();
    let hs = |i: usize| mol.atom(i).implicit_hydrogens;
    let mut out = Vec::new();
    match kind {
        EditKind::AppendAtom => {
            for anchor in (0..n).filter(|&i| heavy(mol, i) && hs(i) >= 1) {
                for element in APPEND_ELEMENTS {
                    out.push(Edit::AppendAtom { anchor, element });
                }
            }
        }
        EditKind::DeleteAtom => {
            if mol.heavy_atom_count() >= 2 {
                for atom in 0..n {
                    if heavy(mol, atom) && !mol.atom(atom).aromatic && mol.neighbors(atom).len() == 1 {
                        out.push(Edit::DeleteAtom { atom });
                    }
                }
            }
        }
        EditKind::SubstituteElement => {
            for atom in (0..n).filter(|&i| heavy(mol, i)) {
                let a = mol.atom(atom);
                let pool: &[Element] = if a.aromatic {
                    &AROMATIC_SUBSTITUTE_ELEMENTS
                } else {
                    &SUBSTITUTE_ELEMENTS
                };
                for &element in pool.iter().filter(|&&e| e != a.element) {
                    out.push(Edit::SubstituteElement { atom, element });
                }
            }
        }
        EditKind::ChangeBondOrder => {
            for (bond, b) in mol.bonds().iter().enumerate() {
                if b.order == BondOrder::Aromatic
                    || !heavy(mol, b.a)
                    || !heavy(mol, b.b)
                    || mol.atom(b.a).aromatic
                    || mol.atom(b.b).aromatic
                {
                    continue;
                }
                for order in [BondOrder::Single, BondOrder::Double, BondOrder::Triple] {
                    let delta = order_value(order) - order_value(b.order);
                    if delta == 0 || i32::from(hs(b.a)) < delta || i32::from(hs(b.b)) < delta {
                        continue;
                    }
                    out.push(Edit::ChangeBondOrder { bond, order });
                }
            }
        }
        EditKind::InsertAtom => {
            for (bond, b) in mol.bonds().iter().enumerate() {
                let touches_aromatic = mol.atom(b.a).aromatic || mol.atom(b.b).aromatic;
                if b.order == BondOrder::Aromatic
                    || !heavy(mol, b.a)
                    || !heavy(mol, b.b)
                    || (touches_aromatic && b.order != BondOrder::Single)
                {
                    continue;
                }
                for element in INSERT_ELEMENTS {
                    out.push(Edit::InsertAtom { bond, element });
                }
            }
        }
        EditKind::FormRing => {
            for a in (0..n).filter(|&i| heavy(mol, i) && hs(i) >= 1) {
                let dist = bond_distances(mol, a);
                for b in (a + 1..n).filter(|&j| heavy(mol, j) && hs(j) >= 1) {
                    if dist[b] == 4 || dist[b] == 5 {
                        out.push(Edit::FormRing { a, b });
                    }
                }
            }
        }
        EditKind::BreakRing => {
            for bond in ring_bonds(mol) {
                let b = mol.bonds()[bond];
                if b.order != BondOrder::Aromatic && heavy(mol, b.a) && heavy(mol, b.b) {
                    out.push(Edit::BreakRing { bond });
                }
            }
        }
    }
    out
}

/// Adjusts an atom's hydrogens after its bond-order sum changes by `delta`.
/// Aliphatic atoms are re-derived from the valence model; aromatic atoms
/// keep their ring state and trade hydrogens one for one.
fn rebond(draft: &mut MoleculeDraft, mol: &Molecule, atom: usize, delta: i32) -> Option<()> {
    if mol.atom(atom).aromatic {
        let h = i32::from(mol.atom(atom).implicit_hydrogens) - delta;
        draft.atoms[atom].hydrogens = Some(u8::try_from(h).ok()?);
    } else {
        draft.touch(atom);
    }
    Some(())
}

/// Applies one edit and validates the result (valence, connectivity, size).
pub fn apply_edit(mol: &Molecule, edit: &Edit) -> Option<Molecule> {
    let mut draft = mol.to_draft();
    let n = mol.atom_count();
    match *edit {
        Edit::AppendAtom { anchor, element } => {
            if anchor >= n || !heavy(mol, anchor) {
                return None;
            }
            let new = draft.add_atom(DraftAtom::new(element));
            draft.add_bond(anchor, new, BondOrder::Single);
            rebond(&mut draft, mol, anchor, 1)?;
        }
        Edit::DeleteAtom { atom } => {
            if atom >= n || mol.neighbors(atom).len() != 1 || mol.heavy_atom_count() < 2 {
                return None;
            }
            let nb = mol.neighbors(atom)[0];
            let order = order_value(mol.bonds()[nb.bond].order);
            rebond(&mut draft, mol, nb.atom, -order)?;
            let kept = draft.atoms[nb.atom].hydrogens;
            draft.remove_atom(atom);
            let shifted = if nb.atom > atom { nb.atom - 1 } else { nb.atom };
            if mol.atom(nb.atom).aromatic {
                draft.atoms[shifted].hydrogens = kept;
            }
        }
        Edit::SubstituteElement { atom, element } => {
            if atom >= n || !heavy(mol, atom) || mol.atom(atom).element == element {
                return None;
            }
            draft.atoms[atom].element = element;
            draft.touch(atom);
        }
        Edit::ChangeBondOrder { bond, order } => {
            let b = *mol.bonds().get(bond)?;
            if b.order == BondOrder::Aromatic || order == BondOrder::Aromatic || order == b.order {
                return None;
            }
            let delta = order_value(order) - order_value(b.order);
            draft.bonds[bond].order = order;
            rebond(&mut draft, mol, b.a, delta)?;
            rebond(&mut draft, mol, b.b, delta)?;
        }
        Edit::InsertAtom { bond, element } => {
            let b = *mol.bonds().get(bond)?;
            if b.order == BondOrder::Aromatic {
                return None;
            }
            let delta = 1 - order_value(b.order);
            draft.bonds.remove(bond);
            let new = draft.add_atom(DraftAtom::new(element));
            draft.add_bond(b.a, new, BondOrder::Single);
            draft.add_bond(new, b.b, BondOrder::Single);
            rebond(&mut draft, mol, b.a, delta)?;
            rebond(&mut draft, mol, b.b, delta)?;
        }
        Edit::FormRing { a, b } => {
            if a >= n || b >= n || a == b || mol.bond_between(a, b).is_some() {
                return None;
            }
            let d = bond_distances(mol, a)[b];
            if d != 4 && d != 5 {
                return None;
            }
            draft.add_bond(a, b, BondOrder::Single);
            rebond(&mut draft, mol, a, 1)?;
            rebond(&mut draft, mol, b, 1)?;
        }
        Edit::BreakRing { bond } => {
            let b = *mol.bonds().get(bond)?;
            if b.order == BondOrder::Aromatic || !ring_bonds(mol).contains(&bond) {
                return None;
            }
            let delta = -order_value(b.order);
            draft.bonds.remove(bond);
            rebond(&mut draft, mol, b.a, delta)?;
            rebond(&mut draft, mol, b.b, delta)?;
        }
    }
    let out = draft.build().ok()?;
    out.is_connected().then(|| out.canonicalized())
}

fn draw_kind<R: Rng + ?Sized>(rng: &mut R) -> EditKind {
    let x = rng.random::<f64>();
    let mut acc = 0.0;
    for (kind, p) in MUTATION_CATALOGUE {
        acc += p;
        if x < acc {
            return kind;
        }
    }
    MUTATION_CATALOGUE[MUTATION_CATALOGUE.len() - 1].0
}

/// Draws and applies one edit from the catalogue, resampling both the edit
/// kind and its target when the edit is inapplicable or invalid.
pub fn mutate<R: Rng + ?Sized>(mol: &Molecule, rng: &mut R, retries: u32) -> Result<(Molecule, Edit), GaError> {
    for _ in 0..=retries {
        let candidates = candidate_edits(mol, draw_kind(rng));
        if candidates.is_empty() {
            continue;
        }
        let edit = candidates[pick_index(rng, candidates.len())];
        if let Some(out) = apply_edit(mol, &edit) {
            return Ok((out, edit));
        }
    }
    Err(GaError::Rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_single;

    fn smiles_after(s: &str, edit: Edit) -> Option<String> {
        apply_edit(&parse_single(s).unwrap(), &edit).map(|m| m.canonical_key().to_string())
    }

    #[test]
    fn catalogue_sums_to_one() {
        let total: f64 = MUTATION_CATALOGUE.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn append_to_methane_gives_ethane() {
        let m = apply_edit(
            &parse_single("C").unwrap(),
            &Edit::AppendAtom {
                anchor: 0,
                element: Element::C,
            },
        )
        .unwrap();
        assert_eq!(m.heavy_atom_count(), 2);
        assert_eq!(m.bonds().len(), 1);
        assert_eq!(m.bonds()[0].order, BondOrder::Single);
        assert_eq!(m.canonical_key(), "CC");
    }

    #[test]
    fn single_atom_has_no_deletions() {
        assert!(candidate_edits(&parse_single("C").unwrap(), EditKind::DeleteAtom).is_empty());
        assert_eq!(smiles_after("CCO", Edit::DeleteAtom { atom: 2 }).as_deref(), Some("CC"));
    }

    #[test]
    fn aromatic_edits_keep_ring_hydrogens() {
        let pyrrole = parse_single("c1cc[nH]c1").unwrap();
        let n = (0..5).find(|&i| pyrrole.atom(i).element == Element::N).unwrap();
        let out = apply_edit(
            &pyrrole,
            &Edit::AppendAtom {
                anchor: n,
                element: Element::C,
            },
        )
        .unwrap();
        assert_eq!(out, parse_single("Cn1cccc1").unwrap().canonicalized());
        let toluene = parse_single("Cc1ccccc1").unwrap();
        assert_eq!(
            apply_edit(&toluene, &Edit::DeleteAtom { atom: 0 }).unwrap(),
            parse_single("c1ccccc1").unwrap().canonicalized()
        );
        assert_eq!(
            smiles_after(
                "c1ccccc1",
                Edit::SubstituteElement {
                    atom: 0,
                    element: Element::N
                }
            ),
            Some(parse_single("c1ccncc1").unwrap().canonical_key().to_string())
        );
    }

    #[test]
    fn bond_order_insert_ring_edits() {
        assert_eq!(
            smiles_after(
                "CCC",
                Edit::ChangeBondOrder {
                    bond: 0,
                    order: BondOrder::Double
                }
            )
            .as_deref(),
            Some("C=CC")
        );
        assert_eq!(
            smiles_after(
                "CC",
                Edit::InsertAtom {
                    bond: 0,
                    element: Element::O
                }
            )
            .as_deref(),
            Some("COC")
        );
        let hexane = parse_single("CCCCCC").unwrap();
        assert_eq!(
            apply_edit(&hexane, &Edit::FormRing { a: 0, b: 5 }).unwrap(),
            parse_single("C1CCCCC1").unwrap().canonicalized()
        );
        assert!(apply_edit(&hexane, &Edit::FormRing { a: 0, b: 2 }).is_none());
        let ring = parse_single("C1CCCCC1").unwrap();
        assert_eq!(
            apply_edit(&ring, &Edit::BreakRing { bond: 0 }).unwrap(),
            hexane.canonicalized()
        );
    }

    #[test]
    fn invalid_edits_are_refused() {
        // oxygen cannot take a triple bond
        assert!(smiles_after(
            "CO",
            Edit::ChangeBondOrder {
                bond: 0,
                order: BondOrder::Triple
            }
        )
        .is_none());
        assert!(smiles_after(
            "FC",
            Edit::AppendAtom {
                anchor: 0,
                element: Element::C
            }
        )
        .is_none());
    }
}
