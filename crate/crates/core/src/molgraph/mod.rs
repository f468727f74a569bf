//! Molecular graphs: SMILES parsing and writing, canonical keys, valence
//! checks, ring perception and 2D depiction coordinates.

mod canon;
mod element;
mod layout;
mod mass;
mod parse;
mod rings;
mod valence;

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use canon::canonical_smiles;
pub use element::Element;
pub use layout::{layout_2d, Layout};
pub use mass::{atomic_mass, molecular_weight};
pub use parse::{parse_smiles, parse_single, SmilesError, SmilesErrorKind, MAX_SMILES_LEN};
pub use rings::{cycle_rank, ring_atoms, ring_bonds, smallest_rings};
pub use valence::{kekulize, validate_valence, ValenceIssue, ValenceViolation};

/// Engine-wide cap on heavy atoms per molecule.
pub const MAX_HEAVY_ATOMS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub implicit_hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer order used for valence sums; aromatic bonds count as one
    /// until a Kekulé assignment resolves them.
    pub fn base_valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub atom: usize,
    pub bond: usize,
}

/// Errors raised while assembling a molecule from atoms and bonds.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("molecule has no atoms")]
    Empty,
    #[error("bond {bond} references a missing atom")]
    DanglingBond { bond: usize },
    #[error("bond {bond} joins atom {atom} to itself")]
    SelfBond { bond: usize, atom: usize },
    #[error("atoms {a} and {b} are bonded more than once")]
    DuplicateBond { a: usize, b: usize },
    #[error("aromatic bond {bond} touches a non-aromatic atom")]
    AromaticBondMismatch { bond: usize },
    #[error("{count} heavy atoms exceeds the cap of {MAX_HEAVY_ATOMS}")]
    TooManyAtoms { count: usize },
    #[error("valence violations: {0:?}")]
    Valence(Vec<ValenceViolation>),
}

/// An atom whose hydrogen count may still need to be derived from its bonds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DraftAtom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// `None` means "derive the default count from the valence model".
    pub hydrogens: Option<u8>,
}

impl DraftAtom {
    pub fn new(element: Element) -> Self {
        DraftAtom {
            element,
            formal_charge: 0,
            aromatic: false,
            hydrogens: None,
        }
    }
}

impl From<Atom> for DraftAtom {
    fn from(atom: Atom) -> Self {
        DraftAtom {
            element: atom.element,
            formal_charge: atom.formal_charge,
            aromatic: atom.aromatic,
            hydrogens: Some(atom.implicit_hydrogens),
        }
    }
}

/// Mutable staging area for graph edits; `build` validates and freezes it.
#[derive(Debug, Clone, Default)]
pub struct MoleculeDraft {
    pub atoms: Vec<DraftAtom>,
    pub bonds: Vec<Bond>,
}

impl MoleculeDraft {
    pub fn add_atom(&mut self, atom: DraftAtom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> usize {
        self.bonds.push(Bond { a, b, order });
        self.bonds.len() - 1
    }

    /// Marks an atom's hydrogen count for re-derivation after its bonds changed.
    pub fn touch(&mut self, atom: usize) {
        if let Some(a) = self.atoms.get_mut(atom) {
            a.hydrogens = None;
        }
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    /// Removes an atom and every bond touching it; neighbours are touched.
    pub fn remove_atom(&mut self, atom: usize) {
        let mut neighbours = Vec::new();
        self.bonds.retain(|bd| {
            if bd.a == atom || bd.b == atom {
                neighbours.push(bd.other(atom));
                false
            } else {
                true
            }
        });
        for n in neighbours {
            self.touch(n);
        }
        self.atoms.remove(atom);
        for bd in &mut self.bonds {
            if bd.a > atom {
                bd.a -= 1;
            }
            if bd.b > atom {
                bd.b -= 1;
            }
        }
    }

    pub fn build(self) -> Result<Molecule, BuildError> {
        if self.atoms.is_empty() {
            return Err(BuildError::Empty);
        }
        let heavy = self.atoms.iter().filter(|a| a.element.is_heavy()).count();
        if heavy > MAX_HEAVY_ATOMS {
            return Err(BuildError::TooManyAtoms { count: heavy });
        }
        let n = self.atoms.len();
        let mut seen = std::collections::BTreeSet::new();
        for (i, bd) in self.bonds.iter().enumerate() {
            if bd.a >= n || bd.b >= n {
                return Err(BuildError::DanglingBond { bond: i });
            }
            if bd.a == bd.b {
                return Err(BuildError::SelfBond { bond: i, atom: bd.a });
            }
            if !seen.insert((bd.a.min(bd.b), bd.a.max(bd.b))) {
                return Err(BuildError::DuplicateBond { a: bd.a, b: bd.b });
            }
            if bd.order == BondOrder::Aromatic
                && !(self.atoms[bd.a].aromatic && self.atoms[bd.b].aromatic)
            {
                return Err(BuildError::AromaticBondMismatch { bond: i });
            }
        }
        let adjacency = adjacency_of(n, &self.bonds);
        let mut atoms = Vec::with_capacity(n);
        let mut violations = Vec::new();
        for (i, da) in self.atoms.iter().enumerate() {
            let h = match da.hydrogens {
                Some(h) => h,
                None => match valence::default_hydrogens(da, i, &self.bonds, &adjacency) {
                    Some(h) => h,
                    None => {
                        violations.push(ValenceViolation {
                            atom: i,
                            issue: ValenceIssue::NoAllowedValence,
                        });
                        0
                    }
                },
            };
            atoms.push(Atom {
                element: da.element,
                formal_charge: da.formal_charge,
                aromatic: da.aromatic,
                implicit_hydrogens: h,
            });
        }
        if !violations.is_empty() {
            return Err(BuildError::Valence(violations));
        }
        let mol = Molecule::with_adjacency(atoms, self.bonds, adjacency);
        validate_valence(&mol).map_err(BuildError::Valence)?;
        Ok(mol)
    }
}

fn adjacency_of(n: usize, bonds: &[Bond]) -> Vec<Vec<Neighbor>> {
    let mut adjacency = vec![Vec::new(); n];
    for (i, bd) in bonds.iter().enumerate() {
        if bd.a < n && bd.b < n {
            adjacency[bd.a].push(Neighbor { atom: bd.b, bond: i });
            adjacency[bd.b].push(Neighbor { atom: bd.a, bond: i });
        }
    }
    adjacency
}

/// An attributed molecular graph.
///
/// Molecules built through [`MoleculeDraft::build`] or [`parse_smiles`] are
/// always valence-valid. [`Molecule::from_raw`] skips validation and exists so
/// that arbitrary graphs can be checked with [`validate_valence`].
#[derive(Clone)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<Neighbor>>,
    canonical: OnceLock<String>,
}

impl Molecule {
    /// Assembles a graph without any chemistry checks. Bonds that reference
    /// missing atoms are dropped from the adjacency lists.
    pub fn from_raw(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Molecule {
        let adjacency = adjacency_of(atoms.len(), &bonds);
        Molecule::with_adjacency(atoms, bonds, adjacency)
    }

    fn with_adjacency(atoms: Vec<Atom>, bonds: Vec<Bond>, adjacency: Vec<Vec<Neighbor>>) -> Self {
        Molecule {
            atoms,
            bonds,
            adjacency,
            canonical: OnceLock::new(),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element.is_heavy()).count()
    }

    /// Number of heavy-atom neighbours.
    pub fn heavy_degree(&self, i: usize) -> usize {
        self.adjacency[i]
            .iter()
            .filter(|n| self.atoms[n.atom].element.is_heavy())
            .count()
    }

    /// Implicit hydrogens plus explicit hydrogen neighbours.
    pub fn total_hydrogens(&self, i: usize) -> usize {
        let explicit = self.adjacency[i]
            .iter()
            .filter(|n| self.atoms[n.atom].element == Element::H)
            .count();
        explicit + usize::from(self.atoms[i].implicit_hydrogens)
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|n| n.atom == b).map(|n| n.bond)
    }

    /// Connected components as sorted atom index lists, ordered by first atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for nb in &self.adjacency[u] {
                    if comp[nb.atom] == usize::MAX {
                        comp[nb.atom] = id;
                        members.push(nb.atom);
                        stack.push(nb.atom);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Copies the molecule into an editable draft with hydrogen counts pinned.
    pub fn to_draft(&self) -> MoleculeDraft {
        MoleculeDraft {
            atoms: self.atoms.iter().copied().map(DraftAtom::from).collect(),
            bonds: self.bonds.clone(),
        }
    }

    /// The canonical SMILES, computed once and cached.
    pub fn canonical_key(&self) -> &str {
        self.canonical.get_or_init(|| canonical_smiles(self))
    }

    /// Re-parses the canonical SMILES so that atom order is the canonical
    /// output order. Two isomorphic molecules become structurally identical.
    pub fn canonicalized(&self) -> Molecule {
        let key = self.canonical_key().to_string();
        let mut frags = parse_smiles(&key).expect("canonical SMILES must re-parse");
        let mut mol = if frags.len() == 1 {
            frags.pop().expect("one fragment")
        } else {
            // Keep multi-fragment molecules whole.
            let mut draft = MoleculeDraft::default();
            for f in frags {
                let offset = draft.atoms.len();
                draft.atoms.extend(f.atoms.iter().copied().map(DraftAtom::from));
                draft.bonds.extend(f.bonds.iter().map(|b| Bond {
                    a: b.a + offset,
                    b: b.b + offset,
                    order: b.order,
                }));
            }
            draft.build().expect("fragments were valid")
        };
        mol.canonical = OnceLock::from(key);
        mol
    }
}

impl PartialEq for Molecule {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.bonds == other.bonds
    }
}

impl fmt::Debug for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Molecule")
            .field("smiles", &self.canonical_key())
            .field("atoms", &self.atoms.len())
            .field("bonds", &self.bonds.len())
            .finish()
    }
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_key())
    }
}

impl Serialize for Molecule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.canonical_key())
    }
}

impl<'de> Deserialize<'de> for Molecule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_single(&text).map_err(serde::de::Error::custom)
    }
}
