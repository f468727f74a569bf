use serde::{Deserialize, Serialize};

use super::{rings, Bond, BondOrder, DraftAtom, Molecule, Neighbor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValenceIssue {
    /// Bond orders plus hydrogens do not add up to an allowed valence.
    Mismatch { total: u8, allowed: Vec<u8> },
    /// No allowed valence can accommodate the atom's bonds.
    NoAllowedValence,
    /// Formal charge outside [-2, +2].
    UnsupportedCharge { charge: i8 },
    /// Element cannot be aromatic.
    AromaticElement,
    /// Aromatic atom or bond that is not part of any ring.
    NonRingAromatic,
    /// No alternating single/double assignment exists for the aromatic system.
    KekuleFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValenceViolation {
    pub atom: usize,
    #[serde(flatten)]
    pub issue: ValenceIssue,
}

/// Sum of bond orders (aromatic counted as 1) and number of aromatic bonds.
fn bond_sum(atom: usize, bonds: &[Bond], adjacency: &[Vec<Neighbor>]) -> (u32, u32) {
    let mut sum = 0;
    let mut aromatic = 0;
    for nb in &adjacency[atom] {
        let order = bonds[nb.bond].order;
        sum += u32::from(order.base_valence());
        if order == BondOrder::Aromatic {
            aromatic += 1;
        }
    }
    (sum, aromatic)
}

fn lowest_allowed_at_least(allowed: &[u8], sum: u32) -> Option<u32> {
    allowed.iter().map(|&v| u32::from(v)).find(|&v| v >= sum)
}

/// Default hydrogen count for an atom written without an explicit count.
///
/// Aliphatic atoms fill up to the lowest allowed valence. Aromatic atoms keep
/// one unit of valence free for the double bond of the Kekulé form when the
/// lowest valence leaves room for it (pyridine `n` gets 0 H, benzene `c` 1 H,
/// furan `o` keeps no double bond).
pub(crate) fn default_hydrogens(
    atom: &DraftAtom,
    idx: usize,
    bonds: &[Bond],
    adjacency: &[Vec<Neighbor>],
) -> Option<u8> {
    let (sum, _) = bond_sum(idx, bonds, adjacency);
    let allowed = atom.element.allowed_valences(atom.formal_charge);
    let v = lowest_allowed_at_least(&allowed, sum)?;
    let free = v - sum;
    let h = if atom.aromatic && free >= 1 { free - 1 } else { free };
    u8::try_from(h).ok()
}

/// Whether an aromatic atom needs a double bond inside its aromatic system.
fn needs_double(mol: &Molecule, i: usize) -> bool {
    let atom = mol.atom(i);
    if !atom.aromatic {
        return false;
    }
    let (sum, aromatic) = bond_sum(i, &mol.bonds, &mol.adjacency);
    if aromatic == 0 {
        return false;
    }
    let total = sum + u32::from(atom.implicit_hydrogens);
    let allowed = atom.element.allowed_valences(atom.formal_charge);
    match lowest_allowed_at_least(&allowed, total) {
        Some(v) => v > total,
        None => false,
    }
}

const KEKULE_STEP_BUDGET: usize = 200_000;

/// Resolves aromatic bonds into single/double orders.
///
/// Returns per-bond integer orders, or the atoms that could not be given a
/// double bond.
pub fn kekulize(mol: &Molecule) -> Result<Vec<u8>, Vec<usize>> {
    let mut orders: Vec<u8> = mol.bonds.iter().map(|b| b.order.base_valence()).collect();
    let need: Vec<bool> = (0..mol.atom_count()).map(|i| needs_double(mol, i)).collect();
    if !need.iter().any(|&n| n) {
        return Ok(orders);
    }
    let mut partner: Vec<Option<usize>> = vec![None; mol.atom_count()];
    let mut steps = 0usize;
    if solve_matching(mol, &need, &mut partner, &mut steps) {
        for (i, p) in partner.iter().enumerate() {
            if let Some(bond) = p {
                if mol.bonds[*bond].a == i {
                    orders[*bond] = 2;
                }
            }
        }
        Ok(orders)
    } else {
        let failed = (0..mol.atom_count())
            .filter(|&i| need[i] && partner[i].is_none())
            .collect::<Vec<_>>();
        if failed.is_empty() {
            Err((0..mol.atom_count()).filter(|&i| need[i]).collect())
        } else {
            Err(failed)
        }
    }
}

fn candidate_bonds(mol: &Molecule, need: &[bool], partner: &[Option<usize>], i: usize) -> Vec<usize> {
    mol.neighbors(i)
        .iter()
        .filter(|nb| {
            mol.bonds[nb.bond].order == BondOrder::Aromatic && need[nb.atom] && partner[nb.atom].is_none()
        })
        .map(|nb| nb.bond)
        .collect()
}

fn solve_matching(
    mol: &Molecule,
    need: &[bool],
    partner: &mut Vec<Option<usize>>,
    steps: &mut usize,
) -> bool {
    *steps += 1;
    if *steps > KEKULE_STEP_BUDGET {
        return false;
    }
    // Most constrained unmatched atom first.
    let mut best: Option<(usize, Vec<usize>)> = None;
    for i in 0..mol.atom_count() {
        if !need[i] || partner[i].is_some() {
            continue;
        }
        let cands = candidate_bonds(mol, need, partner, i);
        let better = match &best {
            None => true,
            Some((_, c)) => cands.len() < c.len(),
        };
        if better {
            let done = cands.len() <= 1;
            best = Some((i, cands));
            if done {
                break;
            }
        }
    }
    let Some((atom, cands)) = best else {
        return true;
    };
    for bond in cands {
        let other = mol.bonds[bond].other(atom);
        partner[atom] = Some(bond);
        partner[other] = Some(bond);
        if solve_matching(mol, need, partner, steps) {
            return true;
        }
        partner[atom] = None;
        partner[other] = None;
        if *steps > KEKULE_STEP_BUDGET {
            break;
        }
    }
    false
}

/// Checks every atom against the valence table. Never panics; an empty
/// violation list is returned as `Ok`.
pub fn validate_valence(mol: &Molecule) -> Result<(), Vec<ValenceViolation>> {
    let mut violations = Vec::new();
    let ring = rings::ring_bond_mask(mol);
    for (i, atom) in mol.atoms().iter().enumerate() {
        if !(-2..=2).contains(&atom.formal_charge) {
            violations.push(ValenceViolation {
                atom: i,
                issue: ValenceIssue::UnsupportedCharge {
                    charge: atom.formal_charge,
                },
            });
        }
        if atom.aromatic {
            if !atom.element.can_be_aromatic() {
                violations.push(ValenceViolation {
                    atom: i,
                    issue: ValenceIssue::AromaticElement,
                });
            }
            let in_ring = mol.neighbors(i).iter().any(|nb| ring[nb.bond]);
            let bad_bond = mol
                .neighbors(i)
                .iter()
                .any(|nb| mol.bonds()[nb.bond].order == BondOrder::Aromatic && !ring[nb.bond]);
            if !in_ring || bad_bond {
                violations.push(ValenceViolation {
                    atom: i,
                    issue: ValenceIssue::NonRingAromatic,
                });
            }
        }
    }
    let orders = match kekulize(mol) {
        Ok(orders) => orders,
        Err(failed) => {
            violations.extend(failed.into_iter().map(|atom| ValenceViolation {
                atom,
                issue: ValenceIssue::KekuleFailure,
            }));
            mol.bonds().iter().map(|b| b.order.base_valence()).collect()
        }
    };
    for (i, atom) in mol.atoms().iter().enumerate() {
        let bonded: u32 = mol.neighbors(i).iter().map(|nb| u32::from(orders[nb.bond])).sum();
        let total = bonded + u32::from(atom.implicit_hydrogens);
        let allowed = atom.element.allowed_valences(atom.formal_charge);
        if !allowed.iter().any(|&v| u32::from(v) == total) {
            violations.push(ValenceViolation {
                atom: i,
                issue: ValenceIssue::Mismatch {
                    total: u8::try_from(total).unwrap_or(u8::MAX),
                    allowed,
                },
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        violations.sort_by_key(|v| v.atom);
        Err(violations)
    }
}
