use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::molgraph::{ring_atoms, Element, Molecule};

/// Seed of the environment hash. Changing it changes every stored fingerprint.
pub const FINGERPRINT_SEED: u64 = 0x6d6f_6c67_6166_7031;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintParams {
    pub radius: u32,
    pub n_bits: usize,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            radius: 2,
            n_bits: 2048,
        }
    }
}

impl FingerprintParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !self.n_bits.is_power_of_two() || !(256..=8192).contains(&self.n_bits) {
            return Err(MetricsError::InvalidBitCount(self.n_bits));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    words: Vec<u64>,
    n_bits: usize,
    radius: u32,
}

impl Fingerprint {
    pub fn empty(n_bits: usize, radius: u32) -> Result<Self, MetricsError> {
        FingerprintParams { radius, n_bits }.validate()?;
        Ok(Fingerprint {
            words: vec![0; n_bits.div_ceil(64)],
            n_bits,
            radius,
        })
    }

    /// Builds a fingerprint with the given bits set (indices taken mod n_bits).
    pub fn from_bits(n_bits: usize, bits: impl IntoIterator<Item = usize>) -> Result<Self, MetricsError> {
        let mut fp = Fingerprint::empty(n_bits, 0)?;
        for b in bits {
            fp.set(b);
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % self.n_bits;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        let bit = bit % self.n_bits;
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_bits).filter(|&b| self.get(b))
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix(FINGERPRINT_SEED), |h, &w| splitmix(h ^ splitmix(w)))
}

/// ECFP-style circular fingerprint.
///
/// Each heavy atom starts from a hash of (element, heavy degree, hydrogens,
/// charge, aromatic, ring membership); each iteration rehashes the atom's
/// previous identifier with the sorted (bond order, neighbour identifier)
/// pairs. Identifiers from every (atom, radius) pair are deduplicated and
/// folded onto `n_bits` positions.
pub fn morgan_fingerprint(mol: &Molecule, params: FingerprintParams) -> Result<Fingerprint, MetricsError> {
    params.validate()?;
    let mut fp = Fingerprint::empty(params.n_bits, params.radius)?;
    let ring = ring_atoms(mol);
    let heavy: Vec<usize> = (0..mol.atom_count())
        .filter(|&i| mol.atom(i).element != Element::H)
        .collect();
    let mut ids = vec![0u64; mol.atom_count()];
    for &i in &heavy {
        let a = mol.atom(i);
        ids[i] = hash_words(&[
            u64::from(a.element.atomic_number()),
            mol.heavy_degree(i) as u64,
            mol.total_hydrogens(i) as u64,
            (i64::from(a.formal_charge) + 8) as u64,
            u64::from(a.aromatic),
            u64::from(ring[i]),
        ]);
    }
    let mut seen: BTreeSet<u64> = heavy.iter().map(|&i| ids[i]).collect();
    for r in 1..=params.radius {
        let mut next = ids.clone();
        for &i in &heavy {
            let mut env: Vec<(u64, u64)> = mol
                .neighbors(i)
                .iter()
                .filter(|nb| mol.atom(nb.atom).element != Element::H)
                .map(|nb| (u64::from(mol.bonds()[nb.bond].order.code()), ids[nb.atom]))
                .collect();
            env.sort_unstable();
            let mut words = vec![u64::from(r), ids[i]];
            for (o, id) in env {
                words.push(o);
                words.push(id);
            }
            next[i] = hash_words(&words);
        }
        ids = next;
        seen.extend(heavy.iter().map(|&i| ids[i]));
    }
    for id in seen {
        fp.set((id % params.n_bits as u64) as usize);
    }
    Ok(fp)
}

/// |a ∧ b| / |a ∨ b|, defined as 1 for two empty fingerprints.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, MetricsError> {
    if a.n_bits != b.n_bits {
        return Err(MetricsError::LengthMismatch(a.n_bits, b.n_bits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(inter) / f64::from(union))
}
