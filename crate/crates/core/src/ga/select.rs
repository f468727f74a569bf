use rand::Rng;

use super::{GaError, Individual};

/// Uniform index in `0..n` drawn through a 32-bit range so that streams do
/// not depend on pointer width.
pub(crate) fn pick_index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0 && n <= u32::MAX as usize);
    rng.random_range(0..n as u32) as usize
}

/// Orders valid individuals by total descending, then canonical key.
pub fn rank_order(population: &[Individual]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..population.len())
        .filter(|&i| population[i].report.valid)
        .collect();
    idx.sort_by(|&a, &b| {
        let ta = population[a].report.total.unwrap_or(f64::NEG_INFINITY);
        let tb = population[b].report.total.unwrap_or(f64::NEG_INFINITY);
        tb.total_cmp(&ta)
            .then_with(|| population[a].key().cmp(population[b].key()))
    });
    idx
}

/// Linear-ranking weight of 1-based rank `r` among `n`.
pub fn rank_weight(pressure: f64, r: usize, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    pressure - (2.0 * pressure - 2.0) * (r - 1) as f64 / (n - 1) as f64
}

/// Rank-roulette sampler over the valid members of a population.
#[derive(Debug, Clone)]
pub struct RankedPool {
    order: Vec<usize>,
    cumulative: Vec<f64>,
}

impl RankedPool {
    pub fn new(population: &[Individual], pressure: f64) -> Result<Self, GaError> {
        let order = rank_order(population);
        if order.is_empty() {
            return Err(GaError::NoValidCandidates);
        }
        let n = order.len();
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|r| {
                acc += rank_weight(pressure, r, n);
                acc
            })
            .collect();
        Ok(RankedPool { order, cumulative })
    }

    /// Population indices, best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty pool");
        let x = rng.random::<f64>() * total;
        let pos = self.cumulative.partition_point(|&c| c <= x);
        self.order[pos.min(self.order.len() - 1)]
    }
}

/// Draws one parent by rank roulette; invalid individuals are never chosen.
pub fn select_parent<'a, R: Rng + ?Sized>(
    population: &'a [Individual],
    pressure: f64,
    rng: &mut R,
) -> Result<&'a Individual, GaError> {
    let pool = RankedPool::new(population, pressure)?;
    Ok(&population[pool.pick(rng)])
}
