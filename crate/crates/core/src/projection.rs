//! Deterministic 2D embedding of fingerprints by principal components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{Fingerprint, MetricsError};

pub const METHOD_ID: &str = "pca-v1";
pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 1000;
const START_SEED: u64 = 0x7063_612d_7631;
const BLOCK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub coords: Vec<[f64; 2]>,
    pub explained_variance: [f64; 2],
    pub method_id: String,
}

/// Mean-centered 0/1 data kept sparse: rows are set-bit lists.
struct Centered {
    rows: Vec<Vec<usize>>,
    mean: Vec<f64>,
}

impl Centered {
    /// Xc v
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let offset: f64 = self.mean.iter().zip(v).map(|(m, x)| m * x).sum();
        self.rows
            .iter()
            .map(|r| r.iter().map(|&j| v[j]).sum::<f64>() - offset)
            .collect()
    }

    /// Xcᵀ w
    fn apply_t(&self, w: &[f64]) -> Vec<f64> {
        let total: f64 = w.iter().sum();
        let mut out: Vec<f64> = self.mean.iter().map(|m| -m * total).collect();
        for (r, &wi) in self.rows.iter().zip(w) {
            for &j in r {
                out[j] += wi;
            }
        }
        out
    }

    /// Xcᵀ Xc v
    fn covariance(&self, v: &[f64]) -> Vec<f64> {
        self.apply_t(&self.apply(v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for u in against {
        let p = dot(v, u);
        for (x, y) in v.iter_mut().zip(u) {
            *x -= p * y;
        }
    }
}

/// Flips the vector so that its largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn random_vector(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Modified Gram-Schmidt. Columns that vanish are replaced by fresh
/// pseudo-random vectors.
fn orthonormalize(block: &mut [Vec<f64>], rng: &mut ChaCha8Rng, scale: f64) {
    for i in 0..block.len() {
        let (done, rest) = block.split_at_mut(i);
        let v = &mut rest[0];
        for _ in 0..8 {
            orthogonalize(v, done);
            orthogonalize(v, done);
            let nv = norm(v);
            if nv > 1e-12 * scale {
                v.iter_mut().for_each(|x| *x /= nv);
                break;
            }
            *v = random_vector(v.len(), rng);
        }
    }
}

/// Eigenpairs of a small symmetric matrix by cyclic Jacobi sweeps, sorted by
/// descending eigenvalue. `vectors[j][i]` is entry `j` of eigenvector `i`.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = a.len();
    let mut v: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..64 {
        let diag: f64 = (0..k).map(|i| a[i][i] * a[i][i]).sum();
        let off: f64 = (0..k).flat_map(|p| (p + 1..k).map(move |q| (p, q))).map(|(p, q)| a[p][q] * a[p][q]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                let (lo, hi) = a.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]).then(x.cmp(&y)));
    let values = idx.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..k).map(|j| idx.iter().map(|&i| v[j][i]).collect()).collect();
    (values, vectors)
}

fn combine(basis: &[Vec<f64>], coeffs: &[Vec<f64>], i: usize) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (j, b) in basis.iter().enumerate() {
        let c = coeffs[j][i];
        for (o, x) in out.iter_mut().zip(b) {
            *o += c * x;
        }
    }
    out
}

/// Top two eigenpairs of the covariance by block subspace iteration with
/// Rayleigh-Ritz extraction.
fn top_two(data: &Centered, scale: f64) -> ([f64; 2], [Vec<f64>; 2]) {
    let d = data.mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut block: Vec<Vec<f64>> = (0..BLOCK).map(|_| random_vector(d, &mut rng)).collect();
    orthonormalize(&mut block, &mut rng, 1.0);
    let mut best = ([0.0; 2], [vec![0.0; d], vec![0.0; d]]);
    for _ in 0..MAX_ITERATIONS {
        let images: Vec<Vec<f64>> = block.iter().map(|v| data.covariance(v)).collect();
        let h: Vec<Vec<f64>> = (0..BLOCK)
            .map(|i| {
                (0..BLOCK)
                    .map(|j| 0.5 * (dot(&block[i], &images[j]) + dot(&block[j], &images[i])))
                    .collect()
            })
            .collect();
        let (values, coeffs) = jacobi(h);
        let ritz: Vec<Vec<f64>> = (0..BLOCK).map(|i| combine(&block, &coeffs, i)).collect();
        let next: Vec<Vec<f64>> = (0..BLOCK).map(|i| combine(&images, &coeffs, i)).collect();
        let residual = (0..2)
            .map(|i| {
                let r: Vec<f64> = next[i].iter().zip(&ritz[i]).map(|(a, b)| a - values[i] * b).collect();
                norm(&r)
            })
            .fold(0.0, f64::max);
        best = ([values[0], values[1]], [ritz[0].clone(), ritz[1].clone()]);
        if residual <= TOLERANCE * scale {
            break;
        }
        block = next;
        orthonormalize(&mut block, &mut rng, scale);
    }
    for v in best.1.iter_mut() {
        fix_sign(v);
    }
    best
}

/// Projects fingerprints onto their top two principal components.
///
/// A single input and all-identical inputs map to the origin.
pub fn project(fingerprints: &[Fingerprint]) -> Result<ProjectionResult, MetricsError> {
    let n = fingerprints.len();
    let mut result = ProjectionResult {
        coords: vec![[0.0, 0.0]; n],
        explained_variance: [0.0, 0.0],
        method_id: METHOD_ID.to_string(),
    };
    let Some(first) = fingerprints.first() else {
        return Ok(result);
    };
    let d = first.n_bits();
    if let Some(bad) = fingerprints.iter().find(|f| f.n_bits() != d) {
        return Err(MetricsError::LengthMismatch(d, bad.n_bits()));
    }
    let rows: Vec<Vec<usize>> = fingerprints.iter().map(|f| f.ones().collect()).collect();
    let mut mean = vec![0.0; d];
    for r in &rows {
        for &j in r {
            mean[j] += 1.0;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let data = Centered { rows, mean };

    // total variance = trace of Xcᵀ Xc = Σ_j n·m_j·(1 − m_j)
    let trace: f64 = data.mean.iter().map(|m| n as f64 * m * (1.0 - m)).sum();
    if n < 2 || trace < 1e-12 {
        return Ok(result);
    }
    let ([l1, l2], [v1, v2]) = top_two(&data, trace);
    let x = data.apply(&v1);
    let y = data.apply(&v2);
    for (i, c) in result.coords.iter_mut().enumerate() {
        *c = [x[i], y[i]];
    }
    result.explained_variance = [(l1 / trace).clamp(0.0, 1.0), (l2 / trace).clamp(0.0, 1.0)];
    Ok(result)
}
