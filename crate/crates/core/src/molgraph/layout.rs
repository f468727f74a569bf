use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{rings, Molecule};

/// 2D depiction coordinates in bond-length units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub coords: Vec<[f64; 2]>,
    /// Set when the constructive layout could not satisfy the minimum atom
    /// spacing and atoms were placed on a circle instead.
    pub fallback: bool,
}

/// Minimum pairwise distance, in bond lengths.
pub const MIN_ATOM_DISTANCE: f64 = 0.5;

const COMPONENT_GAP: f64 = 1.5;

pub fn layout_2d(mol: &Molecule) -> Layout {
    let n = mol.atom_count();
    if n == 0 {
        return Layout {
            coords: Vec::new(),
            fallback: false,
        };
    }
    let all_rings = rings::smallest_rings(mol);
    let mut atom_rings = vec![Vec::new(); n];
    for (ri, ring) in all_rings.iter().enumerate() {
        for &a in ring {
            atom_rings[a].push(ri);
        }
    }
    let mut pos: Vec<Option<[f64; 2]>> = vec![None; n];
    let mut placer = Placer {
        mol,
        rings: &all_rings,
        atom_rings: &atom_rings,
        ring_done: vec![false; all_rings.len()],
        turn: vec![1.0; n],
        pos: &mut pos,
    };
    let mut offset_x = 0.0;
    for comp in mol.components() {
        placer.place_component(comp[0]);
        let (min_x, max_x, min_y, max_y) = bbox(comp.iter().map(|&i| placer.pos[i].expect("placed")));
        let dx = offset_x - min_x;
        let dy = -(min_y + max_y) / 2.0;
        for &i in &comp {
            let p = placer.pos[i].as_mut().expect("placed");
            p[0] += dx;
            p[1] += dy;
        }
        offset_x += max_x - min_x + COMPONENT_GAP;
    }
    let mut coords: Vec<[f64; 2]> = pos.into_iter().map(|p| p.expect("all atoms placed")).collect();

    if min_pairwise(&coords) < MIN_ATOM_DISTANCE {
        relax(mol, &mut coords);
    }
    if min_pairwise(&coords) < MIN_ATOM_DISTANCE || coords.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Layout {
            coords: circular(n),
            fallback: true,
        };
    }
    Layout {
        coords,
        fallback: false,
    }
}

fn bbox(points: impl Iterator<Item = [f64; 2]>) -> (f64, f64, f64, f64) {
    points.fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p[0]), b.max(p[0]), c.min(p[1]), d.max(p[1])),
    )
}

pub(crate) fn min_pairwise(coords: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            best = best.min(dist(coords[i], coords[j]));
        }
    }
    best
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn circular(n: usize) -> Vec<[f64; 2]> {
    if n == 1 {
        return vec![[0.0, 0.0]];
    }
    let radius = 1.0 / (2.0 * (PI / n as f64).sin());
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

/// Pushes apart atoms that sit too close while pulling bonds back towards
/// unit length.
fn relax(mol: &Molecule, coords: &mut [[f64; 2]]) {
    const TARGET: f64 = 0.8;
    let n = coords.len();
    for _ in 0..400 {
        if min_pairwise(coords) >= MIN_ATOM_DISTANCE + 0.05 {
            return;
        }
        for i in 0..n {
            for j in i + 1..n {
                let d = dist(coords[i], coords[j]);
                if d >= TARGET {
                    continue;
                }
                let (ux, uy) = if d < 1e-9 {
                    let t = (i * 7 + j * 13) as f64;
                    (t.cos(), t.sin())
                } else {
                    ((coords[j][0] - coords[i][0]) / d, (coords[j][1] - coords[i][1]) / d)
                };
                let push = (TARGET - d) / 2.0;
                coords[i][0] -= ux * push;
                coords[i][1] -= uy * push;
                coords[j][0] += ux * push;
                coords[j][1] += uy * push;
            }
        }
        for bd in mol.bonds() {
            let d = dist(coords[bd.a], coords[bd.b]);
            if d < 1e-9 {
                continue;
            }
            let ux = (coords[bd.b][0] - coords[bd.a][0]) / d;
            let uy = (coords[bd.b][1] - coords[bd.a][1]) / d;
            let pull = (d - 1.0) * 0.25;
            coords[bd.a][0] += ux * pull;
            coords[bd.a][1] += uy * pull;
            coords[bd.b][0] -= ux * pull;
            coords[bd.b][1] -= uy * pull;
        }
    }
}

struct Placer<'a> {
    mol: &'a Molecule,
    rings: &'a [Vec<usize>],
    atom_rings: &'a [Vec<usize>],
    ring_done: Vec<bool>,
    turn: Vec<f64>,
    pos: &'a mut Vec<Option<[f64; 2]>>,
}

impl Placer<'_> {
    fn place_component(&mut self, start: usize) {
        self.pos[start] = Some([0.0, 0.0]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &ri in &self.atom_rings[u] {
                if !self.ring_done[ri] {
                    self.ring_done[ri] = true;
                    for a in self.place_ring(ri) {
                        queue.push_back(a);
                    }
                }
            }
            for a in self.place_substituents(u) {
                queue.push_back(a);
            }
        }
    }

    fn placed_neighbors(&self, u: usize) -> Vec<[f64; 2]> {
        self.mol
            .neighbors(u)
            .iter()
            .filter_map(|nb| self.pos[nb.atom])
            .collect()
    }

    /// Places the unplaced atoms of a ring as a regular polygon; returns them.
    fn place_ring(&mut self, ri: usize) -> Vec<usize> {
        let ring = &self.rings[ri];
        let n = ring.len();
        let placed: Vec<usize> = (0..n).filter(|&k| self.pos[ring[k]].is_some()).collect();
        let circum = 1.0 / (2.0 * (PI / n as f64).sin());
        let step_ccw = 2.0 * PI / n as f64;

        let (center, anchor, step) = if placed.len() == 1 {
            let k = placed[0];
            let p = self.pos[ring[k]].expect("placed");
            let nbs = self.placed_neighbors(ring[k]);
            let mut away = [1.0, 0.0];
            if !nbs.is_empty() {
                let mx = nbs.iter().map(|q| q[0]).sum::<f64>() / nbs.len() as f64;
                let my = nbs.iter().map(|q| q[1]).sum::<f64>() / nbs.len() as f64;
                let (vx, vy) = (p[0] - mx, p[1] - my);
                let len = (vx * vx + vy * vy).sqrt();
                if len > 1e-9 {
                    away = [vx / len, vy / len];
                }
            }
            let c = [p[0] + away[0] * circum, p[1] + away[1] * circum];
            (c, k, step_ccw)
        } else {
            let Some(k) = (0..n).find(|&k| {
                self.pos[ring[k]].is_some() && self.pos[ring[(k + 1) % n]].is_some()
            }) else {
                return Vec::new();
            };
            let a = self.pos[ring[k]].expect("placed");
            let b = self.pos[ring[(k + 1) % n]].expect("placed");
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = (ex * ex + ey * ey).sqrt().max(1e-9);
            let normal = [-ey / len, ex / len];
            let apothem = circum * (PI / n as f64).cos() * len;
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let c1 = [mid[0] + normal[0] * apothem, mid[1] + normal[1] * apothem];
            let c2 = [mid[0] - normal[0] * apothem, mid[1] - normal[1] * apothem];
            // Pick the side away from what is already drawn around the edge.
            let mut others: Vec<[f64; 2]> = Vec::new();
            for &end in &[ring[k], ring[(k + 1) % n]] {
                for nb in self.mol.neighbors(end) {
                    if nb.atom != ring[k] && nb.atom != ring[(k + 1) % n] {
                        if let Some(p) = self.pos[nb.atom] {
                            others.push(p);
                        }
                    }
                }
            }
            if others.is_empty() {
                others = self.pos.iter().flatten().copied().collect();
            }
            let score = |c: [f64; 2]| others.iter().map(|&o| dist(c, o)).sum::<f64>();
            let center = if score(c1) >= score(c2) { c1 } else { c2 };
            let ta = (a[1] - center[1]).atan2(a[0] - center[0]);
            let tb = (b[1] - center[1]).atan2(b[0] - center[0]);
            let mut step = tb - ta;
            while step > PI {
                step -= 2.0 * PI;
            }
            while step <= -PI {
                step += 2.0 * PI;
            }
            let step = if step >= 0.0 { step_ccw } else { -step_ccw };
            (center, k, step)
        };

        let anchor_pos = self.pos[ring[anchor]].expect("placed");
        let radius = dist(center, anchor_pos);
        let theta0 = (anchor_pos[1] - center[1]).atan2(anchor_pos[0] - center[0]);
        let mut new = Vec::new();
        for t in 1..n {
            let atom = ring[(anchor + t) % n];
            if self.pos[atom].is_none() {
                let th = theta0 + step * t as f64;
                self.pos[atom] = Some([center[0] + radius * th.cos(), center[1] + radius * th.sin()]);
                new.push(atom);
            }
        }
        new
    }

    fn place_substituents(&mut self, u: usize) -> Vec<usize> {
        let children: Vec<usize> = self
            .mol
            .neighbors(u)
            .iter()
            .filter(|nb| self.pos[nb.atom].is_none())
            .map(|nb| nb.atom)
            .collect();
        if children.is_empty() {
            return children;
        }
        let p = self.pos[u].expect("placed");
        let mut angles: Vec<f64> = self
            .placed_neighbors(u)
            .iter()
            .map(|q| (q[1] - p[1]).atan2(q[0] - p[0]))
            .collect();
        let k = children.len();
        let mut out_angles: Vec<(f64, f64)> = Vec::with_capacity(k);
        match angles.len() {
            0 => {
                if k == 1 {
                    out_angles.push((PI / 6.0, -1.0));
                } else {
                    for i in 0..k {
                        out_angles.push((2.0 * PI * i as f64 / k as f64, 1.0));
                    }
                }
            }
            1 => {
                let incoming = angles[0] + PI;
                if k == 1 {
                    let s = self.turn[u];
                    out_angles.push((incoming + s * PI / 3.0, -s));
                } else {
                    for i in 0..k {
                        let off = -PI + 2.0 * PI * (i + 1) as f64 / (k + 1) as f64;
                        out_angles.push((incoming + off, if off > 0.0 { -1.0 } else { 1.0 }));
                    }
                }
            }
            _ => {
                angles.sort_by(|a, b| a.total_cmp(b));
                let mut best_start = angles[angles.len() - 1];
                let mut best_gap = angles[0] + 2.0 * PI - best_start;
                for w in angles.windows(2) {
                    if w[1] - w[0] > best_gap {
                        best_gap = w[1] - w[0];
                        best_start = w[0];
                    }
                }
                for i in 0..k {
                    out_angles.push((best_start + best_gap * (i + 1) as f64 / (k + 1) as f64, 1.0));
                }
            }
        }
        for (&c, &(th, turn)) in children.iter().zip(&out_angles) {
            self.pos[c] = Some([p[0] + th.cos(), p[1] + th.sin()]);
            self.turn[c] = turn;
        }
        children
    }
}
