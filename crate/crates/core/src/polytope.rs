//! Convex polytopes given by half-space clipping of a simplex, with vertex
//! enumeration, volume and centroid.
//!
//! Every vertex remembers which constraints are tight at it. A new vertex is
//! created on the segment between a kept and a cut vertex when the two share
//! at least `k − 1` tight constraints. Volumes come from the pyramid formula
//! over facets, applied recursively in orthonormal facet coordinates.

use std::collections::HashSet;

use itertools::Itertools;

/// Default tolerance for half-space membership (after normalizing the normal).
pub const CLIP_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-11;

/// The half-space `a·x ≤ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl HalfSpace {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        HalfSpace { a, b }
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Clone, Debug)]
pub struct Polytope {
    k: usize,
    verts: Vec<Vec<f64>>,
    tight: Vec<Vec<usize>>,
    next_id: usize,
}

impl Polytope {
    /// `{x ∈ ℝ^k : x ≥ 0, Σ x ≤ 1}`. Constraint `r < k` is `x_r ≥ 0`, constraint `k` is the sum.
    pub fn standard_simplex(k: usize) -> Self {
        let mut verts = vec![vec![0.0; k]];
        let mut tight = vec![(0..k).collect::<Vec<_>>()];
        for r in 0..k {
            let mut v = vec![0.0; k];
            v[r] = 1.0;
            verts.push(v);
            let mut t: Vec<usize> = (0..k).filter(|&s| s != r).collect();
            t.push(k);
            tight.push(t);
        }
        Polytope { k, verts, tight, next_id: k + 1 }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.verts
    }

    /// Intersect with `h`. Returns `false` once the polytope is empty.
    pub fn clip(&mut self, h: &HalfSpace) -> bool {
        if self.verts.is_empty() {
            return false;
        }
        let id = self.next_id;
        self.next_id += 1;
        let norm = dot(&h.a, &h.a).sqrt();
        if norm < 1e-14 {
            if h.b < -CLIP_TOL {
                self.verts.clear();
                self.tight.clear();
            }
            return !self.verts.is_empty();
        }
        let s: Vec<f64> = self.verts.iter().map(|v| h.slack(v) / norm).collect();
        if s.iter().all(|&x| x <= CLIP_TOL) {
            for (t, &x) in self.tight.iter_mut().zip(&s) {
                if x >= -CLIP_TOL {
                    t.push(id);
                }
            }
            return true;
        }
        let mut verts = Vec::new();
        let mut tight: Vec<Vec<usize>> = Vec::new();
        for (i, v) in self.verts.iter().enumerate() {
            if s[i] <= CLIP_TOL {
                let mut t = self.tight[i].clone();
                if s[i] >= -CLIP_TOL {
                    t.push(id);
                }
                verts.push(v.clone());
                tight.push(t);
            }
        }
        if verts.is_empty() {
            self.verts.clear();
            self.tight.clear();
            return false;
        }
        let need = self.k.saturating_sub(1);
        for (i, u) in self.verts.iter().enumerate() {
            let su = s[i];
            if su >= -CLIP_TOL {
                continue;
            }
            let tu = &self.tight[i];
            for (j, w) in self.verts.iter().enumerate() {
                let sw = s[j];
                if sw <= CLIP_TOL {
                    continue;
                }
                let common: Vec<usize> = tu.iter().filter(|c| self.tight[j].contains(c)).cloned().collect();
                if common.len() < need {
                    continue;
                }
                // u and w span an edge iff no third vertex lies on every constraint they share
                let shared_elsewhere = self
                    .tight
                    .iter()
                    .enumerate()
                    .any(|(z, tz)| z != i && z != j && common.iter().all(|c| tz.contains(c)));
                if shared_elsewhere {
                    continue;
                }
                let lam = su / (su - sw);
                let p: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + lam * (b - a)).collect();
                let mut t = common;
                t.push(id);
                match verts.iter().position(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= DEDUP_TOL)) {
                    Some(pos) => {
                        for c in t {
                            if !tight[pos].contains(&c) {
                                tight[pos].push(c);
                            }
                        }
                    }
                    None => {
                        verts.push(p);
                        tight.push(t);
                    }
                }
            }
        }
        self.verts = verts;
        self.tight = tight;
        true
    }

    /// Lebesgue volume and centroid in the ambient `ℝ^k`.
    pub fn volume_centroid(&self) -> (f64, Vec<f64>) {
        if self.verts.is_empty() {
            return (0.0, vec![0.0; self.k]);
        }
        vol_centroid(&self.verts, &self.tight)
    }

    pub fn volume(&self) -> f64 {
        self.volume_centroid().0
    }
}

fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points[0].len();
    let mut c = vec![0.0; k];
    for p in points {
        c.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    c.iter_mut().for_each(|a| *a /= points.len() as f64);
    c
}

/// Orthonormal basis of the affine hull of `points` (relative to `points[0]`).
fn affine_basis(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p0 = &points[0];
    let scale = points.iter().flat_map(|p| p.iter().map(|x| x.abs())).fold(1.0_f64, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in &points[1..] {
        let mut v = sub(p, p0);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-9 * scale {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Dimension of the affine hull of a point set.
pub fn affine_rank(points: &[Vec<f64>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    affine_basis(points).len()
}

fn vol_centroid(points: &[Vec<f64>], tight: &[Vec<usize>]) -> (f64, Vec<f64>) {
    let k = points[0].len();
    let c = mean(points);
    if k == 0 {
        return (1.0, c);
    }
    if points.len() < k + 1 {
        return (0.0, c);
    }
    if k == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return (hi - lo, vec![0.5 * (lo + hi)]);
    }
    let ids: Vec<usize> = tight.iter().flatten().cloned().sorted().dedup().collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut vol = 0.0;
    let mut acc = vec![0.0; k];
    for id in ids {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| tight[i].contains(&id)).collect();
        if idx.len() < k || !seen.insert(idx.clone()) {
            continue;
        }
        let fpts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        let basis = affine_basis(&fpts);
        if basis.len() != k - 1 {
            continue;
        }
        let p0 = &fpts[0];
        let local: Vec<Vec<f64>> =
            fpts.iter().map(|p| basis.iter().map(|b| dot(&sub(p, p0), b)).collect()).collect();
        let ftight: Vec<Vec<usize>> =
            idx.iter().map(|&i| tight[i].iter().filter(|&&t| t != id).cloned().collect()).collect();
        let (fv, fc) = vol_centroid(&local, &ftight);
        if fv <= 0.0 {
            continue;
        }
        let mut centroid = p0.clone();
        for (b, &x) in basis.iter().zip(&fc) {
            centroid.iter_mut().zip(b).for_each(|(a, y)| *a += x * y);
        }
        let mut normal = sub(&c, p0);
        for b in &basis {
            let t = dot(&normal, b);
            normal.iter_mut().zip(b).for_each(|(x, y)| *x -= t * y);
        }
        let h = dot(&normal, &normal).sqrt();
        let pv = h * fv / k as f64;
        let frac = k as f64 / (k + 1) as f64;
        vol += pv;
        for r in 0..k {
            acc[r] += pv * (c[r] + frac * (centroid[r] - c[r]));
        }
    }
    if vol <= 0.0 {
        return (0.0, c);
    }
    acc.iter_mut().for_each(|a| *a /= vol);
    (vol, acc)
}

/// Volume of the convex hull of a point cloud in `ℝ^k`.
///
/// Facets are found by brute force over `k`-subsets, which is fine for the
/// few dozen points that arise from subgradient polytopes.
pub fn hull_volume(points: &[Vec<f64>]) -> f64 {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !pts.iter().any(|q| q.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            pts.push(p.clone());
        }
    }
    if pts.is_empty() {
        return 0.0;
    }
    let k = pts[0].len();
    if affine_rank(&pts) < k {
        return 0.0;
    }
    if k == 1 {
        return vol_centroid(&pts, &vec![Vec::new(); pts.len()]).0;
    }
    let scale = pts.iter().flat_map(|p| p.iter().map(|x| x.abs())).fold(1.0_f64, f64::max);
    let tol = 1e-9 * scale;
    let mut tight: Vec<Vec<usize>> = vec![Vec::new(); pts.len()];
    let mut facets: HashSet<Vec<usize>> = HashSet::new();
    let mut next_id = 0;
    for subset in (0..pts.len()).combinations(k) {
        let sp: Vec<Vec<f64>> = subset.iter().map(|&i| pts[i].clone()).collect();
        let basis = affine_basis(&sp);
        if basis.len() != k - 1 {
            continue;
        }
        // normal: a direction orthogonal to the basis, from Gram–Schmidt on unit vectors
        let mut normal = None;
        for e in 0..k {
            let mut v = vec![0.0; k];
            v[e] = 1.0;
            for b in &basis {
                let t = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= t * y);
            }
            let n = dot(&v, &v).sqrt();
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                normal = Some(v);
                break;
            }
        }
        let Some(normal) = normal else { continue };
        let off = dot(&normal, &sp[0]);
        let side: Vec<f64> = pts.iter().map(|p| dot(&normal, p) - off).collect();
        let pos = side.iter().any(|&s| s > tol);
        let neg = side.iter().any(|&s| s < -tol);
        if pos && neg {
            continue;
        }
        let on: Vec<usize> = (0..pts.len()).filter(|&i| side[i].abs() <= tol).collect();
        if facets.insert(on.clone()) {
            for &i in &on {
                tight[i].push(next_id);
            }
            next_id += 1;
        }
    }
    vol_centroid(&pts, &tight).0
}
