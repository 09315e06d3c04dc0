//! Integral affine charts on the closed stars of vertices.
//!
//! For `i ≠ j` the chart `p_{i,j}` identifies `Star(m_i) = ⋃_{k≠i} σ_k` with
//! the simplex `S̃ ⊂ ℝ^d` through `p_{i,j}^{-1}(m) = (⟨m, n_j − n_k⟩)_{k≠i,j}`,
//! and `q_{i,j}` identifies `Star(n_i) = ⋃_{k≠i} τ_k` with `T̃` through
//! `q_{i,j}^{-1}(n) = (⟨e_k − e_j, n⟩)_{k≠i,j}`. Chart coordinates are indexed
//! by the slots `k ∉ {i, j}` in increasing order.
//!
//! In barycentric weights the inverse maps read `s_k = (d+2)(α_k − α_j)` and
//! `t_k = β_j − β_k`. Both maps are affine on each facet of the star, and the
//! facet `k` is sent onto the sub-simplex spanned by the images of the
//! vertices `l ≠ k`. Chart Lebesgue measure equals the normalized facet mass.

use crate::error::{Error, Result};
use crate::geometry::{BaryPoint, Dim, MVector, NVector, Side, CLASSIFY_TOL};

/// Tolerance for chart-domain membership.
pub const CHART_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    dim: Dim,
    side: Side,
    i: usize,
    j: usize,
    slots: Vec<usize>,
}

impl Chart {
    pub fn new(dim: Dim, side: Side, i: usize, j: usize) -> Result<Self> {
        let n = dim.n();
        if i >= n || j >= n {
            return Err(Error::InvalidFace(format!("chart indices ({i}, {j}) out of range for d = {dim}")));
        }
        if i == j {
            return Err(Error::InvalidFace(format!("chart indices must differ, got ({i}, {j})")));
        }
        let slots = (0..n).filter(|&k| k != i && k != j).collect();
        Ok(Chart { dim, side, i, j, slots })
    }

    /// The chart `p_{i,j}` on `Star(m_i)`.
    pub fn p(dim: Dim, i: usize, j: usize) -> Result<Self> {
        Chart::new(dim, Side::A, i, j)
    }

    /// The chart `q_{i,j}` on `Star(n_i)`.
    pub fn q(dim: Dim, i: usize, j: usize) -> Result<Self> {
        Chart::new(dim, Side::B, i, j)
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Index of the vertex whose star the chart covers.
    pub fn center(&self) -> usize {
        self.i
    }

    /// The auxiliary index `j`.
    pub fn other(&self) -> usize {
        self.j
    }

    /// Original coordinate index of each chart coordinate.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    fn scale(&self) -> f64 {
        match self.side {
            Side::A => self.dim.n() as f64,
            Side::B => 1.0,
        }
    }

    /// Vertices of the chart domain: one per slot, then the distinguished vertex.
    pub fn domain_vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim.d();
        let mut out = Vec::with_capacity(d + 1);
        for r in 0..d {
            let mut v = vec![0.0; d];
            v[r] = match self.side {
                Side::A => self.scale(),
                Side::B => -1.0,
            };
            out.push(v);
        }
        out.push(match self.side {
            Side::A => vec![-self.scale(); d],
            Side::B => vec![1.0; d],
        });
        out
    }

    /// Whether a point of the matching side lies in the closed star of vertex `i`.
    pub fn in_star(&self, p: &BaryPoint) -> bool {
        p.side() == self.side
            && p.weights().iter().enumerate().any(|(k, &w)| k != self.i && w.abs() <= CLASSIFY_TOL)
    }

    /// Chart coordinates of a point of the star.
    pub fn to_chart(&self, p: &BaryPoint) -> Result<Vec<f64>> {
        if p.side() != self.side {
            return Err(Error::SideMismatch(format!("chart lives on side {}", self.side)));
        }
        if p.weights().len() != self.dim.n() {
            return Err(Error::DimensionMismatch { expected: self.dim.n(), found: p.weights().len() });
        }
        if !self.in_star(p) {
            return Err(Error::OutsideDomain(format!(
                "point {:?} is not in the star of vertex {}",
                p.weights(),
                self.i
            )));
        }
        let w = p.weights();
        Ok(match self.side {
            Side::A => self.slots.iter().map(|&k| self.scale() * (w[k] - w[self.j])).collect(),
            Side::B => self.slots.iter().map(|&k| w[self.j] - w[k]).collect(),
        })
    }

    /// Barycentric weights from chart coordinates, without domain checks.
    fn raw_weights(&self, s: &[f64]) -> Vec<f64> {
        let n = self.dim.n();
        // u_l for l ≠ i with u_j = 0, scaled so that the weight gap equals u_l − u_j
        let mut u = vec![0.0; n];
        for (r, &k) in self.slots.iter().enumerate() {
            u[k] = match self.side {
                Side::A => s[r] / self.scale(),
                Side::B => -s[r],
            };
        }
        let lo = (0..n).filter(|&l| l != self.i).map(|l| u[l]).fold(f64::INFINITY, f64::min);
        let mut w = vec![0.0; n];
        let mut rest = 0.0;
        for l in 0..n {
            if l != self.i {
                w[l] = u[l] - lo;
                rest += w[l];
            }
        }
        w[self.i] = 1.0 - rest;
        w
    }

    /// Whether chart coordinates lie in the chart domain.
    pub fn in_domain(&self, s: &[f64]) -> bool {
        s.len() == self.dim.d() && self.raw_weights(s)[self.i] >= -CHART_TOL
    }

    /// Inverse chart: the point of the star with the given coordinates.
    pub fn from_chart(&self, s: &[f64]) -> Result<BaryPoint> {
        if s.len() != self.dim.d() {
            return Err(Error::DimensionMismatch { expected: self.dim.d(), found: s.len() });
        }
        let w = self.raw_weights(s);
        if w[self.i] < -CHART_TOL {
            return Err(Error::OutsideDomain(format!("chart coordinates {s:?} lie outside the chart simplex")));
        }
        Ok(BaryPoint::normalized(self.side, w))
    }

    /// The facet index `k ≠ i` whose image contains `s` (lowest index on overlaps).
    pub fn piece_containing(&self, s: &[f64]) -> Result<usize> {
        let p = self.from_chart(s)?;
        let w = p.weights();
        (0..self.dim.n())
            .filter(|&k| k != self.i)
            .find(|&k| w[k] <= CHART_TOL)
            .ok_or_else(|| Error::OutsideDomain(format!("no facet contains chart point {s:?}")))
    }

    /// The affine map `s ↦ weights` valid on the image of facet `k`,
    /// as a matrix `(d+2) × d` and an offset.
    pub fn affine_piece(&self, k: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if k == self.i || k >= self.dim.n() {
            return Err(Error::InvalidFace(format!("facet {k} is not in the star of vertex {}", self.i)));
        }
        let n = self.dim.n();
        let d = self.dim.d();
        // u_l as a linear function of s: u = U s, with u_j = 0
        let mut u = vec![vec![0.0; d]; n];
        for (r, &l) in self.slots.iter().enumerate() {
            u[l][r] = match self.side {
                Side::A => 1.0 / self.scale(),
                Side::B => -1.0,
            };
        }
        // on facet k: w_l = u_l − u_k for l ≠ i, w_i = 1 − Σ_{l≠i} w_l
        let mut mat = vec![vec![0.0; d]; n];
        let mut off = vec![0.0; n];
        for l in 0..n {
            if l == self.i {
                continue;
            }
            for r in 0..d {
                mat[l][r] = u[l][r] - u[k][r];
            }
        }
        for r in 0..d {
            mat[self.i][r] = -(0..n).filter(|&l| l != self.i).map(|l| mat[l][r]).sum::<f64>();
        }
        off[self.i] = 1.0;
        Ok((mat, off))
    }

    /// Chart images of the vertices of facet `k`, ordered by vertex index.
    pub fn piece_vertices(&self, k: usize) -> Result<Vec<Vec<f64>>> {
        if k == self.i || k >= self.dim.n() {
            return Err(Error::InvalidFace(format!("facet {k} is not in the star of vertex {}", self.i)));
        }
        (0..self.dim.n())
            .filter(|&l| l != k)
            .map(|l| self.to_chart(&BaryPoint::vertex(self.side, self.dim, l)))
            .collect()
    }
}

/// `p_{i,j}^{-1}(m) = (⟨m, n_j − n_k⟩)_{k≠i,j}` for `m ∈ Star(m_i)`.
pub fn p_inv(i: usize, j: usize, m: &MVector) -> Result<Vec<f64>> {
    let chart = Chart::p(m.dim(), i, j)?;
    let p = BaryPoint::from_m_vector(m)
        .map_err(|_| Error::OutsideDomain(format!("{:?} is not a point of A", m.coords())))?;
    chart.to_chart(&p)
}

/// `p_{i,j}(s)`, the point of `Star(m_i)` with chart coordinates `s ∈ S̃`.
pub fn p(dim: Dim, i: usize, j: usize, s: &[f64]) -> Result<MVector> {
    Chart::p(dim, i, j)?.from_chart(s)?.to_m_vector()
}

/// `q_{i,j}^{-1}(n) = (⟨e_k − e_j, n⟩)_{k≠i,j}` for `n ∈ Star(n_i)`.
pub fn q_inv(i: usize, j: usize, n: &NVector) -> Result<Vec<f64>> {
    let chart = Chart::q(n.dim(), i, j)?;
    let p = BaryPoint::from_n_vector(n)
        .map_err(|_| Error::OutsideDomain(format!("{:?} is not a point of B", n.coords())))?;
    chart.to_chart(&p)
}

/// `q_{i,j}(t)`, the point of `Star(n_i)` with chart coordinates `t ∈ T̃`.
pub fn q(dim: Dim, i: usize, j: usize, t: &[f64]) -> Result<NVector> {
    Chart::q(dim, i, j)?.from_chart(t)?.to_n_vector()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|⟨s,t⟩ − ⟨p_{j,i}(s) − m_j, q_{i,j}(t)⟩|` for `s ∈ p_{j,i}^{-1}(σ_i)` and `t ∈ T̃`.
pub fn chart_pair_residual(dim: Dim, i: usize, j: usize, s: &[f64], t: &[f64]) -> Result<f64> {
    let pc = Chart::p(dim, j, i)?;
    let m = pc.from_chart(s)?;
    if m.weights()[i].abs() > CHART_TOL {
        return Err(Error::OutsideDomain(format!("chart point {s:?} does not map into the facet {i}")));
    }
    let n = Chart::q(dim, i, j)?.from_chart(t)?;
    let mv = m.to_m_vector()?;
    let mj = MVector::vertex(dim, j);
    let diff = MVector::new(mv.coords().iter().zip(mj.coords()).map(|(a, b)| a - b).collect())?;
    let rhs = crate::geometry::pairing(&diff, &n.to_n_vector()?)?;
    Ok((dot(s, t) - rhs).abs())
}

/// `|⟨s,t⟩ − ⟨p_{i,j}(s), q_{j,i}(t) − n_j⟩|` for `s ∈ S̃` and `t ∈ q_{j,i}^{-1}(τ_i)`.
pub fn chart_pair_residual_dual(dim: Dim, i: usize, j: usize, s: &[f64], t: &[f64]) -> Result<f64> {
    let m = Chart::p(dim, i, j)?.from_chart(s)?;
    let nc = Chart::q(dim, j, i)?;
    let n = nc.from_chart(t)?;
    if n.weights()[i].abs() > CHART_TOL {
        return Err(Error::OutsideDomain(format!("chart point {t:?} does not map into the facet {i}")));
    }
    let nv = n.to_n_vector()?;
    let nj = NVector::vertex(dim, j);
    let diff = NVector::new(nv.coords().iter().zip(nj.coords()).map(|(a, b)| a - b).collect())?;
    let rhs = crate::geometry::pairing(&m.to_m_vector()?, &diff)?;
    Ok((dot(s, t) - rhs).abs())
}
