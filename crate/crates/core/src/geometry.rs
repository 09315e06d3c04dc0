//! Numerical model of the simplex pair `Δ ⊂ M_ℝ`, `Δ∨ ⊂ N_ℝ`, their
//! boundaries `A = ∂Δ` and `B = ∂Δ∨`, and the coordinate permutation action.
//!
//! Coordinates live in `ℝ^{d+2}`. `M_ℝ` is the hyperplane of zero-sum vectors
//! and `N_ℝ` is `ℝ^{d+2}` modulo the all-ones vector. The vertices are
//! `m_i = (d+2) e_i − 𝟙` and `n_i = −e_i`, and a boundary point is written in
//! barycentric weights with `min_j w_j = 0` and `Σ_j w_j = 1`. In those
//! weights the pairing of `m = Σ α_j m_j` with `n = Σ β_j n_j` is
//! `1 − (d+2) Σ_j α_j β_j`, symmetric in the two sides.

use std::fmt;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tolerance on the `min = 0` / `sum = 1` constraints of a [`BaryPoint`].
pub const BARY_TOL: f64 = 1e-12;
/// Largest deviation that [`BaryPoint::repair`] will silently fix.
pub const REPAIR_TOL: f64 = 1e-6;
/// Tolerance used by [`classify`] for the (in)equalities defining faces and stars.
pub const CLASSIFY_TOL: f64 = 1e-10;
/// Tolerance for equality in `N_ℝ` after canonicalization.
pub const NVECTOR_TOL: f64 = 1e-9;
/// Tolerance used when deduplicating orbit points (barycentric ℓ∞).
pub const ORBIT_TOL: f64 = 1e-9;
/// Largest `d` for which the full group `S_{d+2}` is enumerated.
pub const MAX_ENUM_DIM: usize = 5;

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// The dimension `d ≥ 1` of the boundary spheres `A` and `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dim(usize);

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.0
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Dim {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDim(d));
        }
        Ok(Dim(d))
    }

    pub fn d(self) -> usize {
        self.0
    }

    /// Number of ambient coordinates, `d + 2`. Also the number of vertices
    /// and of facets of each simplex.
    pub fn n(self) -> usize {
        self.0 + 2
    }

    /// Recover the dimension from a coordinate count `d + 2`.
    pub fn from_coords(len: usize) -> Result<Self> {
        if len < 3 {
            return Err(Error::InvalidDim(len.saturating_sub(2)));
        }
        Dim::new(len - 2)
    }

    /// Lebesgue mass of one facet `σ_i` or `τ_i`.
    pub fn face_mass(self, side: Side) -> f64 {
        let d = self.0;
        match side {
            Side::A => ((d + 2) as f64).powi(d as i32) / factorial(d),
            Side::B => 1.0 / factorial(d),
        }
    }

    /// Total Lebesgue mass of `A` or `B`.
    pub fn total_mass(self, side: Side) -> f64 {
        self.n() as f64 * self.face_mass(side)
    }

    /// `|A| = (d+2)^{d+1}/d!`, the mass every tropical Monge–Ampère measure carries.
    pub fn mass_a(self) -> f64 {
        self.total_mass(Side::A)
    }

    pub fn order_of_group(self) -> f64 {
        factorial(self.n())
    }

    fn check(self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: len });
        }
        Ok(())
    }
}

/// Which boundary a point lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => f.write_str("A"),
            Side::B => f.write_str("B"),
        }
    }
}

/// An element of `M_ℝ`: a vector of `d+2` reals summing to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MVector {
    coords: Vec<f64>,
}

impl MVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Dim::from_coords(coords.len())?;
        let sum: f64 = coords.iter().sum();
        let scale = coords.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        if sum.abs() > 1e-9 * scale {
            return Err(Error::InvalidVector(format!("M-vector coordinates sum to {sum}, not 0")));
        }
        Ok(MVector { coords })
    }

    /// The vertex `m_i = (d+1) e_i − Σ_{j≠i} e_j` of `Δ`.
    pub fn vertex(dim: Dim, i: usize) -> Self {
        let mut coords = vec![-1.0; dim.n()];
        coords[i] = dim.d() as f64 + 1.0;
        MVector { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> Dim {
        Dim(self.coords.len() - 2)
    }
}

/// An element of `N_ℝ = ℝ^{d+2}/ℝ𝟙`.
///
/// Stored in canonical form: the representative whose coordinates sum to
/// `−1`, which is the raw form of every point of `B` (`n_i = −e_i`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NVector {
    coords: Vec<f64>,
}

impl NVector {
    /// Builds an element from any representative.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Dim::from_coords(coords.len())?;
        Ok(Self::canonical(coords))
    }

    fn canonical(mut coords: Vec<f64>) -> Self {
        let n = coords.len() as f64;
        let shift = (-1.0 - coords.iter().sum::<f64>()) / n;
        coords.iter_mut().for_each(|c| *c += shift);
        NVector { coords }
    }

    /// The vertex `n_i = −e_i` of `Δ∨`.
    pub fn vertex(dim: Dim, i: usize) -> Self {
        let mut coords = vec![0.0; dim.n()];
        coords[i] = -1.0;
        NVector { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> Dim {
        Dim(self.coords.len() - 2)
    }
}

impl PartialEq for NVector {
    fn eq(&self, other: &Self) -> bool {
        self.coords.len() == other.coords.len()
            && self.coords.iter().zip(&other.coords).all(|(a, b)| (a - b).abs() <= NVECTOR_TOL)
    }
}

/// `⟨m, n⟩ = Σ_k m_k n_k`, independent of the representative of `n`.
pub fn pairing(m: &MVector, n: &NVector) -> Result<f64> {
    if m.coords.len() != n.coords.len() {
        return Err(Error::DimensionMismatch { expected: m.coords.len(), found: n.coords.len() });
    }
    Ok(m.coords.iter().zip(&n.coords).map(|(a, b)| a * b).sum())
}

/// The pairing in barycentric weights: `1 − (d+2) Σ_j α_j β_j`.
///
/// Only `Σ α = Σ β = 1` is used, so `alpha` may be any point of the
/// affine hull (for instance an interior point of `Δ`).
pub fn bary_pairing(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len() as f64;
    1.0 - n * alpha.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

#[derive(Deserialize)]
struct RawBaryPoint {
    side: Side,
    weights: Vec<f64>,
}

/// A point of `A` or `B` in barycentric weights (`min = 0`, `sum = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBaryPoint")]
pub struct BaryPoint {
    side: Side,
    weights: Vec<f64>,
}

impl TryFrom<RawBaryPoint> for BaryPoint {
    type Error = Error;
    fn try_from(raw: RawBaryPoint) -> Result<Self> {
        BaryPoint::repair(raw.side, raw.weights)
    }
}

impl BaryPoint {
    /// Strict constructor: rejects weights violating `min = 0`, `sum = 1`
    /// beyond [`BARY_TOL`].
    pub fn new(side: Side, weights: Vec<f64>) -> Result<Self> {
        Dim::from_coords(weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidPoint("non-finite weight".into()));
        }
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum: f64 = weights.iter().sum();
        if min.abs() > BARY_TOL || (sum - 1.0).abs() > BARY_TOL {
            return Err(Error::InvalidPoint(format!(
                "weights need min 0 and sum 1, got min {min:e} and sum {sum}"
            )));
        }
        Ok(BaryPoint { side, weights })
    }

    /// Clamp-and-renormalize constructor for data crossing an I/O boundary.
    /// Deviations larger than [`REPAIR_TOL`] are still rejected.
    pub fn repair(side: Side, weights: Vec<f64>) -> Result<Self> {
        Dim::from_coords(weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidPoint("non-finite weight".into()));
        }
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum: f64 = weights.iter().sum();
        if min.abs() > REPAIR_TOL || (sum - 1.0).abs() > REPAIR_TOL {
            return Err(Error::InvalidPoint(format!(
                "weights need min 0 and sum 1, got min {min:e} and sum {sum}"
            )));
        }
        Ok(Self::normalized(side, weights))
    }

    /// Shift so that the minimum is exactly zero, then rescale to sum one.
    /// Internal helper for weights known to be (nearly) valid.
    pub(crate) fn normalized(side: Side, mut weights: Vec<f64>) -> Self {
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        weights.iter_mut().for_each(|w| *w = (*w - min).max(0.0));
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        BaryPoint { side, weights }
    }

    /// The vertex `m_i` (side A) or `n_i` (side B).
    pub fn vertex(side: Side, dim: Dim, i: usize) -> Self {
        let mut weights = vec![0.0; dim.n()];
        weights[i] = 1.0;
        BaryPoint { side, weights }
    }

    /// Barycenter of the facet `σ_i` (side A) or `τ_i` (side B).
    pub fn face_barycenter(side: Side, dim: Dim, i: usize) -> Self {
        let w = 1.0 / (dim.d() + 1) as f64;
        let mut weights = vec![w; dim.n()];
        weights[i] = 0.0;
        BaryPoint { side, weights }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> Dim {
        Dim(self.weights.len() - 2)
    }

    /// `Σ_j α_j m_j = (d+2) α − 𝟙`.
    pub fn to_m_vector(&self) -> Result<MVector> {
        if self.side != Side::A {
            return Err(Error::SideMismatch("only A-side points map into M_R".into()));
        }
        let n = self.weights.len() as f64;
        Ok(MVector { coords: self.weights.iter().map(|a| n * a - 1.0).collect() })
    }

    /// `Σ_j β_j n_j = −β`.
    pub fn to_n_vector(&self) -> Result<NVector> {
        if self.side != Side::B {
            return Err(Error::SideMismatch("only B-side points map into N_R".into()));
        }
        Ok(NVector::canonical(self.weights.iter().map(|b| -b).collect()))
    }

    /// Inverse of [`BaryPoint::to_m_vector`]; fails when `m ∉ A`.
    pub fn from_m_vector(m: &MVector) -> Result<Self> {
        let n = m.coords.len() as f64;
        let weights: Vec<f64> = m.coords.iter().map(|c| (c + 1.0) / n).collect();
        Self::from_candidate(Side::A, weights)
    }

    /// Inverse of [`BaryPoint::to_n_vector`]; fails when `n ∉ B`.
    pub fn from_n_vector(v: &NVector) -> Result<Self> {
        let n = v.coords.len() as f64;
        let shift = (1.0 + v.coords.iter().sum::<f64>()) / n;
        let weights: Vec<f64> = v.coords.iter().map(|c| shift - c).collect();
        Self::from_candidate(Side::B, weights)
    }

    fn from_candidate(side: Side, weights: Vec<f64>) -> Result<Self> {
        let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        if min.abs() > 1e-9 {
            return Err(Error::InvalidVector(format!(
                "vector is not on the boundary {side}: minimal barycentric weight {min}"
            )));
        }
        Ok(Self::normalized(side, weights))
    }

    /// Barycentric ℓ∞ distance.
    pub fn dist_inf(&self, other: &BaryPoint) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Barycentric ℓ¹ distance.
    pub fn dist_l1(&self, other: &BaryPoint) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// `⟨m, n⟩` for an A-side point and a B-side point.
pub fn pair_points(m: &BaryPoint, n: &BaryPoint) -> Result<f64> {
    if m.side != Side::A || n.side != Side::B {
        return Err(Error::SideMismatch("pairing needs an A-side and a B-side point".into()));
    }
    m.dim().check(n.weights.len())?;
    Ok(bary_pairing(&m.weights, &n.weights))
}

/// Kinds of distinguished subsets: facets `σ_i ⊂ A`, `τ_i ⊂ B` and the
/// stars `S_i ⊂ A`, `T_i ⊂ B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceKind {
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "tau")]
    Tau,
    S,
    T,
}

impl FaceKind {
    pub fn side(self) -> Side {
        match self {
            FaceKind::Sigma | FaceKind::S => Side::A,
            FaceKind::Tau | FaceKind::T => Side::B,
        }
    }

    pub fn is_facet(self) -> bool {
        matches!(self, FaceKind::Sigma | FaceKind::Tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceId {
    pub kind: FaceKind,
    pub i: usize,
}

impl FaceId {
    pub fn new(dim: Dim, kind: FaceKind, i: usize) -> Result<Self> {
        if i >= dim.n() {
            return Err(Error::InvalidFace(format!("index {i} out of range for d = {dim}")));
        }
        Ok(FaceId { kind, i })
    }

    /// The facet (`σ_i` or `τ_i`) on the given side.
    pub fn facet(side: Side, i: usize) -> Self {
        let kind = match side {
            Side::A => FaceKind::Sigma,
            Side::B => FaceKind::Tau,
        };
        FaceId { kind, i }
    }

    pub fn star(side: Side, i: usize) -> Self {
        let kind = match side {
            Side::A => FaceKind::S,
            Side::B => FaceKind::T,
        };
        FaceId { kind, i }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceMembership {
    pub face: FaceId,
    pub interior: bool,
}

/// Output of [`classify`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub memberships: Vec<FaceMembership>,
    /// Membership in the regular locus `A_0` (resp. `B_0`).
    pub regular: bool,
}

impl Classification {
    pub fn contains(&self, face: FaceId) -> bool {
        self.memberships.iter().any(|m| m.face == face)
    }

    pub fn in_interior(&self, face: FaceId) -> bool {
        self.memberships.iter().any(|m| m.face == face && m.interior)
    }

    /// The index `i` of the open facet containing the point, if any.
    pub fn open_facet(&self) -> Option<usize> {
        self.memberships.iter().find(|m| m.interior && m.face.kind.is_facet()).map(|m| m.face.i)
    }

    /// The index `i` of the open star containing the point, if any.
    pub fn open_star(&self) -> Option<usize> {
        self.memberships.iter().find(|m| m.interior && !m.face.kind.is_facet()).map(|m| m.face.i)
    }
}

/// All facets and stars containing `p`, with relative-interior flags.
///
/// Facet `i`: `w_i = 0`, interior iff `min_{j≠i} w_j > 0`.
/// Star `i`: `w_i = max w`, interior iff `w_i > max_{j≠i} w_j`.
pub fn classify(p: &BaryPoint) -> Classification {
    let w = &p.weights;
    let mut memberships = Vec::new();
    for i in 0..w.len() {
        let others = w.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x);
        let (omin, omax) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if w[i].abs() <= CLASSIFY_TOL {
            memberships.push(FaceMembership { face: FaceId::facet(p.side, i), interior: omin > CLASSIFY_TOL });
        }
        if w[i] >= omax - CLASSIFY_TOL {
            memberships.push(FaceMembership { face: FaceId::star(p.side, i), interior: w[i] > omax + CLASSIFY_TOL });
        }
    }
    let regular = memberships.iter().any(|m| m.interior);
    Classification { memberships, regular }
}

/// Whether `p` lies in the closed star `Star(v_i) = ⋃_{k≠i}` facet `k`.
pub fn in_closed_star(p: &BaryPoint, i: usize) -> bool {
    p.weights.iter().enumerate().any(|(k, &w)| k != i && w.abs() <= CLASSIFY_TOL)
}

/// A permutation of `{0, …, d+1}`; acts by sending coordinate `k` to slot `perm[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    perm: Vec<usize>,
}

impl GroupElement {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::Config(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(GroupElement { perm })
    }

    pub fn identity(n: usize) -> Self {
        GroupElement { perm: (0..n).collect() }
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(a, b);
        GroupElement { perm }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement { perm: other.perm.iter().map(|&k| self.perm[k]).collect() }
    }

    pub fn inverse(&self) -> GroupElement {
        let mut inv = vec![0; self.perm.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            inv[p] = k;
        }
        GroupElement { perm: inv }
    }

    /// Permute a coordinate or weight vector: `out[perm[k]] = x[k]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }

    pub fn act_point(&self, p: &BaryPoint) -> BaryPoint {
        BaryPoint { side: p.side, weights: self.apply(&p.weights) }
    }

    pub fn act_m(&self, m: &MVector) -> MVector {
        MVector { coords: self.apply(&m.coords) }
    }

    pub fn act_n(&self, n: &NVector) -> NVector {
        NVector { coords: self.apply(&n.coords) }
    }
}

/// Every element of `S_{d+2}`, for `d ≤` [`MAX_ENUM_DIM`].
pub fn group_elements(dim: Dim) -> Result<Vec<GroupElement>> {
    if dim.d() > MAX_ENUM_DIM {
        return Err(Error::TooLarge { d: dim.d(), max: MAX_ENUM_DIM });
    }
    let n = dim.n();
    Ok((0..n).permutations(n).map(|perm| GroupElement { perm }).collect())
}

/// The deduplicated `G`-orbit of a point.
pub fn orbit(p: &BaryPoint) -> Result<Vec<BaryPoint>> {
    let dim = p.dim();
    if dim.d() > MAX_ENUM_DIM {
        return Err(Error::TooLarge { d: dim.d(), max: MAX_ENUM_DIM });
    }
    let n = dim.n();
    let mut out: Vec<BaryPoint> = Vec::new();
    for perm in (0..n).permutations(n) {
        let q = GroupElement { perm }.act_point(p);
        if !out.iter().any(|o| o.dist_inf(&q) <= ORBIT_TOL) {
            out.push(q);
        }
    }
    Ok(out)
}

/// Canonical orbit key: the weights sorted in decreasing order.
pub fn orbit_key(p: &BaryPoint) -> Vec<f64> {
    let mut w = p.weights.clone();
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

pub fn same_orbit(p: &BaryPoint, q: &BaryPoint) -> bool {
    p.side == q.side
        && orbit_key(p).iter().zip(orbit_key(q)).all(|(a, b)| (a - b).abs() <= ORBIT_TOL)
}

/// `max_g ⟨m, g·n⟩` together with the maximizing set `G(m, n)`.
pub fn symmetrized_max_pairing(m: &BaryPoint, n: &BaryPoint) -> Result<(f64, Vec<GroupElement>)> {
    if m.side != Side::A || n.side != Side::B {
        return Err(Error::SideMismatch("expected an A-side point and a B-side point".into()));
    }
    let dim = m.dim();
    dim.check(n.weights.len())?;
    let values: Vec<(GroupElement, f64)> = group_elements(dim)?
        .into_iter()
        .map(|g| {
            let v = bary_pairing(&m.weights, &g.apply(&n.weights));
            (g, v)
        })
        .collect();
    let best = values.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let argmax = values.into_iter().filter(|(_, v)| *v >= best - 1e-12).map(|(g, _)| g).collect();
    Ok((best, argmax))
}

/// Lebesgue mass of a facet `σ_i` or `τ_i`.
pub fn face_measure(dim: Dim, face: FaceId) -> Result<f64> {
    if face.i >= dim.n() {
        return Err(Error::InvalidFace(format!("index {} out of range for d = {dim}", face.i)));
    }
    if !face.kind.is_facet() {
        return Err(Error::InvalidFace("star masses are only available through charts and cells".into()));
    }
    Ok(dim.face_mass(face.kind.side()))
}

pub fn total_measure(dim: Dim, side: Side) -> f64 {
    dim.total_mass(side)
}

/// Uniform barycentric weights on the `d`-simplex `{w_i = 0}` from `d`
/// numbers in `[0, 1)`, via sorted spacings.
pub(crate) fn simplex_point_from_unit(dim: Dim, face: usize, u: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = u.to_vec();
    cuts.sort_by(f64::total_cmp);
    let mut spacings = Vec::with_capacity(dim.d() + 1);
    let mut prev = 0.0;
    for c in cuts {
        spacings.push(c - prev);
        prev = c;
    }
    spacings.push(1.0 - prev);
    let mut w = vec![0.0; dim.n()];
    let mut it = spacings.into_iter();
    for (k, slot) in w.iter_mut().enumerate() {
        if k != face {
            *slot = it.next().unwrap_or(0.0);
        }
    }
    w
}

/// `count` uniform samples on a facet, deterministic per `seed`.
pub fn sample_face(dim: Dim, face: FaceId, count: usize, seed: u64) -> Result<Vec<BaryPoint>> {
    if !face.kind.is_facet() {
        return Err(Error::InvalidFace("sampling is only defined on facets".into()));
    }
    if face.i >= dim.n() {
        return Err(Error::InvalidFace(format!("index {} out of range for d = {dim}", face.i)));
    }
    let mut rng = stream_rng(seed, face.i as u64);
    let side = face.kind.side();
    let mut u = vec![0.0; dim.d()];
    Ok((0..count)
        .map(|_| {
            u.iter_mut().for_each(|x| *x = rng.gen::<f64>());
            let w = simplex_point_from_unit(dim, face.i, &u);
            BaryPoint::normalized(side, w)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dim(d: usize) -> Dim {
        Dim::new(d).unwrap()
    }

    #[test]
    fn vertex_pairing_table() {
        for d in 1..=3 {
            let dm = dim(d);
            for i in 0..dm.n() {
                for j in 0..dm.n() {
                    let v = pairing(&MVector::vertex(dm, i), &NVector::vertex(dm, j)).unwrap();
                    let expect = if i == j { -(d as f64 + 1.0) } else { 1.0 };
                    assert_eq!(v, expect);
                }
            }
        }
    }

    #[test]
    fn pairing_examples() {
        let d2 = dim(2);
        assert_eq!(pairing(&MVector::vertex(d2, 0), &NVector::vertex(d2, 0)).unwrap(), -3.0);
        let m = BaryPoint::new(Side::A, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let n = BaryPoint::new(Side::B, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(pair_points(&m, &n).unwrap(), 1.0);
        let vec_value = pairing(&m.to_m_vector().unwrap(), &n.to_n_vector().unwrap()).unwrap();
        assert_abs_diff_eq!(vec_value, 1.0, epsilon = 1e-15);
        let short = MVector::new(vec![1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(pairing(&short, &NVector::vertex(d2, 0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vertices_as_vectors() {
        let d2 = dim(2);
        let m0 = BaryPoint::vertex(Side::A, d2, 0).to_m_vector().unwrap();
        assert_eq!(m0.coords(), &[3.0, -1.0, -1.0, -1.0]);
        let n0 = BaryPoint::vertex(Side::B, d2, 0).to_n_vector().unwrap();
        assert_eq!(n0, NVector::new(vec![-1.0, 0.0, 0.0, 0.0]).unwrap());
        // any representative is accepted
        assert_eq!(n0, NVector::new(vec![0.0, 1.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn vector_round_trip() {
        let d3 = dim(3);
        for seed in 0..20 {
            for p in sample_face(d3, FaceId::facet(Side::A, (seed % 5) as usize), 5, seed).unwrap() {
                let back = BaryPoint::from_m_vector(&p.to_m_vector().unwrap()).unwrap();
                assert!(back.dist_inf(&p) < 1e-14);
                let q = BaryPoint::normalized(Side::B, p.weights().to_vec());
                let back = BaryPoint::from_n_vector(&q.to_n_vector().unwrap()).unwrap();
                assert!(back.dist_inf(&q) < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_interior_points() {
        let bary = vec![0.25; 4];
        assert!(BaryPoint::new(Side::B, bary.clone()).is_err());
        let n = NVector::new(bary.iter().map(|b| -b).collect()).unwrap();
        assert!(BaryPoint::from_n_vector(&n).is_err());
    }

    #[test]
    fn repair_fixes_rounding_only() {
        let p = BaryPoint::repair(Side::A, vec![1e-9, 0.5, 0.5 - 1e-9]).unwrap();
        assert_eq!(p.weights()[0], 0.0);
        assert_abs_diff_eq!(p.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(BaryPoint::repair(Side::A, vec![0.1, 0.5, 0.4]).is_err());
        let json = r#"{"side":"B","weights":[0.0,0.3333333333333333,0.6666666666666666]}"#;
        let q: BaryPoint = serde_json::from_str(json).unwrap();
        assert_eq!(q.side(), Side::B);
    }

    #[test]
    fn classify_vertex() {
        let d2 = dim(2);
        let c = classify(&BaryPoint::vertex(Side::B, d2, 0));
        for j in 1..4 {
            assert!(c.contains(FaceId::facet(Side::B, j)));
            assert!(!c.in_interior(FaceId::facet(Side::B, j)));
        }
        assert!(!c.contains(FaceId::facet(Side::B, 0)));
        assert!(c.in_interior(FaceId::star(Side::B, 0)));
        // n_0 ∈ T_0° ⊂ B_0
        assert!(c.regular);
    }

    #[test]
    fn classify_face_interior() {
        let p = BaryPoint::new(Side::B, vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let c = classify(&p);
        assert!(c.in_interior(FaceId::facet(Side::B, 0)));
        assert_eq!(c.open_facet(), Some(0));
        assert!(c.regular);
        // three-way tie: in T_1, T_2, T_3 but none of their interiors
        for j in 1..4 {
            assert!(c.contains(FaceId::star(Side::B, j)));
            assert!(!c.in_interior(FaceId::star(Side::B, j)));
        }
    }

    #[test]
    fn classify_edge_barycenter_is_singular() {
        let p = BaryPoint::new(Side::B, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let c = classify(&p);
        assert!(c.contains(FaceId::facet(Side::B, 0)));
        assert!(c.contains(FaceId::facet(Side::B, 1)));
        assert!(!c.regular);
        // direct check against the definition of B_0
        let w = p.weights();
        let in_open_face = (0..4).any(|i| w[i] == 0.0 && (0..4).filter(|&j| j != i).all(|j| w[j] > 0.0));
        let in_open_star = (0..4).any(|i| (0..4).filter(|&j| j != i).all(|j| w[i] > w[j]));
        assert_eq!(c.regular, in_open_face || in_open_star);
    }

    #[test]
    fn group_action_basics() {
        let d2 = dim(2);
        let n0 = BaryPoint::vertex(Side::B, d2, 0);
        assert_eq!(GroupElement::identity(4).act_point(&n0), n0);
        assert_eq!(GroupElement::transposition(4, 0, 1).act_point(&n0), BaryPoint::vertex(Side::B, d2, 1));
        let g = GroupElement::new(vec![2, 0, 3, 1]).unwrap();
        let h = GroupElement::new(vec![1, 3, 0, 2]).unwrap();
        let p = BaryPoint::new(Side::A, vec![0.0, 0.1, 0.3, 0.6]).unwrap();
        assert_eq!(g.compose(&h).act_point(&p), g.act_point(&h.act_point(&p)));
        assert_eq!(g.compose(&g.inverse()), GroupElement::identity(4));
        for g in group_elements(d2).unwrap() {
            let v = pairing(&g.act_m(&MVector::vertex(d2, 0)), &g.act_n(&NVector::vertex(d2, 0))).unwrap();
            assert_eq!(v, -3.0);
        }
    }

    #[test]
    fn orbit_sizes() {
        let d2 = dim(2);
        assert_eq!(orbit(&BaryPoint::vertex(Side::B, d2, 0)).unwrap().len(), 4);
        let edge = BaryPoint::new(Side::B, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let o = orbit(&edge).unwrap();
        // brute force: all 24 images, deduplicated by exact comparison
        let mut images: Vec<Vec<f64>> =
            group_elements(d2).unwrap().iter().map(|g| g.apply(edge.weights())).collect();
        images.sort_by(|a, b| a.partial_cmp(b).unwrap());
        images.dedup();
        assert_eq!(o.len(), images.len());
        assert_eq!(o.len(), 6);
        let generic = BaryPoint::new(Side::B, vec![0.0, 0.1, 0.3, 0.6]).unwrap();
        assert_eq!(orbit(&generic).unwrap().len(), 24);
        assert!(matches!(
            orbit(&BaryPoint::vertex(Side::B, dim(6), 0)),
            Err(Error::TooLarge { d: 6, max: 5 })
        ));
    }

    #[test]
    fn symmetrized_pairing_vertices() {
        let d2 = dim(2);
        let (v, gs) =
            symmetrized_max_pairing(&BaryPoint::vertex(Side::A, d2, 0), &BaryPoint::vertex(Side::B, d2, 0)).unwrap();
        assert_eq!(v, 1.0);
        // witnesses send n_0 to some n_j with j ≠ 0: 3 choices × 3! = 18
        assert_eq!(gs.len(), 18);
        assert!(gs.iter().all(|g| g.perm()[0] != 0));
        assert!(symmetrized_max_pairing(&BaryPoint::vertex(Side::B, d2, 0), &BaryPoint::vertex(Side::B, d2, 0)).is_err());
    }

    #[test]
    fn face_measures() {
        let d2 = dim(2);
        assert_eq!(total_measure(d2, Side::A), 32.0);
        assert_eq!(face_measure(d2, FaceId::facet(Side::A, 0)).unwrap(), 8.0);
        assert_abs_diff_eq!(total_measure(d2, Side::B), 2.0, epsilon = 1e-15);
        assert!(face_measure(d2, FaceId::star(Side::A, 0)).is_err());
        for d in 1..=4 {
            let dm = dim(d);
            for side in [Side::A, Side::B] {
                let sum: f64 = (0..dm.n()).map(|i| face_measure(dm, FaceId::facet(side, i)).unwrap()).sum();
                assert_abs_diff_eq!(sum, total_measure(dm, side), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_uniform_and_deterministic() {
        let d2 = dim(2);
        let face = FaceId::facet(Side::A, 0);
        assert!(sample_face(d2, face, 0, 1).unwrap().is_empty());
        let a = sample_face(d2, face, 20_000, 7).unwrap();
        assert_eq!(a, sample_face(d2, face, 20_000, 7).unwrap());
        for k in 1..4 {
            let mean = a.iter().map(|p| p.weights()[k]).sum::<f64>() / a.len() as f64;
            // Dirichlet(1,1,1) marginal variance 2/36
            let se = (2.0_f64 / 36.0 / a.len() as f64).sqrt();
            assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "coordinate {k}: mean {mean}");
        }
        assert!(a.iter().all(|p| p.weights()[0] == 0.0));
    }

    #[test]
    fn sampled_sub_segment_mass() {
        // σ_0 for d = 1 has mass 3; the part with α_1 ≥ 1/2 has mass 1.5
        let d1 = dim(1);
        let s = sample_face(d1, FaceId::facet(Side::A, 0), 40_000, 3).unwrap();
        let frac = s.iter().filter(|p| p.weights()[1] >= 0.5).count() as f64 / s.len() as f64;
        let est = 3.0 * frac;
        let se = 3.0 * (0.25_f64 / s.len() as f64).sqrt();
        assert!((est - 1.5).abs() < 3.0 * se, "estimate {est}");
    }
}
