//! Measures on `A` and `B`: weighted atoms, face-constant Lebesgue
//! densities, symmetrization and a bounded-Lipschitz comparison.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orbit, simplex_point_from_unit, BaryPoint, Dim, GroupElement, Side};
use crate::rng::stream_rng;

/// Atoms closer than this (barycentric ℓ∞) are merged.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: BaryPoint,
    pub weight: f64,
}

/// A finite nonnegative combination of Dirac masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureData", into = "MeasureData")]
pub struct AtomicMeasure {
    side: Side,
    atoms: Vec<Atom>,
}

/// Lebesgue measure with a constant density on each facet, relative to the
/// normalized facet mass (density 1 everywhere is the Lebesgue measure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureData", into = "MeasureData")]
pub struct LebesgueMeasure {
    side: Side,
    density: Vec<f64>,
}

/// The on-disk measure format; either part may be empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasureData {
    pub side: Side,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub face_density: Vec<f64>,
}

impl TryFrom<MeasureData> for AtomicMeasure {
    type Error = Error;
    fn try_from(m: MeasureData) -> Result<Self> {
        if m.face_density.iter().any(|&x| x != 0.0) {
            return Err(Error::Config("expected an atomic measure, found a face density".into()));
        }
        AtomicMeasure::new(m.side, m.atoms)
    }
}

impl From<AtomicMeasure> for MeasureData {
    fn from(m: AtomicMeasure) -> Self {
        MeasureData { side: m.side, atoms: m.atoms, face_density: Vec::new() }
    }
}

impl TryFrom<MeasureData> for LebesgueMeasure {
    type Error = Error;
    fn try_from(m: MeasureData) -> Result<Self> {
        if !m.atoms.is_empty() {
            return Err(Error::Config("expected a face density, found atoms".into()));
        }
        LebesgueMeasure::new(m.side, m.face_density)
    }
}

impl From<LebesgueMeasure> for MeasureData {
    fn from(m: LebesgueMeasure) -> Self {
        MeasureData { side: m.side, atoms: Vec::new(), face_density: m.density }
    }
}

impl AtomicMeasure {
    /// Validates weights and merges atoms within [`MERGE_TOL`].
    pub fn new(side: Side, atoms: Vec<Atom>) -> Result<Self> {
        let n = atoms.first().map(|a| a.point.weights().len());
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if a.point.side() != side {
                return Err(Error::SideMismatch(format!("atom on {} in a measure on {side}", a.point.side())));
            }
            if Some(a.point.weights().len()) != n {
                return Err(Error::DimensionMismatch { expected: n.unwrap_or(0), found: a.point.weights().len() });
            }
            if !(a.weight >= 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidPoint(format!("atom weight {} must be finite and nonnegative", a.weight)));
            }
            match merged.iter_mut().find(|b| b.point.dist_inf(&a.point) <= MERGE_TOL) {
                Some(b) => b.weight += a.weight,
                None => merged.push(a),
            }
        }
        Ok(AtomicMeasure { side, atoms: merged })
    }

    pub fn from_pairs(side: Side, pairs: &[(Vec<f64>, f64)]) -> Result<Self> {
        let atoms = pairs
            .iter()
            .map(|(w, m)| Ok(Atom { point: BaryPoint::new(side, w.clone())?, weight: *m }))
            .collect::<Result<Vec<_>>>()?;
        AtomicMeasure::new(side, atoms)
    }

    pub fn dirac(point: BaryPoint, weight: f64) -> Result<Self> {
        let side = point.side();
        AtomicMeasure::new(side, vec![Atom { point, weight }])
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> Option<Dim> {
        self.atoms.first().map(|a| a.point.dim())
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Weight of the atom at `p` (zero when there is none).
    pub fn weight_at(&self, p: &BaryPoint) -> f64 {
        self.atoms.iter().filter(|a| a.point.dist_inf(p) <= MERGE_TOL).map(|a| a.weight).sum()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        AtomicMeasure::new(
            self.side,
            self.atoms.iter().map(|a| Atom { point: a.point.clone(), weight: s * a.weight }).collect(),
        )
    }

    /// Pushforward `g_* m`.
    pub fn act(&self, g: &GroupElement) -> Self {
        AtomicMeasure {
            side: self.side,
            atoms: self.atoms.iter().map(|a| Atom { point: g.act_point(&a.point), weight: a.weight }).collect(),
        }
    }

    /// Spreads each atom's weight uniformly over its G-orbit.
    pub fn symmetrize(&self) -> Result<Self> {
        let mut out = Vec::new();
        for a in &self.atoms {
            let o = orbit(&a.point)?;
            let w = a.weight / o.len() as f64;
            out.extend(o.into_iter().map(|point| Atom { point, weight: w }));
        }
        AtomicMeasure::new(self.side, out)
    }

    /// Whether every `g·m` equals `m` atom by atom within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> Result<bool> {
        let s = self.symmetrize()?;
        Ok(self.atoms.len() == s.atoms.len()
            && self.atoms.iter().all(|a| (s.weight_at(&a.point) - a.weight).abs() <= tol))
    }

    /// `∫ f dm` for a function of barycentric weights.
    pub fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.point.weights())).sum()
    }
}

impl LebesgueMeasure {
    pub fn new(side: Side, density: Vec<f64>) -> Result<Self> {
        Dim::from_coords(density.len())?;
        if density.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidPoint("face densities must be finite and nonnegative".into()));
        }
        Ok(LebesgueMeasure { side, density })
    }

    /// The normalized Lebesgue measure (`μ` on A, or Lebesgue on B).
    pub fn uniform(side: Side, dim: Dim) -> Self {
        LebesgueMeasure { side, density: vec![1.0; dim.n()] }
    }

    /// Lebesgue measure on `side` rescaled to total mass `mass`.
    pub fn uniform_with_mass(side: Side, dim: Dim, mass: f64) -> Self {
        let s = mass / dim.total_mass(side);
        LebesgueMeasure { side, density: vec![s; dim.n()] }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn dim(&self) -> Dim {
        Dim::from_coords(self.density.len()).expect("validated on construction")
    }

    pub fn total_mass(&self) -> f64 {
        let fm = self.dim().face_mass(self.side);
        self.density.iter().map(|x| x * fm).sum()
    }

    /// Quasi-Monte Carlo quadrature with `per_face` Halton nodes on each facet.
    pub fn integrate(&self, f: &dyn Fn(&[f64]) -> f64, per_face: usize) -> f64 {
        let dim = self.dim();
        let fm = dim.face_mass(self.side);
        let nodes = halton_simplex(dim, per_face);
        let mut total = 0.0;
        for (l, &dens) in self.density.iter().enumerate() {
            if dens == 0.0 {
                continue;
            }
            let mean: f64 = nodes
                .iter()
                .map(|u| {
                    let w = simplex_point_from_unit(dim, l, u);
                    f(&w)
                })
                .sum::<f64>()
                / nodes.len() as f64;
            total += dens * fm * mean;
        }
        total
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// The first `count` points (index ≥ 1) of the Halton sequence in `[0,1)^d`.
pub(crate) fn halton_simplex(dim: Dim, count: usize) -> Vec<Vec<f64>> {
    (1..=count as u64).map(|i| (0..dim.d()).map(|r| radical_inverse(i, PRIMES[r % PRIMES.len()])).collect()).collect()
}

/// A measure that can be integrated against test functions.
pub trait Integrable {
    fn side(&self) -> Side;
    fn mass(&self) -> f64;
    fn integral(&self, f: &dyn Fn(&[f64]) -> f64) -> f64;
}

impl Integrable for AtomicMeasure {
    fn side(&self) -> Side {
        self.side
    }
    fn mass(&self) -> f64 {
        self.total_mass()
    }
    fn integral(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.integrate(f)
    }
}

/// Quadrature nodes per facet used when a Lebesgue measure enters [`bl_distance`].
pub const BL_QUADRATURE_NODES: usize = 20_000;

impl Integrable for LebesgueMeasure {
    fn side(&self) -> Side {
        self.side
    }
    fn mass(&self) -> f64 {
        self.total_mass()
    }
    fn integral(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.integrate(f, BL_QUADRATURE_NODES)
    }
}

/// A 1-Lipschitz test function bounded by 1 (barycentric ℓ¹ metric).
#[derive(Clone, Debug)]
enum Probe {
    Coordinate(usize),
    Tent { center: Vec<f64>, radius: f64 },
}

impl Probe {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Probe::Coordinate(j) => x[*j],
            Probe::Tent { center, radius } => {
                let d: f64 = center.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
                d.min(*radius)
            }
        }
    }
}

fn probes(dim: Dim, side: Side, count: usize, seed: u64) -> Vec<Probe> {
    let mut out: Vec<Probe> = (0..dim.n()).map(Probe::Coordinate).collect();
    let mut rng = stream_rng(seed, 0xb1);
    let mut u = vec![0.0; dim.d()];
    for _ in 0..count {
        let l = rng.gen_range(0..dim.n());
        u.iter_mut().for_each(|x| *x = rng.gen::<f64>());
        let center = simplex_point_from_unit(dim, l, &u);
        let radius = rng.gen_range(0.05..1.0);
        out.push(Probe::Tent { center, radius });
    }
    let _ = side;
    out
}

/// `sup_f |∫f dm1 − ∫f dm2|` over a seeded family of test functions with
/// `|f| ≤ 1` and Lipschitz constant 1 for the barycentric ℓ¹ distance.
pub fn bl_distance(m1: &dyn Integrable, m2: &dyn Integrable, dim: Dim, probe_count: usize, seed: u64) -> Result<f64> {
    if m1.side() != m2.side() {
        return Err(Error::SideMismatch("cannot compare measures on different sides".into()));
    }
    let fam = probes(dim, m1.side(), probe_count, seed);
    Ok(fam
        .iter()
        .map(|p| {
            let f = |x: &[f64]| p.eval(x);
            (m1.integral(&f) - m2.integral(&f)).abs()
        })
        .fold(0.0, f64::max))
}

/// Symmetric atomic approximation of Lebesgue measure on B rescaled to mass `|A|`.
///
/// With `budget = 1` the atoms are the facet barycenters. Otherwise `budget`
/// distinct points of the chamber `β_1 ≥ … ≥ β_{d+1}` of `τ_0`, obtained by
/// folding the Halton sequence, are spread over their orbits, each point
/// carrying mass `|A| / budget`.
pub fn lebesgue_on_b(dim: Dim, budget: usize) -> Result<AtomicMeasure> {
    if budget == 0 {
        return Err(Error::Config("atom budget must be positive".into()));
    }
    let total = dim.mass_a();
    if budget == 1 {
        let p = BaryPoint::face_barycenter(Side::B, dim, 0);
        return AtomicMeasure::new(Side::B, vec![Atom { point: p, weight: total }])?.symmetrize();
    }
    // fold Halton points into the chamber, skipping points that land on an earlier one
    let mut chamber: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut index = 1u64;
    while chamber.len() < budget {
        let u: Vec<f64> = (0..dim.d()).map(|r| radical_inverse(index, PRIMES[r % PRIMES.len()])).collect();
        index += 1;
        let mut w = simplex_point_from_unit(dim, 0, &u);
        w[1..].sort_by(|a, b| b.total_cmp(a));
        if !chamber.iter().any(|c| c.iter().zip(&w).all(|(a, b)| (a - b).abs() <= MERGE_TOL)) {
            chamber.push(w);
        }
    }
    let atoms = chamber
        .into_iter()
        .map(|w| Atom { point: BaryPoint::normalized(Side::B, w), weight: total / budget as f64 })
        .collect();
    AtomicMeasure::new(Side::B, atoms)?.symmetrize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::group_elements;
    use approx::assert_abs_diff_eq;

    fn d2() -> Dim {
        Dim::new(2).unwrap()
    }

    #[test]
    fn symmetrize_vertex() {
        let m = AtomicMeasure::dirac(BaryPoint::vertex(Side::B, d2(), 0), 4.0).unwrap();
        let s = m.symmetrize().unwrap();
        assert_eq!(s.atoms().len(), 4);
        assert!(s.atoms().iter().all(|a| (a.weight - 1.0).abs() < 1e-15));
        assert_eq!(s.symmetrize().unwrap(), s);
        assert!(s.is_symmetric(1e-12).unwrap());
        assert!(!m.is_symmetric(1e-12).unwrap());
    }

    #[test]
    fn symmetrize_edge_barycenter() {
        let m = AtomicMeasure::from_pairs(Side::B, &[(vec![0.0, 0.0, 0.5, 0.5], 6.0)]).unwrap();
        let s = m.symmetrize().unwrap();
        assert_eq!(s.atoms().len(), 6);
        assert_abs_diff_eq!(s.total_mass(), 6.0, epsilon = 1e-14);
        for g in group_elements(d2()).unwrap() {
            let h = s.act(&g);
            assert!(h.atoms().iter().all(|a| (s.weight_at(&a.point) - a.weight).abs() < 1e-12));
        }
    }

    #[test]
    fn merge_and_validation() {
        let m = AtomicMeasure::from_pairs(Side::B, &[(vec![0.0, 1.0, 0.0], 1.0), (vec![0.0, 1.0, 0.0], 2.0)]).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.total_mass(), 3.0);
        assert!(AtomicMeasure::from_pairs(Side::B, &[(vec![0.0, 1.0, 0.0], -1.0)]).is_err());
        assert!(AtomicMeasure::from_pairs(Side::B, &[(vec![0.0, 1.0, 0.0], f64::NAN)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = AtomicMeasure::from_pairs(Side::B, &[(vec![0.0, 0.25, 0.75], 1.5)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("faceDensity"));
        let back: AtomicMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let leb = LebesgueMeasure::uniform(Side::A, Dim::new(1).unwrap());
        let back: LebesgueMeasure = serde_json::from_str(&serde_json::to_string(&leb).unwrap()).unwrap();
        assert_eq!(back, leb);
    }

    #[test]
    fn bl_distance_basics() {
        let dim = d2();
        let a = AtomicMeasure::dirac(BaryPoint::vertex(Side::B, dim, 0), 1.0).unwrap();
        let b = AtomicMeasure::dirac(BaryPoint::vertex(Side::B, dim, 1), 1.0).unwrap();
        assert_eq!(bl_distance(&a, &a, dim, 32, 1).unwrap(), 0.0);
        let dist = bl_distance(&a, &b, dim, 32, 1).unwrap();
        assert!(dist > 0.0 && dist <= 2.0);
        let c = AtomicMeasure::dirac(BaryPoint::vertex(Side::A, dim, 1), 1.0).unwrap();
        assert!(bl_distance(&a, &c, dim, 8, 1).is_err());
    }

    #[test]
    fn lebesgue_quadrature() {
        let dim = d2();
        let leb = LebesgueMeasure::uniform(Side::A, dim);
        assert_abs_diff_eq!(leb.total_mass(), 32.0, epsilon = 1e-12);
        // mean of a coordinate over a facet not containing it is 1/3; the facet's own coordinate is 0
        let v = leb.integrate(&|x| x[0], 4096);
        assert_abs_diff_eq!(v, 3.0 * 8.0 / 3.0, epsilon = 1e-2);
    }

    #[test]
    fn lebesgue_on_b_barycenters() {
        let m = lebesgue_on_b(d2(), 1).unwrap();
        assert_eq!(m.atoms().len(), 4);
        assert!(m.atoms().iter().all(|a| (a.weight - 8.0).abs() < 1e-12));
        for budget in [2, 5, 17] {
            let m = lebesgue_on_b(d2(), budget).unwrap();
            assert_abs_diff_eq!(m.total_mass(), 32.0, epsilon = 1e-10);
            assert!(m.is_symmetric(1e-9).unwrap());
        }
    }
}
