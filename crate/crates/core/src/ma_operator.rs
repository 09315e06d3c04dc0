//! The symmetric tropical Monge–Ampère operator.
//!
//! For atoms `n_k ∈ B` and weights `g_k`, the function
//! `φ(m) = max_k ⟨m, n_k⟩ − g_k` splits `A` into Laguerre-type cells, one per
//! atom. The measure `ν_ψ` of an envelope `ψ` is obtained by taking the
//! candidate points of `ψ` as atoms with `g_k = ψ(n_k)` and recording the
//! `μ`-mass of each cell. Cells are clipped exactly face by face, or
//! estimated by stratified Monte Carlo sampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cconvex::{face_regions, AffineForm, ChartConvexFn, FaceFrame, MaxAffineFn, TIE_TOL};
use crate::charts::Chart;
use crate::error::{Error, Result};
use crate::geometry::{classify, factorial, simplex_point_from_unit, BaryPoint, Dim, Side};
use crate::measures::{Atom, AtomicMeasure};
use crate::polytope::hull_volume;
use crate::rng::stream_rng;

/// Atoms of a Monge–Ampère measure closer than this (barycentric ℓ∞) are merged.
pub const CLUSTER_RADIUS: f64 = 1e-6;
/// Tolerance for the symmetry precondition of [`trop_ma`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Cell masses below this fraction of `|A|` are treated as zero.
const MASS_FLOOR: f64 = 1e-13;
const BLOCK: usize = 4096;

/// How cell masses are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    /// Half-space clipping of each face with exact polytope volumes.
    Exact,
    /// Stratified sampling of `μ`, `samples` points in total.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Backend {
    pub fn is_exact(self) -> bool {
        matches!(self, Backend::Exact)
    }
}

/// The part of one cell inside one face `σ_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPiece {
    pub face: usize,
    /// Atoms whose affine pieces coincide on this face region, lowest index first.
    pub atoms: Vec<usize>,
    /// Vertices of the region as barycentric weights on `A`.
    pub vertices: Vec<Vec<f64>>,
    pub mass: f64,
    pub centroid: Vec<f64>,
    /// Value of `φ` at the centroid.
    pub value: f64,
}

/// A decomposition of `A` into the cells of `φ(m) = max_k ⟨m, n_k⟩ − g_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellComplex {
    pub dim: Dim,
    pub atoms: Vec<BaryPoint>,
    pub weights: Vec<f64>,
    /// Exact backend only.
    pub pieces: Vec<CellPiece>,
    /// Cell masses with shared regions assigned to the lowest atom index.
    pub masses: Vec<f64>,
    /// Masses of the closed cells; shared regions count for every atom.
    pub closed_masses: Vec<f64>,
    /// Per-atom binomial standard errors (zero for the exact backend).
    pub standard_errors: Vec<f64>,
    /// Fraction of samples that had a tied maximizer (Monte Carlo only).
    pub tie_fraction: f64,
    /// `∫_A φ dμ`.
    pub energy: f64,
    pub backend: Backend,
}

impl CellComplex {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Forms of the atoms as functions of barycentric weights on `A`.
    pub fn forms(&self) -> Vec<AffineForm> {
        self.atoms.iter().zip(&self.weights).map(|(a, &g)| AffineForm::from_generator(a.weights(), g)).collect()
    }

    /// Half-space description of the cell of `atom` on face `σ_l`:
    /// `form_atom − form_r ≥ 0` for every other atom `r`.
    pub fn cell_constraints(&self, atom: usize) -> Vec<AffineForm> {
        let forms = self.forms();
        (0..forms.len())
            .filter(|&r| r != atom)
            .map(|r| forms[atom].add(&forms[r].scale(-1.0)))
            .collect()
    }

    pub fn pieces_of(&self, atom: usize) -> impl Iterator<Item = &CellPiece> {
        self.pieces.iter().filter(move |p| p.atoms[0] == atom)
    }
}

fn check_atoms(atoms: &[BaryPoint], g: &[f64]) -> Result<Dim> {
    let first = atoms.first().ok_or_else(|| Error::Empty("cell decomposition needs at least one atom".into()))?;
    let dim = first.dim();
    if g.len() != atoms.len() {
        return Err(Error::DimensionMismatch { expected: atoms.len(), found: g.len() });
    }
    for a in atoms {
        if a.side() != Side::B {
            return Err(Error::SideMismatch("cell atoms must lie on B".into()));
        }
        if a.weights().len() != dim.n() {
            return Err(Error::DimensionMismatch { expected: dim.n(), found: a.weights().len() });
        }
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidPoint("non-finite cell weight".into()));
    }
    Ok(dim)
}

/// The cells `{m : ⟨m, n_k⟩ − g_k ≥ ⟨m, n_r⟩ − g_r ∀ r}` and their `μ`-masses.
pub fn cells_from_weights(atoms: &[BaryPoint], g: &[f64], backend: Backend) -> Result<CellComplex> {
    let dim = check_atoms(atoms, g)?;
    let forms: Vec<AffineForm> =
        atoms.iter().zip(g).map(|(a, &gk)| AffineForm::from_generator(a.weights(), gk)).collect();
    match backend {
        Backend::Exact => Ok(exact_cells(dim, atoms, g, &forms)),
        Backend::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Config("Monte Carlo backend needs at least one sample".into()));
            }
            Ok(sampled_cells(dim, atoms, g, &forms, samples, seed))
        }
    }
}

fn exact_cells(dim: Dim, atoms: &[BaryPoint], g: &[f64], forms: &[AffineForm]) -> CellComplex {
    let n = dim.n();
    // a unit of reduced-coordinate volume is 1/d! of the standard simplex
    let scale = dim.face_mass(Side::A) * factorial(dim.d());
    let per_face: Vec<Vec<CellPiece>> = (0..n)
        .into_par_iter()
        .map(|l| {
            let frame = FaceFrame::new(n, l);
            face_regions(n, l, forms)
                .into_iter()
                .filter_map(|r| {
                    let (vol, c) = r.poly.volume_centroid();
                    if vol <= 0.0 {
                        return None;
                    }
                    let centroid = frame.lift(&c);
                    let value = forms[r.members[0]].eval(&centroid);
                    let vertices = r.poly.vertices().iter().map(|v| frame.lift(v)).collect();
                    Some(CellPiece { face: l, atoms: r.members, vertices, mass: scale * vol, centroid, value })
                })
                .collect()
        })
        .collect();
    let pieces: Vec<CellPiece> = per_face.into_iter().flatten().collect();
    let mut masses = vec![0.0; atoms.len()];
    let mut closed_masses = vec![0.0; atoms.len()];
    let mut energy = 0.0;
    for p in &pieces {
        masses[p.atoms[0]] += p.mass;
        for &a in &p.atoms {
            closed_masses[a] += p.mass;
        }
        energy += p.mass * p.value;
    }
    CellComplex {
        dim,
        atoms: atoms.to_vec(),
        weights: g.to_vec(),
        pieces,
        masses,
        closed_masses,
        standard_errors: vec![0.0; atoms.len()],
        tie_fraction: 0.0,
        energy,
        backend: Backend::Exact,
    }
}

struct Tally {
    counts: Vec<u64>,
    ties: u64,
    value_sum: f64,
}

fn sampled_cells(
    dim: Dim,
    atoms: &[BaryPoint],
    g: &[f64],
    forms: &[AffineForm],
    samples: usize,
    seed: u64,
) -> CellComplex {
    let n = dim.n();
    let per_face = samples.div_ceil(n);
    let blocks = per_face.div_ceil(BLOCK);
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|l| (0..blocks).map(move |b| (l, b))).collect();
    let tallies: Vec<Tally> = jobs
        .par_iter()
        .map(|&(l, b)| {
            let count = BLOCK.min(per_face - b * BLOCK);
            let mut rng = stream_rng(seed, ((l as u64) << 32) + b as u64);
            let mut u = vec![0.0; dim.d()];
            let mut t = Tally { counts: vec![0; forms.len()], ties: 0, value_sum: 0.0 };
            let mut vals = vec![0.0; forms.len()];
            for _ in 0..count {
                u.iter_mut().for_each(|x| *x = rng.gen::<f64>());
                let w = simplex_point_from_unit(dim, l, &u);
                for (v, f) in vals.iter_mut().zip(forms) {
                    *v = f.eval(&w);
                }
                let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut winner = None;
                let mut tied = 0;
                for (k, &v) in vals.iter().enumerate() {
                    if v >= best - TIE_TOL {
                        winner.get_or_insert(k);
                        tied += 1;
                    }
                }
                t.counts[winner.expect("nonempty")] += 1;
                if tied > 1 {
                    t.ties += 1;
                }
                t.value_sum += best;
            }
            t
        })
        .collect();
    let fm = dim.face_mass(Side::A);
    let mut masses = vec![0.0; forms.len()];
    let mut variance = vec![0.0; forms.len()];
    let mut ties = 0;
    let mut energy = 0.0;
    for l in 0..n {
        let mut counts = vec![0u64; forms.len()];
        let mut value_sum = 0.0;
        for t in &tallies[l * blocks..(l + 1) * blocks] {
            counts.iter_mut().zip(&t.counts).for_each(|(a, b)| *a += b);
            ties += t.ties;
            value_sum += t.value_sum;
        }
        let nl = per_face as f64;
        for k in 0..forms.len() {
            let p = counts[k] as f64 / nl;
            masses[k] += fm * p;
            variance[k] += fm * fm * p * (1.0 - p) / nl;
        }
        energy += fm * value_sum / nl;
    }
    CellComplex {
        dim,
        atoms: atoms.to_vec(),
        weights: g.to_vec(),
        pieces: Vec::new(),
        closed_masses: masses.clone(),
        masses,
        standard_errors: variance.into_iter().map(f64::sqrt).collect(),
        tie_fraction: ties as f64 / (per_face * n) as f64,
        energy,
        backend: Backend::MonteCarlo { samples, seed },
    }
}

/// Options for [`trop_ma`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaOptions {
    pub backend: Backend,
    /// Run on non-symmetric input instead of refusing.
    pub allow_nonsymmetric: bool,
}

impl Default for MaOptions {
    fn default() -> Self {
        MaOptions { backend: Backend::Exact, allow_nonsymmetric: false }
    }
}

/// A Monge–Ampère measure together with how it was computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MAResult {
    #[serde(flatten)]
    pub measure: AtomicMeasure,
    pub backend: Backend,
    /// Exact backend: deviation of the total mass from `|A|`. Monte Carlo:
    /// largest per-atom standard error.
    pub error_estimate: f64,
    /// Per-atom standard errors, aligned with the measure's atoms (Monte Carlo only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub standard_errors: Vec<f64>,
    pub symmetry_defect: f64,
}

/// The candidate atoms of `ψ` with weights `g_k = ψ(n_k)`; the cells of these
/// atoms are the c-subdifferential images of `ψ^c`.
pub fn envelope_atoms(psi: &MaxAffineFn) -> Result<(Vec<BaryPoint>, Vec<f64>)> {
    if psi.side() != Side::B {
        return Err(Error::SideMismatch("Monge–Ampère measures are taken of functions on B".into()));
    }
    let atoms = psi.candidate_points();
    let g = atoms.iter().map(|p| psi.eval_weights(p.weights())).collect();
    Ok((atoms, g))
}

fn cluster(atoms: &[BaryPoint], masses: &[f64], errors: &[f64], floor: f64) -> Result<(AtomicMeasure, Vec<f64>)> {
    let mut reps: Vec<(BaryPoint, f64, f64)> = Vec::new();
    for ((a, &m), &e) in atoms.iter().zip(masses).zip(errors) {
        if m <= floor {
            continue;
        }
        match reps.iter_mut().find(|(p, _, _)| p.dist_inf(a) <= CLUSTER_RADIUS) {
            Some(r) => {
                r.1 += m;
                r.2 = (r.2 * r.2 + e * e).sqrt();
            }
            None => reps.push((a.clone(), m, e)),
        }
    }
    let errs = reps.iter().map(|r| r.2).collect();
    let measure =
        AtomicMeasure::new(Side::B, reps.into_iter().map(|(point, weight, _)| Atom { point, weight }).collect())?;
    Ok((measure, errs))
}

/// `ν_ψ`, the pushforward of `μ` under the c-gradient of `ψ^c`.
pub fn trop_ma(psi: &MaxAffineFn, opts: MaOptions) -> Result<MAResult> {
    let (atoms, g) = envelope_atoms(psi)?;
    let defect = psi.symmetry_defect()?;
    if defect > SYMMETRY_TOL && !opts.allow_nonsymmetric {
        return Err(Error::NotSymmetric(defect));
    }
    let cells = cells_from_weights(&atoms, &g, opts.backend)?;
    let floor = MASS_FLOOR * cells.dim.mass_a();
    let (measure, errors) = cluster(&atoms, &cells.masses, &cells.standard_errors, floor)?;
    let (error_estimate, standard_errors) = match opts.backend {
        Backend::Exact => ((cells.total_mass() - cells.dim.mass_a()).abs(), Vec::new()),
        Backend::MonteCarlo { .. } => (errors.iter().cloned().fold(0.0, f64::max), errors),
    };
    Ok(MAResult { measure, backend: opts.backend, error_estimate, standard_errors, symmetry_defect: defect })
}

/// `U ↦ μ(∂^cψ(U))` on atoms, counting every point of `A` at which several
/// atoms are c-subgradients once per atom. For symmetric `ψ` this equals
/// [`trop_ma`]; otherwise the total can exceed `|A|`.
pub fn pushforward_closed(psi: &MaxAffineFn) -> Result<AtomicMeasure> {
    let (atoms, g) = envelope_atoms(psi)?;
    let cells = cells_from_weights(&atoms, &g, Backend::Exact)?;
    let floor = MASS_FLOOR * cells.dim.mass_a();
    let zeros = vec![0.0; atoms.len()];
    Ok(cluster(&atoms, &cells.closed_masses, &zeros, floor)?.0)
}

/// `F(g; ν) = ∫_A max_k(⟨m, n_k⟩ − g_k) dμ + Σ_k ν_k g_k`, with `ν_k` the
/// target weight at atom `k`.
pub fn energy(atoms: &[BaryPoint], g: &[f64], nu: &[f64], backend: Backend) -> Result<f64> {
    if nu.len() != atoms.len() {
        return Err(Error::DimensionMismatch { expected: atoms.len(), found: nu.len() });
    }
    let cells = cells_from_weights(atoms, g, backend)?;
    Ok(cells.energy + nu.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
}

/// `∂F/∂g_k = ν_k − μ(cell_k)`.
pub fn energy_gradient(atoms: &[BaryPoint], g: &[f64], nu: &[f64], backend: Backend) -> Result<Vec<f64>> {
    if nu.len() != atoms.len() {
        return Err(Error::DimensionMismatch { expected: atoms.len(), found: nu.len() });
    }
    let cells = cells_from_weights(atoms, g, backend)?;
    Ok(nu.iter().zip(&cells.masses).map(|(a, b)| a - b).collect())
}

/// `F(ψ; ν) = ∫_A ψ^c dμ + ∫_B ψ dν` for an envelope `ψ` on B.
pub fn energy_of_envelope(psi: &MaxAffineFn, nu: &AtomicMeasure, backend: Backend) -> Result<f64> {
    if nu.side() != Side::B {
        return Err(Error::SideMismatch("the target measure must live on B".into()));
    }
    let (atoms, g) = envelope_atoms(psi)?;
    let cells = cells_from_weights(&atoms, &g, backend)?;
    Ok(cells.energy + nu.integrate(&|x| psi.eval_weights(x)))
}

/// Alexandrov Monge–Ampère mass of a chart function at `t0`: the Lebesgue
/// volume of the convex hull of the gradients of all pieces active around `t0`.
pub fn alexandrov_ma_chart(f: &ChartConvexFn, t0: &[f64]) -> Result<f64> {
    let gradients = local_gradients(f, t0)?;
    Ok(hull_volume(&gradients))
}

/// Gradients of the full-dimensional linearity regions whose closure contains `t0`.
fn local_gradients(f: &ChartConvexFn, t0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let chart = f.chart();
    let dim = chart.dim();
    let n = dim.n();
    let p = chart.from_chart(t0)?;
    let w = p.weights();
    let mut grads: Vec<Vec<f64>> = Vec::new();
    // chart directions into each region, used for the convexity check
    let mut cones: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for k in (0..n).filter(|&k| k != chart.center() && w[k] <= 1e-10) {
        let pieces: Vec<_> = f.pieces().iter().filter(|q| q.facet == k).collect();
        let forms: Vec<AffineForm> = pieces.iter().map(|q| q.form.clone()).collect();
        let frame = FaceFrame::new(n, k);
        let x = frame.reduce(w);
        for r in face_regions(n, k, &forms) {
            if r.poly.volume() <= 0.0 {
                continue;
            }
            let inside = x.iter().all(|&v| v >= -1e-9)
                && x.iter().sum::<f64>() <= 1.0 + 1e-9
                && r.constraints.iter().all(|h| h.slack(&x) <= 1e-9);
            if !inside {
                continue;
            }
            let grad = pieces[r.members[0]].gradient.clone();
            let mut dirs = Vec::new();
            for v in r.poly.vertices() {
                let s = chart.to_chart(&BaryPoint::normalized(chart.side(), frame.lift(v)))?;
                let dir: Vec<f64> = s.iter().zip(t0).map(|(a, b)| a - b).collect();
                if dir.iter().map(|z| z.abs()).fold(0.0, f64::max) > 1e-12 {
                    dirs.push(dir);
                }
            }
            if !grads.iter().any(|q| q.iter().zip(&grad).all(|(a, b)| (a - b).abs() <= 1e-12)) {
                grads.push(grad.clone());
            }
            cones.push((grad, dirs));
        }
    }
    if grads.is_empty() {
        return Err(Error::OutsideDomain(format!("no chart piece contains {t0:?}")));
    }
    // convex near t0 iff every region's own gradient wins on its cone of directions
    for (own, dirs) in &cones {
        for dir in dirs {
            let dot = |g: &[f64]| g.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
            let mine = dot(own);
            let best = grads.iter().map(|g| dot(g)).fold(f64::NEG_INFINITY, f64::max);
            let scale = 1.0 + dir.iter().map(|z| z.abs()).sum::<f64>() * own.iter().map(|z| z.abs()).fold(1.0, f64::max);
            if mine < best - 1e-9 * scale {
                return Err(Error::NotConvex(format!("chart function has a concave fold at {t0:?}")));
            }
        }
    }
    Ok(grads)
}

/// One atom of `ν_ψ` compared with the Alexandrov mass of a chart restriction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChartComparison {
    pub atom: BaryPoint,
    pub chart: (usize, usize),
    pub tropical: f64,
    /// `None` when the atom lies outside the star covered by the chart.
    pub chart_mass: Option<f64>,
    /// Whether the chart identity is expected to hold at this atom.
    pub in_scope: bool,
    /// Whether the atom lies in the regular locus `B_0`.
    pub regular: bool,
}

impl ChartComparison {
    pub fn residual(&self) -> Option<f64> {
        self.chart_mass.map(|c| (c - self.tropical).abs())
    }
}

fn compare_atom(psi: &MaxAffineFn, atom: &BaryPoint, tropical: f64, i: usize, j: usize) -> Result<ChartComparison> {
    let chart = Chart::q(psi.dim(), i, j)?;
    let cls = classify(atom);
    let in_scope = cls.open_facet() == Some(j) || cls.open_star() == Some(i);
    let chart_mass = if chart.in_star(atom) {
        let f = crate::cconvex::chart_restrict(psi, i, j)?;
        Some(alexandrov_ma_chart(&f, &chart.to_chart(atom)?)?)
    } else {
        None
    };
    Ok(ChartComparison { atom: atom.clone(), chart: (i, j), tropical, chart_mass, in_scope, regular: cls.regular })
}

/// Compares every atom of `ν_ψ` with the chart mass of `ψ_{i,j}` at its preimage.
/// Atoms in `τ_j°` or the open star `T_i°` are in scope; other atoms of the
/// star are reported for information.
pub fn compare_in_charts(psi: &MaxAffineFn, i: usize, j: usize, backend: Backend) -> Result<Vec<ChartComparison>> {
    let ma = trop_ma(psi, MaOptions { backend, allow_nonsymmetric: false })?;
    ma.measure.atoms().iter().map(|a| compare_atom(psi, &a.point, a.weight, i, j)).collect()
}

/// The chart used by [`compare_all`] for an atom.
pub fn default_chart(atom: &BaryPoint) -> (usize, usize) {
    let cls = classify(atom);
    let w = atom.weights();
    let n = w.len();
    if let Some(j) = cls.open_facet() {
        let i = (0..n).find(|&k| k != j).expect("n ≥ 3");
        return (i, j);
    }
    if let Some(i) = cls.open_star() {
        let j = (0..n).find(|&k| k != i).expect("n ≥ 3");
        return (i, j);
    }
    let top = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let i = (0..n).find(|&k| w[k] >= top - 1e-10).expect("nonempty");
    let j = (0..n).find(|&k| k != i && w[k] <= 1e-10).unwrap_or((i + 1) % n);
    (i, j)
}

/// [`compare_in_charts`] with a chart chosen per atom by [`default_chart`].
pub fn compare_all(psi: &MaxAffineFn, backend: Backend) -> Result<Vec<ChartComparison>> {
    let ma = trop_ma(psi, MaOptions { backend, allow_nonsymmetric: false })?;
    ma.measure
        .atoms()
        .iter()
        .map(|a| {
            let (i, j) = default_chart(&a.point);
            compare_atom(psi, &a.point, a.weight, i, j)
        })
        .collect()
}

/// Whether the cells of a solution sit where the symmetric theory puts them:
/// an atom in `τ_i°` has its cell in the star `S_i = {α_i = max α}`, and an
/// atom in the open star `T_i°` has its cell in `σ_i`. Returns the atoms
/// that violate this.
pub fn cell_location_violations(cells: &CellComplex, tol: f64) -> Vec<usize> {
    let mut bad = Vec::new();
    for (k, atom) in cells.atoms.iter().enumerate() {
        let cls = classify(atom);
        let ok = cells.pieces_of(k).all(|p| {
            if p.mass <= tol {
                return true;
            }
            let facet_ok = cls.open_facet().map_or(true, |i| {
                p.vertices.iter().all(|v| v.iter().all(|&x| v[i] >= x - 1e-9))
            });
            let star_ok = cls.open_star().map_or(true, |i| p.face == i);
            facet_ok && star_ok
        });
        if !ok {
            bad.push(k);
        }
    }
    bad
}
