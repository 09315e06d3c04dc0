//! Variational solver for `ν_ψ = ν` with a symmetric atomic target.
//!
//! For atoms `n_k` with target weights `ν_k` the energy
//! `F(g) = ∫_A max_k(⟨m, n_k⟩ − g_k) dμ + Σ_k ν_k g_k` is convex with
//! gradient `ν_k − μ(cell_k)`. It is minimized over G-invariant weights (one
//! variable per atom orbit) by damped Newton or gradient steps with Armijo
//! backtracking.
//! At a minimizer every cell has its target mass, and the solution is
//! `ψ = (g^c)^c`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cconvex::{ctransform_discrete, ctransform_exact, DiscreteFn, MaxAffineFn};
use crate::error::{Error, Result};
use crate::geometry::{orbit_key, sample_face, BaryPoint, Dim, FaceId, Side, ORBIT_TOL};
use crate::ma_operator::{cells_from_weights, Backend, CellComplex};
use crate::measures::{bl_distance, lebesgue_on_b, AtomicMeasure};
use crate::rng::stream_rng;

/// Relative tolerance on the target mass `|A|`.
pub const MASS_TOL: f64 = 1e-9;
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 1.0;
const MAX_BACKTRACK: usize = 60;
const HESSIAN_STEP: f64 = 1e-7;
/// Relative rounding level of energy evaluations.
pub const F_ROUNDING: f64 = 1e-13;

/// How the additive constant of `g` is fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `Σ_{k ∈ orbit 0} g_k = 0`.
    #[default]
    FixOrbitSum,
    /// `g = 0` on orbit 0.
    FixValueAtOrbit0,
}

/// Descent direction used by [`solve`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Damped Newton steps with a difference Hessian (exact backend only;
    /// Monte Carlo runs fall back to gradient steps).
    #[default]
    Newton,
    /// Orbit-averaged gradient steps.
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveConfig {
    /// Largest allowed `|μ(cell_k) − ν_k|`.
    pub tol: f64,
    pub max_iter: usize,
    pub backend: Backend,
    pub normalization: Normalization,
    #[serde(default)]
    pub method: Method,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-8,
            max_iter: 1_000,
            backend: Backend::Exact,
            normalization: Normalization::default(),
            method: Method::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let Backend::MonteCarlo { samples, .. } = self.backend {
            if samples == 0 {
                return Err(Error::Config("Monte Carlo backend needs at least one sample".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub f: f64,
    pub residual: f64,
    /// Step accepted to reach this iterate (zero for the initial point).
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveResult {
    pub atoms: Vec<BaryPoint>,
    pub target: Vec<f64>,
    pub g: Vec<f64>,
    /// Orbit index of each atom.
    pub orbit_of: Vec<usize>,
    /// One weight per orbit.
    pub orbit_g: Vec<f64>,
    pub psi: MaxAffineFn,
    pub cell_masses: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub energy: f64,
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    /// The Monge–Ampère measure of the solution, one atom per input atom.
    pub fn ma_measure(&self) -> Result<AtomicMeasure> {
        AtomicMeasure::new(
            Side::B,
            self.atoms
                .iter()
                .zip(&self.cell_masses)
                .map(|(p, &w)| crate::measures::Atom { point: p.clone(), weight: w.max(0.0) })
                .collect(),
        )
    }

    /// `ψ` at the atoms, shifted so that its value at the first atom is zero.
    pub fn normalized_psi_at_atoms(&self) -> Vec<f64> {
        let vals: Vec<f64> = self.atoms.iter().map(|a| self.psi.eval_weights(a.weights())).collect();
        let base = vals[0];
        vals.into_iter().map(|v| v - base).collect()
    }

    /// The final cell decomposition, recomputed with the exact backend.
    pub fn cells(&self) -> Result<CellComplex> {
        cells_from_weights(&self.atoms, &self.g, Backend::Exact)
    }
}

/// Groups atoms into G-orbits; orbits are numbered by first appearance.
pub fn orbit_partition(atoms: &[BaryPoint]) -> Vec<usize> {
    let mut keys: Vec<Vec<f64>> = Vec::new();
    atoms
        .iter()
        .map(|a| {
            let k = orbit_key(a);
            match keys.iter().position(|q| q.iter().zip(&k).all(|(x, y)| (x - y).abs() <= ORBIT_TOL)) {
                Some(o) => o,
                None => {
                    keys.push(k);
                    keys.len() - 1
                }
            }
        })
        .collect()
}

fn prepare(nu: &AtomicMeasure) -> Result<(Dim, AtomicMeasure)> {
    if nu.side() != Side::B {
        return Err(Error::SideMismatch("the target measure must live on B".into()));
    }
    let dim = nu.dim().ok_or_else(|| Error::Empty("target measure has no atoms".into()))?;
    let sym = nu.symmetrize()?;
    let expected = dim.mass_a();
    let found = sym.total_mass();
    if (found - expected).abs() > MASS_TOL * expected {
        return Err(Error::MassNormalization { expected, found });
    }
    Ok((dim, sym))
}

/// Solves `ν_ψ = ν` starting from `g = 0`.
pub fn solve(nu: &AtomicMeasure, cfg: &SolveConfig) -> Result<SolveResult> {
    solve_from(nu, cfg, None)
}

/// Solves `ν_ψ = ν` starting from the given per-orbit weights.
///
/// The orbits are those of the symmetrized target, numbered as in
/// [`orbit_partition`] applied to its atoms.
pub fn solve_from(nu: &AtomicMeasure, cfg: &SolveConfig, init: Option<&[f64]>) -> Result<SolveResult> {
    cfg.validate()?;
    let (dim, sym) = prepare(nu)?;
    if let Backend::MonteCarlo { samples, .. } = cfg.backend {
        // largest possible per-atom standard error for this sample count
        let se = 0.5 * dim.mass_a() / (samples as f64).sqrt();
        if cfg.tol < 3.0 * se {
            return Err(Error::NoiseFloor { tol: cfg.tol, se });
        }
    }
    let atoms: Vec<BaryPoint> = sym.atoms().iter().map(|a| a.point.clone()).collect();
    let target: Vec<f64> = sym.atoms().iter().map(|a| a.weight).collect();
    let orbit_of = orbit_partition(&atoms);
    let n_orbits = orbit_of.iter().max().map_or(0, |m| m + 1);
    let mut orbit_size = vec![0.0; n_orbits];
    orbit_of.iter().for_each(|&o| orbit_size[o] += 1.0);
    let mut h = match init {
        Some(v) if v.len() != n_orbits => {
            return Err(Error::DimensionMismatch { expected: n_orbits, found: v.len() })
        }
        Some(v) => v.to_vec(),
        None => vec![0.0; n_orbits],
    };
    // both normalizations pin orbit 0 to zero on the symmetric subspace
    let normalize = |h: &mut Vec<f64>| {
        let s = h[0];
        h.iter_mut().for_each(|x| *x -= s);
    };
    normalize(&mut h);
    let solver = Objective { atoms: &atoms, target: &target, orbit_of: &orbit_of, n_orbits, backend: cfg.backend };
    let newton = cfg.method == Method::Newton && cfg.backend.is_exact();

    let (mut f, mut cells) = solver.eval(&h)?;
    let mut residual = solver.residual(&cells);
    let mut trace = vec![TraceEntry { f, residual, step: 0.0 }];
    let mut iterations = 0;
    let mut step = INITIAL_STEP;
    while residual > cfg.tol && iterations < cfg.max_iter {
        let grad = solver.gradient(&cells);
        let steepest: Vec<f64> = grad.iter().zip(&orbit_size).map(|(g, c)| -g / c).collect();
        let d = if newton {
            match solver.newton_direction(&h, &grad)? {
                Some(d) if d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() < 0.0 => d,
                _ => steepest,
            }
        } else {
            steepest
        };
        let slope = -d.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
        let mut accepted = None;
        let mut s = if newton { 1.0 } else { step };
        for _ in 0..MAX_BACKTRACK {
            let mut trial: Vec<f64> = h.iter().zip(&d).map(|(x, y)| x + s * y).collect();
            normalize(&mut trial);
            let (ft, ct) = solver.eval(&trial)?;
            // near the minimizer the predicted decrease drops below the rounding
            // error of F; then a step that does not raise F beyond rounding and
            // lowers the residual is accepted too
            let armijo = ft <= f - ARMIJO_C * s * slope;
            let flat = ft <= f + F_ROUNDING * (1.0 + f.abs()) && solver.residual(&ct) < residual;
            if armijo || flat {
                accepted = Some((trial, ft, ct));
                break;
            }
            s *= SHRINK;
        }
        let Some((trial, ft, ct)) = accepted else {
            break;
        };
        iterations += 1;
        h = trial;
        f = ft;
        cells = ct;
        residual = solver.residual(&cells);
        trace.push(TraceEntry { f, residual, step: s });
        step = (2.0 * s).min(INITIAL_STEP);
    }
    let g = solver.expand(&h);
    let phi = ctransform_discrete(&DiscreteFn::new(Side::B, atoms.clone(), g.clone())?)?;
    let psi = ctransform_exact(&phi)?.pruned();
    Ok(SolveResult {
        atoms: atoms.clone(),
        target: target.clone(),
        g,
        orbit_of: orbit_of.clone(),
        orbit_g: h,
        psi,
        cell_masses: cells.masses,
        residual,
        iterations,
        converged: residual <= cfg.tol,
        energy: f,
        trace,
    })
}

/// The energy restricted to G-invariant weights, one variable per orbit.
struct Objective<'a> {
    atoms: &'a [BaryPoint],
    target: &'a [f64],
    orbit_of: &'a [usize],
    n_orbits: usize,
    backend: Backend,
}

impl Objective<'_> {
    fn expand(&self, h: &[f64]) -> Vec<f64> {
        self.orbit_of.iter().map(|&o| h[o]).collect()
    }

    fn eval(&self, h: &[f64]) -> Result<(f64, CellComplex)> {
        let g = self.expand(h);
        let cells = cells_from_weights(self.atoms, &g, self.backend)?;
        let f = cells.energy + self.target.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        Ok((f, cells))
    }

    fn residual(&self, cells: &CellComplex) -> f64 {
        cells.masses.iter().zip(self.target).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max)
    }

    /// `∂F/∂h_o = Σ_{k ∈ o} (ν_k − μ_k)`.
    fn gradient(&self, cells: &CellComplex) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_orbits];
        for (k, &o) in self.orbit_of.iter().enumerate() {
            grad[o] += self.target[k] - cells.masses[k];
        }
        grad
    }

    /// Newton step with orbit 0 held fixed, using a forward-difference Hessian.
    fn newton_direction(&self, h: &[f64], grad: &[f64]) -> Result<Option<Vec<f64>>> {
        let m = self.n_orbits - 1;
        if m == 0 {
            return Ok(None);
        }
        let cols: Vec<Vec<f64>> = (1..self.n_orbits)
            .into_par_iter()
            .map(|p| {
                let mut hp = h.to_vec();
                hp[p] += HESSIAN_STEP;
                let (_, c) = self.eval(&hp)?;
                Ok(self.gradient(&c).iter().zip(grad).map(|(a, b)| (a - b) / HESSIAN_STEP).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut hess = DMatrix::from_fn(m, m, |r, c| 0.5 * (cols[c][r + 1] + cols[r][c + 1]));
        let scale = (0..m).map(|r| hess[(r, r)].abs()).fold(0.0, f64::max);
        for r in 0..m {
            hess[(r, r)] += 1e-10 * scale + 1e-14;
        }
        let rhs = DVector::from_iterator(m, grad[1..].iter().map(|g| -g));
        Ok(hess.lu().solve(&rhs).map(|x| std::iter::once(0.0).chain(x.iter().cloned()).collect()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UniquenessReport {
    /// Normalized `ψ` values at the atoms, one row per trial.
    pub solutions: Vec<Vec<f64>>,
    pub max_deviation: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Solves from `trials` random starting points and compares the normalized solutions.
pub fn verify_uniqueness(nu: &AtomicMeasure, cfg: &SolveConfig, trials: usize, seed: u64) -> Result<UniquenessReport> {
    let (_, sym) = prepare(nu)?;
    let atoms: Vec<BaryPoint> = sym.atoms().iter().map(|a| a.point.clone()).collect();
    let n_orbits = orbit_partition(&atoms).into_iter().max().map_or(0, |m| m + 1);
    let mut rng = stream_rng(seed, 0x5e);
    let mut solutions = Vec::with_capacity(trials);
    for _ in 0..trials {
        let init: Vec<f64> = (0..n_orbits).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = solve_from(nu, cfg, Some(&init))?;
        if !r.converged {
            return Err(Error::Config(format!(
                "solve did not converge within {} iterations (residual {:e})",
                cfg.max_iter, r.residual
            )));
        }
        solutions.push(r.normalized_psi_at_atoms());
    }
    let mut max_deviation: f64 = 0.0;
    for a in 0..solutions.len() {
        for b in a + 1..solutions.len() {
            for (x, y) in solutions[a].iter().zip(&solutions[b]) {
                max_deviation = max_deviation.max((x - y).abs());
            }
        }
    }
    let threshold = 10.0 * cfg.tol;
    Ok(UniquenessReport { solutions, max_deviation, threshold, pass: max_deviation < threshold })
}

/// A continuous symmetric target on B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContinuousTarget {
    /// Lebesgue measure on B rescaled to mass `|A|`.
    LebesgueOnB { dim: Dim },
    /// Constant density on each facet relative to the facet mass; must be
    /// G-invariant (equal on all facets) with total mass `|A|`.
    FaceDensity { density: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContinuousLadder {
    pub budgets: Vec<usize>,
    pub results: Vec<SolveResult>,
    /// Bounded-Lipschitz distance between consecutive Monge–Ampère measures.
    pub bl_gaps: Vec<f64>,
    /// Sup distance between consecutive `ψ`, normalized by `ψ(n_0) = 0`, on a fixed sample of B.
    pub sup_gaps: Vec<f64>,
}

/// Number of test functions used for the bounded-Lipschitz gaps of a ladder.
pub const LADDER_PROBES: usize = 256;
const LADDER_SAMPLES_PER_FACE: usize = 200;

/// Solves along increasing atom budgets for a continuous target.
pub fn solve_continuous(target: &ContinuousTarget, budgets: &[usize], cfg: &SolveConfig, seed: u64) -> Result<ContinuousLadder> {
    let dim = match target {
        ContinuousTarget::LebesgueOnB { dim } => *dim,
        ContinuousTarget::FaceDensity { density } => {
            let dim = Dim::from_coords(density.len())?;
            let mass: f64 = density.iter().map(|x| x * dim.face_mass(Side::B)).sum();
            if (mass - dim.mass_a()).abs() > MASS_TOL * dim.mass_a() {
                return Err(Error::MassNormalization { expected: dim.mass_a(), found: mass });
            }
            let spread = density.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - density.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-12 {
                return Err(Error::NotSymmetric(spread));
            }
            dim
        }
    };
    if budgets.is_empty() {
        return Err(Error::Empty("atom budget ladder is empty".into()));
    }
    let mut sample = Vec::new();
    for l in 0..dim.n() {
        sample.extend(sample_face(dim, FaceId::facet(Side::B, l), LADDER_SAMPLES_PER_FACE, seed)?);
    }
    let v0 = BaryPoint::vertex(Side::B, dim, 0);
    let mut results = Vec::with_capacity(budgets.len());
    let mut profiles: Vec<Vec<f64>> = Vec::new();
    let mut measures = Vec::new();
    for &b in budgets {
        let nu = lebesgue_on_b(dim, b)?;
        let r = solve(&nu, cfg)?;
        let base = r.psi.eval_weights(v0.weights());
        profiles.push(sample.iter().map(|p| r.psi.eval_weights(p.weights()) - base).collect());
        measures.push(r.ma_measure()?);
        results.push(r);
    }
    let mut bl_gaps = Vec::new();
    let mut sup_gaps = Vec::new();
    for k in 1..results.len() {
        bl_gaps.push(bl_distance(&measures[k - 1], &measures[k], dim, LADDER_PROBES, seed)?);
        sup_gaps.push(
            profiles[k - 1].iter().zip(&profiles[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        );
    }
    Ok(ContinuousLadder { budgets: budgets.to_vec(), results, bl_gaps, sup_gaps })
}
