//! Real-valued potential data on the non-Archimedean side.
//!
//! A toric metric is determined by the function `(ψ − m_j) ∘ trop` on the
//! torus chart of `χ^{m_j}`, so at the tropical level the potential is the
//! envelope of `ψ` evaluated on all of `N_ℝ` minus a linear function. This
//! module evaluates that potential, exports the Legendre-side data
//! `φ = ψ^c` on a grid of `Δ`, and checks the `d!` factor relating the
//! non-Archimedean Monge–Ampère mass to `ν_ψ`.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cconvex::{ctransform_exact, MaxAffineFn};
use crate::error::{Error, Result};
use crate::geometry::{factorial, pairing, BaryPoint, Dim, MVector, NVector, Side};
use crate::ma_operator::{compare_all, trop_ma, Backend, MaOptions};

/// Values of `(ψ − m_j) ∘ trop` at tropical points of `N_ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TropicalPotential {
    pub psi: MaxAffineFn,
    pub reference: usize,
    pub queries: Vec<NVector>,
    pub values: Vec<f64>,
}

/// `n ↦ ψ(n) − ⟨m_j, n⟩` with `ψ` given by its envelope formula on `N_ℝ`.
pub fn potential_eval(psi: &MaxAffineFn, j: usize, queries: &[NVector]) -> Result<TropicalPotential> {
    let dim = psi.dim();
    if j >= dim.n() {
        return Err(Error::InvalidFace(format!("reference index {j} out of range for d = {dim}")));
    }
    let mj = MVector::vertex(dim, j);
    let values = queries.par_iter().map(|n| Ok(psi.eval_n(n)? - pairing(&mj, n)?)).collect::<Result<Vec<_>>>()?;
    Ok(TropicalPotential { psi: psi.clone(), reference: j, queries: queries.to_vec(), values })
}

/// Per-atom bookkeeping between tropical, chart and non-Archimedean masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizationAtom {
    pub atom: BaryPoint,
    pub tropical: f64,
    /// `d! ×` the tropical mass.
    pub na_mass: f64,
    /// `d! ×` the chart Alexandrov mass, for atoms in the regular locus.
    pub chart_na_mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizationReport {
    pub dim: Dim,
    pub tropical_total: f64,
    pub na_total: f64,
    /// `(d+2)^{d+1} = d! · |A|`.
    pub expected_na_total: f64,
    pub atoms: Vec<NormalizationAtom>,
}

impl NormalizationReport {
    /// Largest `|d!·chart − d!·tropical|` over regular atoms.
    pub fn chart_residual(&self) -> f64 {
        self.atoms
            .iter()
            .filter_map(|a| a.chart_na_mass.map(|c| (c - a.na_mass).abs()))
            .fold(0.0, f64::max)
    }
}

/// The non-Archimedean Monge–Ampère mass `d! ν_ψ`, atom by atom.
pub fn compare_ma_normalization(psi: &MaxAffineFn, backend: Backend) -> Result<NormalizationReport> {
    let dim = psi.dim();
    let fact = factorial(dim.d());
    let ma = trop_ma(psi, MaOptions { backend, allow_nonsymmetric: false })?;
    let charts = compare_all(psi, backend)?;
    let atoms: Vec<NormalizationAtom> = ma
        .measure
        .atoms()
        .iter()
        .map(|a| {
            let chart = charts
                .iter()
                .find(|c| c.atom.dist_inf(&a.point) <= 1e-9 && c.regular)
                .and_then(|c| c.chart_mass);
            NormalizationAtom {
                atom: a.point.clone(),
                tropical: a.weight,
                na_mass: fact * a.weight,
                chart_na_mass: chart.map(|c| fact * c),
            }
        })
        .collect();
    let tropical_total = ma.measure.total_mass();
    Ok(NormalizationReport {
        dim,
        tropical_total,
        na_total: fact * tropical_total,
        expected_na_total: (dim.n() as f64).powi(dim.d() as i32 + 1),
        atoms,
    })
}

/// `φ = ψ^c` sampled on a grid of the full simplex `Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LegendreExport {
    pub dim: Dim,
    /// Grid points as barycentric weights of `Δ` (interior points included).
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl LegendreExport {
    /// Largest violation of `φ((a+b)/2) ≤ (φ(a)+φ(b))/2` over grid pairs
    /// whose midpoint is again a grid point.
    pub fn midpoint_defect(&self) -> f64 {
        let key = |w: &[f64]| -> Vec<i64> { w.iter().map(|x| (x * 1e9).round() as i64).collect() };
        let index: std::collections::HashMap<Vec<i64>, usize> =
            self.points.iter().enumerate().map(|(k, p)| (key(p), k)).collect();
        let mut worst: f64 = 0.0;
        for (a, b) in (0..self.points.len()).tuple_combinations() {
            let mid: Vec<f64> = self.points[a].iter().zip(&self.points[b]).map(|(x, y)| 0.5 * (x + y)).collect();
            if let Some(&c) = index.get(&key(&mid)) {
                worst = worst.max(self.values[c] - 0.5 * (self.values[a] + self.values[b]));
            }
        }
        worst
    }
}

/// Samples `ψ^c` at the points of `Δ` whose barycentric weights are multiples of `1/steps`.
pub fn legendre_export(psi: &MaxAffineFn, steps: usize) -> Result<LegendreExport> {
    if steps == 0 {
        return Err(Error::Config("grid needs at least one step".into()));
    }
    if psi.side() != Side::B {
        return Err(Error::SideMismatch("the Legendre export is taken of a function on B".into()));
    }
    let dim = psi.dim();
    let phi = ctransform_exact(psi)?;
    let mut points = Vec::new();
    compositions(dim.n(), steps, &mut Vec::new(), &mut points);
    let points: Vec<Vec<f64>> =
        points.into_iter().map(|c| c.into_iter().map(|k| k as f64 / steps as f64).collect()).collect();
    let values = points
        .par_iter()
        .map(|w| {
            let coords: Vec<f64> = (0..dim.n()).map(|k| dim.n() as f64 * w[k] - 1.0).collect();
            phi.eval_m(&MVector::new(coords)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LegendreExport { dim, points, values })
}

fn compositions(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        let mut c = prefix.clone();
        c.push(total);
        out.push(c);
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(parts - 1, total - k, prefix, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dim(d: usize) -> Dim {
        Dim::new(d).unwrap()
    }

    #[test]
    fn constant_potential_at_reference_vertex() {
        for d in 1..=3 {
            let d = dim(d);
            let psi = MaxAffineFn::constant(Side::B, d, 1.0);
            let p = potential_eval(&psi, 0, &[NVector::vertex(d, 0)]).unwrap();
            assert_abs_diff_eq!(p.values[0], d.n() as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn restriction_to_b_is_psi_minus_linear() {
        let d = dim(2);
        let psi = crate::fixtures::dualvertmass_psi();
        let pts = crate::geometry::sample_face(d, crate::geometry::FaceId::facet(Side::B, 1), 50, 4).unwrap();
        let queries: Vec<NVector> = pts.iter().map(|p| p.to_n_vector().unwrap()).collect();
        let pot = potential_eval(&psi, 2, &queries).unwrap();
        let m2 = BaryPoint::vertex(Side::A, d, 2);
        for (p, v) in pts.iter().zip(&pot.values) {
            let expected = psi.eval(p).unwrap() - crate::geometry::pair_points(&m2, p).unwrap();
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalization_totals() {
        let r = compare_ma_normalization(&MaxAffineFn::constant(Side::B, dim(2), 1.0), Backend::Exact).unwrap();
        assert_abs_diff_eq!(r.na_total, 64.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.expected_na_total, 64.0, epsilon = 0.0);
        let r = compare_ma_normalization(&MaxAffineFn::constant(Side::B, dim(1), 1.0), Backend::Exact).unwrap();
        assert_abs_diff_eq!(r.na_total, 9.0, epsilon = 1e-9);
    }

    #[test]
    fn legendre_export_is_convex() {
        let e = legendre_export(&crate::fixtures::dualvertmass_psi(), 6).unwrap();
        assert_eq!(e.points.len(), 84);
        assert!(e.midpoint_defect() <= 1e-9);
    }
}
