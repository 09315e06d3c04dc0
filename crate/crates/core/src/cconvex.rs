//! c-convex functions as finite max-affine envelopes and their c-transforms.
//!
//! A [`MaxAffineFn`] on one side is `x ↦ max_a ⟨anchor_a, x⟩ − offset_a` with
//! anchors on the opposite side. On each facet such a function is piecewise
//! affine in barycentric weights, so the supremum defining its c-transform is
//! attained at a vertex of one of its linearity regions. Those vertices form
//! the finite candidate set used by [`ctransform_exact`]; the LP route in
//! [`ctransform_envelope`] evaluates the same supremum one query at a time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::Chart;
use crate::error::{Error, Result};
use crate::geometry::{
    bary_pairing, group_elements, BaryPoint, Dim, GroupElement, MVector, NVector, Side, ORBIT_TOL,
};
use crate::lp::{self, Constraint, Relation};
use crate::polytope::{HalfSpace, Polytope};

/// Tolerance for ties between generators.
pub const TIE_TOL: f64 = 1e-9;
/// Tolerance for identifying candidate points.
const POINT_TOL: f64 = 1e-10;

/// The affine function `x ↦ w·x + c` of barycentric weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineForm {
    pub w: Vec<f64>,
    pub c: f64,
}

impl AffineForm {
    pub fn new(w: Vec<f64>, c: f64) -> Self {
        AffineForm { w, c }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        AffineForm { w: vec![0.0; n], c }
    }

    /// The form of `x ↦ ⟨anchor, x⟩ − offset`.
    pub fn from_generator(anchor: &[f64], offset: f64) -> Self {
        let n = anchor.len() as f64;
        AffineForm { w: anchor.iter().map(|a| -n * a).collect(), c: 1.0 - offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.c
    }

    pub fn add(&self, other: &AffineForm) -> AffineForm {
        AffineForm { w: self.w.iter().zip(&other.w).map(|(a, b)| a + b).collect(), c: self.c + other.c }
    }

    pub fn scale(&self, s: f64) -> AffineForm {
        AffineForm { w: self.w.iter().map(|a| s * a).collect(), c: s * self.c }
    }
}

/// Reduced coordinates on the facet `{x_l = 0}`.
///
/// The free weights are those with index `≠ l`; the last one is eliminated
/// through `Σ x = 1`, so the facet becomes the standard simplex in `ℝ^d`.
#[derive(Clone, Debug)]
pub(crate) struct FaceFrame {
    pub n: usize,
    pub free: Vec<usize>,
    pub last: usize,
}

impl FaceFrame {
    pub fn new(n: usize, l: usize) -> Self {
        let mut free: Vec<usize> = (0..n).filter(|&k| k != l).collect();
        let last = free.pop().expect("at least two free weights");
        FaceFrame { n, free, last }
    }

    /// A form restricted to the facet, as reduced coefficients and a constant.
    pub fn restrict(&self, f: &AffineForm) -> (Vec<f64>, f64) {
        let wr = f.w[self.last];
        (self.free.iter().map(|&k| f.w[k] - wr).collect(), f.c + wr)
    }

    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        let mut rest = 1.0;
        for (&k, &v) in self.free.iter().zip(x) {
            w[k] = v;
            rest -= v;
        }
        w[self.last] = rest;
        w
    }

    pub fn reduce(&self, w: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&k| w[k]).collect()
    }
}

/// A linearity region of a max of forms on one facet.
#[derive(Clone, Debug)]
pub(crate) struct Region {
    /// Indices of the forms that coincide on the facet (sorted).
    pub members: Vec<usize>,
    pub poly: Polytope,
    /// Constraints `other − own ≤ 0` in reduced coordinates.
    pub constraints: Vec<HalfSpace>,
}

fn same_restricted(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> bool {
    let scale = 1.0 + a.1.abs().max(b.1.abs());
    (a.1 - b.1).abs() <= 1e-12 * scale && a.0.iter().zip(&b.0).all(|(x, y)| (x - y).abs() <= 1e-12 * scale)
}

/// The regions `{form_a ≥ form_b ∀b}` on facet `l`, one per group of forms
/// coinciding on the facet. Empty regions are dropped.
pub(crate) fn face_regions(n: usize, l: usize, forms: &[AffineForm]) -> Vec<Region> {
    let frame = FaceFrame::new(n, l);
    let restricted: Vec<(Vec<f64>, f64)> = forms.iter().map(|f| frame.restrict(f)).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (a, ra) in restricted.iter().enumerate() {
        match groups.iter_mut().find(|g| same_restricted(&restricted[g[0]], ra)) {
            Some(g) => g.push(a),
            None => groups.push(vec![a]),
        }
    }
    let reps: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let d = n - 2;
    // value of each representative at the facet vertices, used to order clips
    let corners: Vec<Vec<f64>> = {
        let mut c = vec![vec![0.0; d]];
        for r in 0..d {
            let mut v = vec![0.0; d];
            v[r] = 1.0;
            c.push(v);
        }
        c
    };
    let eval = |r: &(Vec<f64>, f64), x: &[f64]| r.0.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + r.1;
    let upper: Vec<f64> = reps
        .iter()
        .map(|&a| corners.iter().map(|x| eval(&restricted[a], x)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let lower: Vec<f64> = reps
        .iter()
        .map(|&a| corners.iter().map(|x| eval(&restricted[a], x)).fold(f64::INFINITY, f64::min))
        .collect();
    let best_lower = lower.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    for (gi, &a) in reps.iter().enumerate() {
        // a form that never reaches the largest guaranteed value has an empty region
        if upper[gi] < best_lower - 1e-9 {
            continue;
        }
        let ra = &restricted[a];
        let mut poly = Polytope::standard_simplex(d);
        let mut constraints = Vec::with_capacity(reps.len());
        let mut order: Vec<usize> = (0..reps.len()).filter(|&h| h != gi).collect();
        order.sort_by(|&x, &y| lower[y].total_cmp(&lower[x]));
        let mut alive = true;
        for h in order {
            let rb = &restricted[reps[h]];
            // form_b − form_a ≤ 0
            let hs = HalfSpace::new(rb.0.iter().zip(&ra.0).map(|(x, y)| x - y).collect(), ra.1 - rb.1);
            if !poly.clip(&hs) {
                alive = false;
                break;
            }
            constraints.push(hs);
        }
        if alive {
            out.push(Region { members: groups[gi].clone(), poly, constraints });
        }
    }
    out
}

fn push_unique(points: &mut Vec<Vec<f64>>, p: Vec<f64>) {
    if !points.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= POINT_TOL)) {
        points.push(p);
    }
}

/// Vertices of the full-dimensional linearity regions of `max_a forms_a`
/// over all facets, as barycentric weights.
pub(crate) fn linearity_vertices(n: usize, forms: &[AffineForm]) -> Vec<Vec<f64>> {
    let per_face: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|l| {
            let frame = FaceFrame::new(n, l);
            let mut pts = Vec::new();
            for region in face_regions(n, l, forms) {
                if region.poly.volume() <= 0.0 {
                    continue;
                }
                for v in region.poly.vertices() {
                    let mut w = frame.lift(v);
                    w[l] = 0.0;
                    w.iter_mut().for_each(|x| {
                        if x.abs() < 1e-14 {
                            *x = 0.0
                        }
                    });
                    push_unique(&mut pts, w);
                }
            }
            pts
        })
        .collect();
    let mut out = Vec::new();
    for pts in per_face {
        for p in pts {
            push_unique(&mut out, p);
        }
    }
    out
}

/// A generator `x ↦ ⟨anchor, x⟩ − offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub anchor: BaryPoint,
    pub offset: f64,
}

#[derive(Deserialize)]
struct RawMaxAffineFn {
    side: Side,
    generators: Vec<Generator>,
}

/// A c-convex function stored as a finite max-affine envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMaxAffineFn")]
pub struct MaxAffineFn {
    side: Side,
    generators: Vec<Generator>,
}

impl TryFrom<RawMaxAffineFn> for MaxAffineFn {
    type Error = Error;
    fn try_from(raw: RawMaxAffineFn) -> Result<Self> {
        MaxAffineFn::new(raw.side, raw.generators)
    }
}

impl MaxAffineFn {
    /// `side` is where the function lives; anchors must be on the other side.
    pub fn new(side: Side, generators: Vec<Generator>) -> Result<Self> {
        let first = generators.first().ok_or_else(|| Error::Empty("an envelope needs a generator".into()))?;
        let n = first.anchor.weights().len();
        for g in &generators {
            if g.anchor.side() != side.opposite() {
                return Err(Error::SideMismatch(format!(
                    "a function on {side} needs anchors on {}",
                    side.opposite()
                )));
            }
            if g.anchor.weights().len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: g.anchor.weights().len() });
            }
            if !g.offset.is_finite() {
                return Err(Error::InvalidPoint("non-finite offset".into()));
            }
        }
        Ok(MaxAffineFn { side, generators })
    }

    /// Envelope from `(anchor weights, offset)` pairs; weights must be valid points.
    pub fn from_pairs(side: Side, pairs: &[(Vec<f64>, f64)]) -> Result<Self> {
        let generators = pairs
            .iter()
            .map(|(w, o)| Ok(Generator { anchor: BaryPoint::new(side.opposite(), w.clone())?, offset: *o }))
            .collect::<Result<Vec<_>>>()?;
        MaxAffineFn::new(side, generators)
    }

    /// The constant function `c`, written as `max_i ⟨vertex_i, x⟩ − (1 − c)`.
    pub fn constant(side: Side, dim: Dim, c: f64) -> Self {
        let generators = (0..dim.n())
            .map(|i| Generator { anchor: BaryPoint::vertex(side.opposite(), dim, i), offset: 1.0 - c })
            .collect();
        MaxAffineFn { side, generators }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dim(&self) -> Dim {
        self.generators[0].anchor.dim()
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn forms(&self) -> Vec<AffineForm> {
        self.generators.iter().map(|g| AffineForm::from_generator(g.anchor.weights(), g.offset)).collect()
    }

    /// Evaluation at barycentric weights (any point of the affine hull).
    pub fn eval_weights(&self, x: &[f64]) -> f64 {
        self.generators
            .iter()
            .map(|g| bary_pairing(g.anchor.weights(), x) - g.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, x: &BaryPoint) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval_weights(x.weights()))
    }

    fn check_point(&self, x: &BaryPoint) -> Result<()> {
        if x.side() != self.side {
            return Err(Error::SideMismatch(format!("function lives on {}, point on {}", self.side, x.side())));
        }
        let n = self.dim().n();
        if x.weights().len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.weights().len() });
        }
        Ok(())
    }

    /// The envelope formula at an arbitrary element of `N_ℝ` (functions on B).
    pub fn eval_n(&self, v: &NVector) -> Result<f64> {
        if self.side != Side::B {
            return Err(Error::SideMismatch("only functions on B extend to N_R".into()));
        }
        self.generators
            .iter()
            .map(|g| Ok(crate::geometry::pairing(&g.anchor.to_m_vector()?, v)? - g.offset))
            .try_fold(f64::NEG_INFINITY, |acc, x: Result<f64>| Ok(acc.max(x?)))
    }

    /// The envelope formula at an arbitrary element of `M_ℝ` (functions on A).
    pub fn eval_m(&self, m: &MVector) -> Result<f64> {
        if self.side != Side::A {
            return Err(Error::SideMismatch("only functions on A extend to M_R".into()));
        }
        self.generators
            .iter()
            .map(|g| Ok(crate::geometry::pairing(m, &g.anchor.to_n_vector()?)? - g.offset))
            .try_fold(f64::NEG_INFINITY, |acc, x: Result<f64>| Ok(acc.max(x?)))
    }

    /// Generators attaining the maximum at `x` within [`TIE_TOL`].
    pub fn active_generators(&self, x: &[f64]) -> Vec<usize> {
        let vals: Vec<f64> = self.generators.iter().map(|g| bary_pairing(g.anchor.weights(), x) - g.offset).collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..vals.len()).filter(|&a| vals[a] >= best - TIE_TOL).collect()
    }

    /// `f + a`.
    pub fn shifted(&self, a: f64) -> Self {
        let generators =
            self.generators.iter().map(|g| Generator { anchor: g.anchor.clone(), offset: g.offset - a }).collect();
        MaxAffineFn { side: self.side, generators }
    }

    /// `g·f = f ∘ g^{-1}`.
    pub fn act(&self, g: &GroupElement) -> Self {
        let generators =
            self.generators.iter().map(|x| Generator { anchor: g.act_point(&x.anchor), offset: x.offset }).collect();
        MaxAffineFn { side: self.side, generators }
    }

    /// `max_g g·f`, the smallest G-invariant envelope above `f`.
    pub fn symmetrized(&self) -> Result<Self> {
        let group = group_elements(self.dim())?;
        let mut generators: Vec<Generator> = Vec::new();
        for x in &self.generators {
            for g in &group {
                let anchor = g.act_point(&x.anchor);
                let dup = generators
                    .iter()
                    .any(|y| y.anchor.dist_inf(&anchor) <= ORBIT_TOL && (y.offset - x.offset).abs() <= ORBIT_TOL);
                if !dup {
                    generators.push(Generator { anchor, offset: x.offset });
                }
            }
        }
        Ok(MaxAffineFn { side: self.side, generators })
    }

    /// Drops generators that are nowhere strictly needed. The function is unchanged.
    pub fn pruned(&self) -> Self {
        let n = self.dim().n();
        let forms = self.forms();
        let mut keep = vec![false; forms.len()];
        for l in 0..n {
            for r in face_regions(n, l, &forms) {
                if r.poly.volume() > 0.0 {
                    keep[r.members[0]] = true;
                }
            }
        }
        let generators = self.generators.iter().zip(keep).filter(|(_, k)| *k).map(|(g, _)| g.clone()).collect();
        MaxAffineFn { side: self.side, generators }
    }

    /// Vertices of the linearity regions of `f` on its own side. The sup of
    /// any concave-minus-`f` problem over the boundary is attained among them.
    pub fn candidate_points(&self) -> Vec<BaryPoint> {
        linearity_vertices(self.dim().n(), &self.forms())
            .into_iter()
            .map(|w| BaryPoint::normalized(self.side, w))
            .collect()
    }

    /// `max_{g, a} sup_x (g·generator_a − f)(x)`, which is `≤ 0` exactly when
    /// `f` is G-invariant.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let group = group_elements(self.dim())?;
        let cands = self.candidate_points();
        let fvals: Vec<f64> = cands.iter().map(|p| self.eval_weights(p.weights())).collect();
        let defect = group
            .par_iter()
            .map(|g| {
                let mut worst = f64::NEG_INFINITY;
                for x in &self.generators {
                    let a = g.act_point(&x.anchor);
                    for (p, fv) in cands.iter().zip(&fvals) {
                        worst = worst.max(bary_pairing(a.weights(), p.weights()) - x.offset - fv);
                    }
                }
                worst
            })
            .reduce(|| f64::NEG_INFINITY, f64::max);
        Ok(defect.max(0.0))
    }

    pub fn is_symmetric(&self, tol: f64) -> Result<bool> {
        Ok(self.symmetry_defect()? <= tol)
    }
}

/// A function on a finite subset of `A` or `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscreteFn")]
pub struct DiscreteFn {
    side: Side,
    support: Vec<BaryPoint>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDiscreteFn {
    side: Side,
    support: Vec<BaryPoint>,
    values: Vec<f64>,
}

impl TryFrom<RawDiscreteFn> for DiscreteFn {
    type Error = Error;
    fn try_from(raw: RawDiscreteFn) -> Result<Self> {
        DiscreteFn::new(raw.side, raw.support, raw.values)
    }
}

impl DiscreteFn {
    /// Exact duplicates with equal values are merged; conflicting duplicates are rejected.
    pub fn new(side: Side, support: Vec<BaryPoint>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), found: values.len() });
        }
        let n = support.first().map(|p| p.weights().len());
        let mut s: Vec<BaryPoint> = Vec::with_capacity(support.len());
        let mut v: Vec<f64> = Vec::with_capacity(values.len());
        for (p, x) in support.into_iter().zip(values) {
            if p.side() != side {
                return Err(Error::SideMismatch(format!("support point on {} for a function on {side}", p.side())));
            }
            if Some(p.weights().len()) != n {
                return Err(Error::DimensionMismatch { expected: n.unwrap_or(0), found: p.weights().len() });
            }
            if !x.is_finite() {
                return Err(Error::InvalidPoint("non-finite value".into()));
            }
            match s.iter().position(|q| q.dist_inf(&p) <= ORBIT_TOL) {
                Some(k) if (v[k] - x).abs() <= TIE_TOL => {}
                Some(_) => {
                    return Err(Error::InvalidPoint(format!(
                        "support point {:?} is listed twice with different values",
                        p.weights()
                    )))
                }
                None => {
                    s.push(p);
                    v.push(x);
                }
            }
        }
        Ok(DiscreteFn { side, support: s, values: v })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn support(&self) -> &[BaryPoint] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// `u^c(y) = max_k ⟨p_k, y⟩ − u(p_k)`: one generator per support point.
pub fn ctransform_discrete(u: &DiscreteFn) -> Result<MaxAffineFn> {
    if u.is_empty() {
        return Err(Error::Empty("c-transform of a function with empty support".into()));
    }
    let generators =
        u.support.iter().zip(&u.values).map(|(p, &v)| Generator { anchor: p.clone(), offset: v }).collect();
    MaxAffineFn::new(u.side.opposite(), generators)
}

/// The exact c-transform `f^c` as an envelope on the opposite side, with
/// one generator per candidate point of `f`.
pub fn ctransform_exact(f: &MaxAffineFn) -> Result<MaxAffineFn> {
    let generators: Vec<Generator> = f
        .candidate_points()
        .into_iter()
        .map(|p| {
            let offset = f.eval_weights(p.weights());
            Generator { anchor: p, offset }
        })
        .collect();
    MaxAffineFn::new(f.side.opposite(), generators)
}

/// `f^c(y) = sup_x ⟨y, x⟩ − f(x)` by one linear program per facet, with a maximizer.
pub fn ctransform_envelope_argmax(f: &MaxAffineFn, y: &BaryPoint) -> Result<(f64, BaryPoint)> {
    if y.side() != f.side.opposite() {
        return Err(Error::SideMismatch(format!("query must lie on {}", f.side.opposite())));
    }
    let n = f.dim().n();
    if y.weights().len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.weights().len() });
    }
    let nf = n as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for l in 0..n {
        // variables: x_k (k ≠ l), t⁺, t⁻; maximize t⁺ − t⁻
        let free: Vec<usize> = (0..n).filter(|&k| k != l).collect();
        let nv = free.len() + 2;
        let mut obj = vec![0.0; nv];
        obj[nv - 2] = 1.0;
        obj[nv - 1] = -1.0;
        let mut cons = Vec::with_capacity(f.generators.len() + 1);
        for g in &f.generators {
            // t ≤ ⟨y,x⟩ − form_a(x) = n Σ (anchor_a − y)_k x_k + offset_a
            let mut row = vec![0.0; nv];
            for (r, &k) in free.iter().enumerate() {
                row[r] = -nf * (g.anchor.weights()[k] - y.weights()[k]);
            }
            row[nv - 2] = 1.0;
            row[nv - 1] = -1.0;
            cons.push(Constraint::new(row, Relation::Le, g.offset));
        }
        let mut sum = vec![1.0; nv];
        sum[nv - 2] = 0.0;
        sum[nv - 1] = 0.0;
        cons.push(Constraint::new(sum, Relation::Eq, 1.0));
        let sol = lp::maximize(&obj, &cons).map_err(|e| Error::Lp(format!("facet {l}: {e}")))?;
        let mut x = vec![0.0; n];
        for (r, &k) in free.iter().enumerate() {
            x[k] = sol.x[r];
        }
        if best.as_ref().map_or(true, |(v, _)| sol.value > *v) {
            best = Some((sol.value, x));
        }
    }
    let (_, x) = best.expect("at least one facet");
    let p = BaryPoint::normalized(f.side, x);
    // re-evaluate at the normalized maximizer to strip LP round-off
    let value = bary_pairing(y.weights(), p.weights()) - f.eval_weights(p.weights());
    Ok((value, p))
}

/// `f^c(y)` via per-facet linear programs.
pub fn ctransform_envelope(f: &MaxAffineFn, y: &BaryPoint) -> Result<f64> {
    Ok(ctransform_envelope_argmax(f, y)?.0)
}

/// `f^{cc}` at grid points of `f`'s own side: the inner transform is the
/// exact candidate envelope, the outer one is evaluated by linear programs.
pub fn double_transform(f: &MaxAffineFn, grid: &[BaryPoint]) -> Result<DiscreteFn> {
    let fc = ctransform_exact(f)?;
    let values = grid.par_iter().map(|x| ctransform_envelope(&fc, x)).collect::<Result<Vec<_>>>()?;
    DiscreteFn::new(f.side, grid.to_vec(), values)
}

/// Anchors of the generators attaining the max at `x`. For `f = u^c`
/// built from a discrete function these are the c-subgradient points of `f`.
pub fn c_subgradient(f: &MaxAffineFn, x: &BaryPoint) -> Result<Vec<BaryPoint>> {
    f.check_point(x)?;
    let mut out: Vec<BaryPoint> = Vec::new();
    for a in f.active_generators(x.weights()) {
        let p = &f.generators[a].anchor;
        if !out.iter().any(|q| q.dist_inf(p) <= POINT_TOL) {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Maximizers of `x ↦ ⟨y, x⟩ − f(x)`, i.e. the c-gradient of `f^c` at `y`.
pub fn c_gradient_of_transform(f: &MaxAffineFn, y: &BaryPoint) -> Result<Vec<BaryPoint>> {
    if y.side() != f.side.opposite() {
        return Err(Error::SideMismatch(format!("query must lie on {}", f.side.opposite())));
    }
    let cands = f.candidate_points();
    let vals: Vec<f64> =
        cands.iter().map(|p| bary_pairing(y.weights(), p.weights()) - f.eval_weights(p.weights())).collect();
    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(cands.into_iter().zip(vals).filter(|(_, v)| *v >= best - TIE_TOL).map(|(p, _)| p).collect())
}

/// An affine piece of a chart restriction, valid on the image of one facet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPiece {
    /// Facet index `k` of the sub-simplex the piece lives on.
    pub facet: usize,
    /// Index of the generator the piece comes from.
    pub generator: usize,
    pub gradient: Vec<f64>,
    pub intercept: f64,
    /// The same piece as a form in barycentric weights.
    pub form: AffineForm,
}

/// `(f − m_j) ∘ q_{i,j}` on `T̃`, stored piecewise per sub-simplex.
#[derive(Clone, Debug)]
pub struct ChartConvexFn {
    chart: Chart,
    pieces: Vec<ChartPiece>,
}

impl ChartConvexFn {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn pieces(&self) -> &[ChartPiece] {
        &self.pieces
    }

    /// Exact value at chart coordinates `t ∈ T̃`.
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        let k = self.chart.piece_containing(t)?;
        Ok(self
            .pieces
            .iter()
            .filter(|p| p.facet == k)
            .map(|p| p.gradient.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() + p.intercept)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Largest midpoint-convexity violation `f((a+b)/2) − (f(a)+f(b))/2`
    /// over random pairs in the chart domain.
    pub fn midpoint_defect(&self, pairs: usize, seed: u64) -> Result<f64> {
        use rand::Rng;
        let dim = self.chart.dim();
        let mut rng = crate::rng::stream_rng(seed, 0);
        let verts = self.chart.domain_vertices();
        let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut u: Vec<f64> = (0..=dim.d()).map(|_| -rng.gen::<f64>().ln()).collect();
            let s: f64 = u.iter().sum();
            u.iter_mut().for_each(|x| *x /= s);
            let mut t = vec![0.0; dim.d()];
            for (w, v) in u.iter().zip(&verts) {
                t.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
            }
            t
        };
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..pairs {
            let a = sample(&mut rng);
            let b = sample(&mut rng);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let v = self.eval(&mid)? - 0.5 * (self.eval(&a)? + self.eval(&b)?);
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

/// Pushes every generator of `f` through `q_{i,j}` on every sub-simplex of `T̃`.
pub fn chart_restrict(f: &MaxAffineFn, i: usize, j: usize) -> Result<ChartConvexFn> {
    if f.side != Side::B {
        return Err(Error::SideMismatch("chart restrictions are taken on B".into()));
    }
    let dim = f.dim();
    let chart = Chart::q(dim, i, j)?;
    let n = dim.n();
    let nf = n as f64;
    let mut pieces = Vec::new();
    for k in (0..n).filter(|&k| k != i) {
        let (mat, off) = chart.affine_piece(k)?;
        for (a, g) in f.generators.iter().enumerate() {
            // value = n (β_j − α·β) − offset
            let coef: Vec<f64> =
                (0..n).map(|l| nf * ((if l == j { 1.0 } else { 0.0 }) - g.anchor.weights()[l])).collect();
            let gradient: Vec<f64> =
                (0..dim.d()).map(|r| (0..n).map(|l| coef[l] * mat[l][r]).sum()).collect();
            let intercept = (0..n).map(|l| coef[l] * off[l]).sum::<f64>() - g.offset;
            pieces.push(ChartPiece {
                facet: k,
                generator: a,
                gradient,
                intercept,
                form: AffineForm::new(coef, -g.offset),
            });
        }
    }
    Ok(ChartConvexFn { chart, pieces })
}

/// A max of arbitrary affine forms of barycentric weights on one side.
///
/// Used for perturbation directions that are not themselves envelopes of
/// boundary anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlFn {
    pub side: Side,
    pub forms: Vec<AffineForm>,
}

impl PlFn {
    pub fn new(side: Side, forms: Vec<AffineForm>) -> Result<Self> {
        let n = forms.first().ok_or_else(|| Error::Empty("a PL function needs a form".into()))?.w.len();
        Dim::from_coords(n)?;
        if forms.iter().any(|f| f.w.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: forms.iter().map(|f| f.w.len()).max().unwrap_or(0) });
        }
        Ok(PlFn { side, forms })
    }

    pub fn from_envelope(f: &MaxAffineFn) -> Self {
        PlFn { side: f.side, forms: f.forms() }
    }

    pub fn constant(side: Side, dim: Dim, c: f64) -> Self {
        PlFn { side, forms: vec![AffineForm::constant(dim.n(), c)] }
    }

    pub fn eval_weights(&self, x: &[f64]) -> f64 {
        self.forms.iter().map(|f| f.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dim(&self) -> Dim {
        Dim::from_coords(self.forms[0].w.len()).expect("validated on construction")
    }

    /// G-invariance up to `tol`, checked at the linearity vertices of the function.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let group = group_elements(self.dim())?;
        let pts = linearity_vertices(self.dim().n(), &self.forms);
        let mut worst: f64 = 0.0;
        for p in &pts {
            let v = self.eval_weights(p);
            for g in &group {
                worst = worst.max((self.eval_weights(&g.apply(p)) - v).abs());
            }
        }
        Ok(worst)
    }
}

/// One-sided derivatives of `t ↦ ∫_A (ψ + t v)^c dμ` at `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DirectionalDerivative {
    pub step: f64,
    /// `(I(0) − I(−h)) / h`.
    pub left_quotient: f64,
    /// `(I(h) − I(0)) / h`.
    pub right_quotient: f64,
    /// Limit of the left quotient: `−∫_A max v(∂^cψ^c(m)) dμ`.
    pub left: f64,
    /// Limit of the right quotient: `−∫_A min v(∂^cψ^c(m)) dμ`.
    pub right: f64,
    /// `−∫_A v(∂^cψ^c(m)) dμ` with a single maximizer chosen per cell.
    pub expected: f64,
    /// Largest gap between a quotient and its limit.
    pub error: f64,
    /// Whether `ψ` and `v` are both G-invariant within 1e-9.
    pub symmetric: bool,
}

impl DirectionalDerivative {
    /// `right − left`; zero when the energy is differentiable in the direction `v`.
    pub fn gap(&self) -> f64 {
        self.right - self.left
    }
}

/// Directional derivative of the energy term `∫_A ψ^c dμ` along `v`.
///
/// `(ψ + t v)^c` is exact for every `t`: the maximizers of
/// `⟨m, ·⟩ − ψ − t v` lie among the vertices of the common refinement of the
/// linearity regions of `ψ` and `v`. Non-symmetric input is accepted and
/// reported through [`DirectionalDerivative::symmetric`].
pub fn directional_energy_derivative(
    psi: &MaxAffineFn,
    v: &PlFn,
    h: f64,
    backend: crate::ma_operator::Backend,
) -> Result<DirectionalDerivative> {
    use crate::ma_operator::{cells_from_weights, Backend};
    if psi.side != Side::B || v.side != Side::B {
        return Err(Error::SideMismatch("the energy derivative is taken for functions on B".into()));
    }
    let n = psi.dim().n();
    if v.dim().n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v.dim().n() });
    }
    if !(h > 0.0) {
        return Err(Error::Config("difference step must be positive".into()));
    }
    let mut sums = Vec::with_capacity(psi.generators.len() * v.forms.len());
    for a in psi.forms() {
        for b in &v.forms {
            sums.push(a.add(b));
        }
    }
    let cands: Vec<BaryPoint> =
        linearity_vertices(n, &sums).into_iter().map(|w| BaryPoint::normalized(Side::B, w)).collect();
    let base: Vec<f64> = cands.iter().map(|p| psi.eval_weights(p.weights())).collect();
    let dv: Vec<f64> = cands.iter().map(|p| v.eval_weights(p.weights())).collect();
    let integral = |t: f64| -> Result<f64> {
        let g: Vec<f64> = base.iter().zip(&dv).map(|(a, b)| a + t * b).collect();
        Ok(cells_from_weights(&cands, &g, backend)?.energy)
    };
    let i0 = integral(0.0)?;
    let right_quotient = (integral(h)? - i0) / h;
    let left_quotient = (i0 - integral(-h)?) / h;
    let cells = cells_from_weights(&cands, &base, Backend::Exact)?;
    let (mut left, mut right, mut expected) = (0.0, 0.0, 0.0);
    for p in &cells.pieces {
        let vals = p.atoms.iter().map(|&k| dv[k]);
        let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.fold(f64::INFINITY, f64::min);
        left -= p.mass * hi;
        right -= p.mass * lo;
        expected -= p.mass * dv[p.atoms[0]];
    }
    let error = (right_quotient - right).abs().max((left_quotient - left).abs());
    let symmetric = psi.symmetry_defect()? <= 1e-9 && v.symmetry_defect()? <= 1e-9;
    Ok(DirectionalDerivative {
        step: h,
        left_quotient,
        right_quotient,
        left,
        right,
        expected,
        error,
        symmetric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_face, FaceId};
    use approx::assert_abs_diff_eq;

    fn d(k: usize) -> Dim {
        Dim::new(k).unwrap()
    }

    fn one(dim: Dim) -> MaxAffineFn {
        MaxAffineFn::constant(Side::B, dim, 1.0)
    }

    fn b_points(dim: Dim, per_face: usize, seed: u64) -> Vec<BaryPoint> {
        (0..dim.n()).flat_map(|l| sample_face(dim, FaceId::facet(Side::B, l), per_face, seed).unwrap()).collect()
    }

    fn a_points(dim: Dim, per_face: usize, seed: u64) -> Vec<BaryPoint> {
        (0..dim.n()).flat_map(|l| sample_face(dim, FaceId::facet(Side::A, l), per_face, seed).unwrap()).collect()
    }

    #[test]
    fn zero_on_vertices_transforms_to_one() {
        for k in 1..=3 {
            let dim = d(k);
            let support: Vec<BaryPoint> = (0..dim.n()).map(|i| BaryPoint::vertex(Side::A, dim, i)).collect();
            let u = DiscreteFn::new(Side::A, support, vec![0.0; dim.n()]).unwrap();
            let psi = ctransform_discrete(&u).unwrap();
            assert_eq!(psi.side(), Side::B);
            for p in b_points(dim, 20, 3) {
                assert_abs_diff_eq!(psi.eval(&p).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_vertex_transform() {
        let dim = d(2);
        let u = DiscreteFn::new(Side::A, vec![BaryPoint::vertex(Side::A, dim, 0)], vec![0.0]).unwrap();
        let psi = ctransform_discrete(&u).unwrap();
        assert_eq!(psi.eval(&BaryPoint::vertex(Side::B, dim, 0)).unwrap(), -3.0);
        assert!(ctransform_discrete(&DiscreteFn::new(Side::A, vec![], vec![]).unwrap()).is_err());
    }

    #[test]
    fn transform_of_one_is_zero_on_tau() {
        let dim = d(2);
        let f = one(dim);
        let m0 = BaryPoint::vertex(Side::A, dim, 0);
        let (v, x) = ctransform_envelope_argmax(&f, &m0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        assert!(x.weights()[0].abs() < 1e-12, "maximizer {:?} should lie in τ_0", x.weights());
        let fc = ctransform_exact(&f).unwrap();
        for y in a_points(dim, 20, 1) {
            let expect = -(dim.n() as f64) * y.weights().iter().cloned().fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(fc.eval(&y).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn lp_and_candidate_transforms_agree() {
        let dim = d(2);
        let mut rng = crate::rng::stream_rng(4, 0);
        use rand::Rng;
        for trial in 0..10 {
            let pairs: Vec<(Vec<f64>, f64)> = (0..5)
                .map(|_| {
                    let l = rng.gen_range(0..4);
                    let p = sample_face(dim, FaceId::facet(Side::A, l), 1, rng.gen()).unwrap().remove(0);
                    (p.weights().to_vec(), rng.gen_range(-1.0..1.0))
                })
                .collect();
            let f = MaxAffineFn::from_pairs(Side::B, &pairs).unwrap();
            let fc = ctransform_exact(&f).unwrap();
            for y in a_points(dim, 5, trial) {
                let lp = ctransform_envelope(&f, &y).unwrap();
                assert_abs_diff_eq!(lp, fc.eval(&y).unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn c_gradient_of_one_is_argmin_vertex() {
        let dim = d(2);
        let fc = ctransform_exact(&one(dim)).unwrap();
        let m = BaryPoint::new(Side::A, vec![0.5, 0.3, 0.2, 0.0]).unwrap();
        let sub = c_subgradient(&fc, &m).unwrap();
        assert_eq!(sub.len(), 1);
        assert_eq!(sub[0], BaryPoint::vertex(Side::B, dim, 3));
        let via = c_gradient_of_transform(&one(dim), &m).unwrap();
        assert_eq!(via, sub);
    }

    #[test]
    fn shift_rule() {
        let dim = d(2);
        let f = MaxAffineFn::from_pairs(Side::B, &[(vec![0.0, 0.2, 0.3, 0.5], 0.1), (vec![0.6, 0.0, 0.4, 0.0], -0.3)])
            .unwrap();
        for y in a_points(dim, 5, 9) {
            let a = ctransform_envelope(&f, &y).unwrap();
            let b = ctransform_envelope(&f.shifted(0.7), &y).unwrap();
            assert_abs_diff_eq!(a - 0.7, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let dim = d(2);
        assert!(one(dim).symmetry_defect().unwrap() < 1e-12);
        let f = MaxAffineFn::from_pairs(Side::B, &[(vec![1.0, 0.0, 0.0, 0.0], 0.0)]).unwrap();
        assert!(f.symmetry_defect().unwrap() > 0.1);
        assert!(f.symmetrized().unwrap().symmetry_defect().unwrap() < 1e-12);
        assert_eq!(f.symmetrized().unwrap().generators().len(), 4);
    }

    #[test]
    fn pruning_keeps_values() {
        let dim = d(2);
        let f = MaxAffineFn::from_pairs(
            Side::B,
            &[(vec![1.0, 0.0, 0.0, 0.0], 0.0), (vec![0.25, 0.25, 0.25, 0.25 + 0.0], 5.0)],
        );
        // the barycenter of Δ is not a point of A
        assert!(f.is_err());
        let f = MaxAffineFn::from_pairs(
            Side::B,
            &[(vec![1.0, 0.0, 0.0, 0.0], 0.0), (vec![0.0, 0.5, 0.5, 0.0], 50.0), (vec![0.0, 1.0, 0.0, 0.0], 0.0)],
        )
        .unwrap();
        let p = f.pruned();
        assert_eq!(p.generators().len(), 2);
        for y in b_points(dim, 10, 2) {
            assert_abs_diff_eq!(p.eval(&y).unwrap(), f.eval(&y).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn chart_restriction_of_one_is_cone() {
        // (1 − m_j)∘q_{i,j} = (d+2) max(0, max_k t_k) for the constant function 1
        for k in 1..=3 {
            let dim = d(k);
            let h = chart_restrict(&one(dim), 0, 1).unwrap();
            let chart = h.chart().clone();
            for p in b_points(dim, 10, 5).into_iter().filter(|p| chart.in_star(p)) {
                let t = chart.to_chart(&p).unwrap();
                let expect = dim.n() as f64 * t.iter().cloned().fold(0.0, f64::max);
                assert_abs_diff_eq!(h.eval(&t).unwrap(), expect, epsilon = 1e-12);
            }
            assert!(h.midpoint_defect(500, 1).unwrap() < 1e-9);
        }
    }

    #[test]
    fn discrete_fn_duplicates() {
        let dim = d(1);
        let p = BaryPoint::vertex(Side::A, dim, 0);
        let u = DiscreteFn::new(Side::A, vec![p.clone(), p.clone()], vec![1.0, 1.0]).unwrap();
        assert_eq!(u.len(), 1);
        assert!(DiscreteFn::new(Side::A, vec![p.clone(), p], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = MaxAffineFn::from_pairs(Side::B, &[(vec![0.0, 0.5, 0.5], 0.25)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: MaxAffineFn = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let bad = r#"{"side":"B","generators":[{"anchor":{"side":"B","weights":[0,0.5,0.5]},"offset":0}]}"#;
        assert!(serde_json::from_str::<MaxAffineFn>(bad).is_err());
    }
}
