//! Checks against brute-force computations that share no code with the
//! library: grid suprema over B, quadrature over A and bisection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trop_ampere::cconvex::{directional_energy_derivative, MaxAffineFn};
use trop_ampere::fixtures::{dualvertmass_psi, non_diff_direction, non_diff_psi};
use trop_ampere::geometry::{BaryPoint, Dim, Side};
use trop_ampere::ma_operator::{cells_from_weights, energy, Backend};
use trop_ampere::measures::AtomicMeasure;
use trop_ampere::solver::{solve, SolveConfig};

fn pair(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len() as f64;
    1.0 - n * alpha.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

/// Lattice points of the boundary: weights in `(1/steps)ℤ` with a zero entry.
fn boundary_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, total: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, total, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, steps, n, &mut Vec::new(), &mut out);
    out.into_iter()
        .filter(|c| c.contains(&0))
        .map(|c| c.into_iter().map(|k| k as f64 / steps as f64).collect())
        .collect()
}

/// Quadrature nodes on A with weights summing to `|A|`, for `d ≤ 2`. In
/// `d = 1` a midpoint rule per edge; in `d = 2` one jittered point per
/// triangle of a regular subdivision of each facet.
fn a_nodes(dim: Dim, steps: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let n = dim.n();
    let face_mass = dim.face_mass(Side::A);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for l in 0..n {
        let free: Vec<usize> = (0..n).filter(|&k| k != l).collect();
        let embed = |local: &[f64]| {
            let mut w = vec![0.0; n];
            for (k, &x) in free.iter().zip(local) {
                w[*k] = x;
            }
            w
        };
        match dim.d() {
            1 => {
                for j in 0..steps {
                    let s = (j as f64 + 0.5) / steps as f64;
                    out.push((embed(&[s, 1.0 - s]), face_mass / steps as f64));
                }
            }
            2 => {
                let h = 1.0 / steps as f64;
                let w = face_mass / (steps * steps) as f64;
                for i in 0..steps {
                    for j in 0..steps - i {
                        // reflect a unit-square sample into the "up" triangle
                        let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
                        if u + v > 1.0 {
                            (u, v) = (1.0 - u, 1.0 - v);
                        }
                        let (x, y) = ((i as f64 + u) * h, (j as f64 + v) * h);
                        out.push((embed(&[x, y, 1.0 - x - y]), w));
                        if i + j + 1 < steps {
                            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
                            if u + v > 1.0 {
                                (u, v) = (1.0 - u, 1.0 - v);
                            }
                            let (x, y) = ((i as f64 + 1.0 - u) * h, (j as f64 + 1.0 - v) * h);
                            out.push((embed(&[x, y, 1.0 - x - y]), w));
                        }
                    }
                }
            }
            _ => unreachable!("quadrature only for d ≤ 2"),
        }
    }
    out
}

fn psi_value(psi: &MaxAffineFn, beta: &[f64]) -> f64 {
    psi.generators().iter().map(|g| pair(g.anchor.weights(), beta) - g.offset).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn non_differentiable_gap_matches_grid_sup() {
    let dim = Dim::new(1).unwrap();
    let psi = non_diff_psi();
    // every kink of ψ and of the bump lies on this grid, so the grid sup is exact
    let grid = boundary_grid(3, 720);
    let psi_vals: Vec<f64> = grid.iter().map(|b| psi_value(&psi, b)).collect();
    let bump: Vec<f64> = grid.iter().map(|b| (2.0 * b[0] - 1.0).max(0.0)).collect();
    let nodes = a_nodes(dim, 3000, 0);
    let integral = |t: f64| -> f64 {
        nodes
            .iter()
            .map(|(m, w)| {
                let sup = grid
                    .iter()
                    .zip(&psi_vals)
                    .zip(&bump)
                    .map(|((b, p), v)| pair(m, b) - p - t * v)
                    .fold(f64::NEG_INFINITY, f64::max);
                w * sup
            })
            .sum()
    };
    let h = 1e-6;
    let i0 = integral(0.0);
    let right = (integral(h) - i0) / h;
    let left = (i0 - integral(-h)) / h;
    let r = directional_energy_derivative(&psi, &non_diff_direction(), h, Backend::Exact).unwrap();
    assert!((r.right - right).abs() < 1e-3, "right {} vs oracle {right}", r.right);
    assert!((r.left - left).abs() < 1e-3, "left {} vs oracle {left}", r.left);
    assert!((r.gap() - (right - left)).abs() < 2e-3);
}

#[test]
fn dualvertmass_matches_grid_argmax() {
    let dim = Dim::new(2).unwrap();
    let psi = dualvertmass_psi();
    let grid = boundary_grid(4, 30);
    let psi_vals: Vec<f64> = grid.iter().map(|b| psi_value(&psi, b)).collect();
    let nodes = a_nodes(dim, 60, 7);
    let mut masses = [0.0; 4];
    let mut elsewhere = 0.0;
    for (m, w) in &nodes {
        let (k, _) = grid
            .iter()
            .zip(&psi_vals)
            .map(|(b, p)| pair(m, b) - p)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        let b = &grid[k];
        match (0..4).find(|&i| b[i] == 0.0 && b.iter().enumerate().all(|(j, x)| j == i || (x - 1.0 / 3.0).abs() < 1e-12)) {
            Some(i) => masses[i] += w,
            None => elsewhere += w,
        }
    }
    let lib = trop_ampere::ma_operator::trop_ma(&psi, Default::default()).unwrap();
    for (i, oracle) in masses.iter().enumerate() {
        let exact = lib.measure.weight_at(&BaryPoint::face_barycenter(Side::B, dim, i));
        assert!((exact - oracle).abs() < 0.25, "atom {i}: library {exact}, oracle {oracle}");
    }
    assert!(elsewhere < 0.25, "oracle mass off the barycenters: {elsewhere}");
}

fn vertex_midpoint_target() -> AtomicMeasure {
    let mut pairs = Vec::new();
    for i in 0..3 {
        pairs.push(((0..3).map(|k| if k == i { 1.0 } else { 0.0 }).collect(), 1.5));
        pairs.push(((0..3).map(|k| if k == i { 0.0 } else { 0.5 }).collect(), 1.5));
    }
    AtomicMeasure::from_pairs(Side::B, &pairs).unwrap()
}

#[test]
fn vertex_midpoint_solution_matches_bisection() {
    let dim = Dim::new(1).unwrap();
    let nu = vertex_midpoint_target();
    let atoms: Vec<Vec<f64>> = nu.atoms().iter().map(|a| a.point.weights().to_vec()).collect();
    let is_vertex: Vec<bool> = atoms.iter().map(|w| w.iter().any(|&x| x == 1.0)).collect();
    let nodes = a_nodes(dim, 200_000, 0);
    // mass of the vertex cells when vertices carry weight 0 and midpoints weight g
    let vertex_mass = |g: f64| -> f64 {
        nodes
            .iter()
            .filter(|(m, _)| {
                let (k, _) = atoms
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (k, pair(m, x) - if is_vertex[k] { 0.0 } else { g }))
                    .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
                is_vertex[k]
            })
            .map(|(_, w)| w)
            .sum()
    };
    let (mut lo, mut hi) = (-3.0, 3.0);
    assert!(vertex_mass(lo) < 4.5 && vertex_mass(hi) > 4.5);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if vertex_mass(mid) < 4.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let r = solve(&nu, &SolveConfig { tol: 1e-10, ..Default::default() }).unwrap();
    assert!(r.converged);
    let gv = r.atoms.iter().zip(&r.g).find(|(a, _)| a.weights().iter().any(|&x| x == 1.0)).unwrap().1;
    let gm = r.atoms.iter().zip(&r.g).find(|(a, _)| a.weights().iter().all(|&x| x < 1.0)).unwrap().1;
    assert!((gm - gv - oracle).abs() < 1e-4, "solver {} vs bisection {oracle}", gm - gv);
}

#[test]
fn energy_at_vertices_with_constant_one() {
    let dim = Dim::new(1).unwrap();
    let atoms: Vec<BaryPoint> = (0..3).map(|i| BaryPoint::vertex(Side::B, dim, i)).collect();
    let nodes = a_nodes(dim, 10_000, 0);
    let quad: f64 = nodes
        .iter()
        .map(|(m, w)| w * atoms.iter().map(|x| pair(m, x.weights()) - 1.0).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    let f = energy(&atoms, &[1.0; 3], &[3.0; 3], Backend::Exact).unwrap();
    assert!((f - (quad + 9.0)).abs() < 1e-9, "F = {f}, oracle {}", quad + 9.0);
}

#[test]
fn random_cells_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, steps, mass_tol) in [(1usize, 20_000usize, 1e-3), (2, 150, 0.05)] {
        let dim = Dim::new(d).unwrap();
        let n = dim.n();
        let nodes = a_nodes(dim, steps, 3);
        for _ in 0..3 {
            let atoms: Vec<BaryPoint> = (0..6)
                .map(|_| {
                    let zero = rng.gen_range(0..n);
                    let mut w: Vec<f64> = (0..n).map(|k| if k == zero { 0.0 } else { rng.gen::<f64>() }).collect();
                    let s: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= s);
                    BaryPoint::new(Side::B, w).unwrap()
                })
                .collect();
            let g: Vec<f64> = (0..atoms.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let cells = cells_from_weights(&atoms, &g, Backend::Exact).unwrap();
            let mut masses = vec![0.0; atoms.len()];
            let mut integral = 0.0;
            for (m, w) in &nodes {
                let (k, v) = atoms
                    .iter()
                    .zip(&g)
                    .map(|(x, gk)| pair(m, x.weights()) - gk)
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
                masses[k] += w;
                integral += w * v;
            }
            assert!((cells.energy - integral).abs() < 1e-3 * dim.mass_a(), "d={d}: {} vs {integral}", cells.energy);
            for (k, (a, b)) in cells.masses.iter().zip(&masses).enumerate() {
                assert!((a - b).abs() < mass_tol, "d={d} atom {k}: {a} vs {b}");
            }
        }
    }
}
