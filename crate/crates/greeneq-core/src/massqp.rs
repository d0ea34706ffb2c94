//! The prescribed-node mass problem: minimize
//! `E(m) = m G m^t + F m^t` over the box `[0, R]^l`, where `G` is the
//! zero-diagonal kernel matrix of the nodes and `F_i = 2 l f(x_i)`.
//!
//! Because the diagonal of `G` is zero the objective is affine in each
//! single coordinate, so coordinate minimization is bang-bang: the endpoint
//! opposite the sign of the partial derivative is coordinate-optimal. The
//! quadratic form is indefinite (zero trace), so first-order points found by
//! descent are local minimizers at best; multi-start plus brute-force
//! cross-checks at small sizes are the honesty layer. Nodes where the field
//! is `+inf` are frozen at mass zero and excluded from the linear algebra.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;

/// Boundary-detection band for KKT classification.
pub const BOUNDARY_BAND: f64 = 1e-10;

/// Strict-interior margin for the linear-system route.
pub const INTERIOR_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct MassProblem {
    kernel: KernelMatrix,
    fvals: Vec<f64>,
    cap: f64,
}

impl MassProblem {
    /// Field values may be `+inf` (those nodes are frozen at mass 0);
    /// `NaN` and `-inf` are rejected.
    pub fn new(kernel: KernelMatrix, fvals: Vec<f64>, cap: f64) -> Result<Self> {
        if fvals.len() != kernel.size() {
            return Err(Error::InvalidInput(format!(
                "{} field values for {} nodes",
                fvals.len(),
                kernel.size()
            )));
        }
        if !cap.is_finite() || cap <= 0.0 {
            return Err(Error::InvalidInput("mass cap must be positive".into()));
        }
        if fvals.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidInput("field values must be finite or +inf".into()));
        }
        Ok(MassProblem { kernel, fvals, cap })
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn fvals(&self) -> &[f64] {
        &self.fvals
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.kernel.size()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.size() == 0
    }

    fn active(&self, i: usize) -> bool {
        self.fvals[i].is_finite()
    }

    /// `max_i |F_i|` over nodes with finite field.
    pub fn linear_norm(&self) -> f64 {
        let l = self.len() as f64;
        self.fvals
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| (2.0 * l * v).abs())
            .fold(0.0, f64::max)
    }

    /// Objective `sum_{i != j} m_i m_j G_ij + 2 l sum_i m_i f_i`,
    /// with `0 * inf = 0`.
    pub fn energy(&self, m: &[f64]) -> f64 {
        let l = self.len();
        let mut pair = 0.0;
        for i in 0..l {
            if m[i] == 0.0 {
                continue;
            }
            let row = self.kernel.row(i);
            for j in (i + 1)..l {
                if m[j] != 0.0 {
                    pair += m[i] * m[j] * row[j];
                }
            }
        }
        let mut lin = 0.0;
        for (&mi, &fi) in m.iter().zip(&self.fvals) {
            if mi != 0.0 {
                lin += mi * fi;
            }
        }
        2.0 * pair + 2.0 * l as f64 * lin
    }
}

/// Exact partial derivative `c_i = 2 sum_{j != i} m_j g(x_i, x_j) + 2 l f(x_i)`.
pub fn mass_partial(problem: &MassProblem, m: &[f64], i: usize) -> f64 {
    let row = problem.kernel.row(i);
    let mut acc = 0.0;
    for (j, &mj) in m.iter().enumerate() {
        if j != i && mj != 0.0 {
            acc += mj * row[j];
        }
    }
    2.0 * acc + 2.0 * problem.len() as f64 * problem.fvals[i]
}

/// Per-coordinate first-order residuals and their maximum.
///
/// At the lower bound only a negative partial counts, at the upper bound only
/// a positive one, in the interior the absolute value.
pub fn kkt_residual(problem: &MassProblem, m: &[f64]) -> (Vec<f64>, f64) {
    let mut res = vec![0.0; problem.len()];
    let mut worst: f64 = 0.0;
    for i in 0..problem.len() {
        if !problem.active(i) {
            continue; // frozen at zero: partial is +inf, lower bound active
        }
        let c = mass_partial(problem, m, i);
        let r = if m[i] <= BOUNDARY_BAND {
            (-c).max(0.0)
        } else if m[i] >= problem.cap - BOUNDARY_BAND {
            c.max(0.0)
        } else {
            c.abs()
        };
        res[i] = r;
        worst = worst.max(r);
    }
    (res, worst)
}

#[derive(Debug, Clone, Default)]
pub struct MassSolveOptions {
    /// Seeded random starts in addition to all-zero, all-cap and warm starts.
    pub random_starts: usize,
    /// Defaults to `10 * l`.
    pub max_sweeps: Option<usize>,
    /// Defaults to `1e-12 * (1 + max|F|)`.
    pub tol: Option<f64>,
    pub seed: u64,
    /// Extra start vectors (clamped into the box).
    pub warm_starts: Vec<Vec<f64>>,
}

impl MassSolveOptions {
    pub fn with_random_starts(n: usize, seed: u64) -> Self {
        MassSolveOptions { random_starts: n, seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MassSolution {
    pub masses: Vec<f64>,
    pub objective: f64,
    pub kkt_residuals: Vec<f64>,
    pub kkt_max: f64,
    pub at_lower: Vec<usize>,
    pub at_upper: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
}

fn coordinate_descent(
    problem: &MassProblem,
    start: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, usize, bool) {
    let l = problem.len();
    let mut m: Vec<f64> = start
        .iter()
        .enumerate()
        .map(|(i, &v)| if problem.active(i) { v.clamp(0.0, problem.cap) } else { 0.0 })
        .collect();
    let mut sweeps = 0;
    let mut converged = false;
    let mut prev_energy = problem.energy(&m);
    while sweeps < max_sweeps {
        let mut changed = false;
        for i in 0..l {
            if !problem.active(i) {
                continue;
            }
            let c = mass_partial(problem, &m, i);
            // affine coordinate objective: move to the endpoint opposite the
            // gradient sign; |c| <= tol keeps the current value
            if c > tol && m[i] != 0.0 {
                m[i] = 0.0;
                changed = true;
            } else if c < -tol && m[i] != problem.cap {
                m[i] = problem.cap;
                changed = true;
            }
        }
        sweeps += 1;
        let e = problem.energy(&m);
        debug_assert!(
            e <= prev_energy + 1e-9 * (1.0 + prev_energy.abs()),
            "sweep increased objective: {prev_energy} -> {e}"
        );
        prev_energy = e;
        if !changed {
            converged = true;
            break;
        }
    }
    (m, sweeps, converged)
}

/// Multi-start cyclic coordinate descent over the box.
///
/// Starts: all-zero, all-cap, caller-provided warm starts, then seeded random
/// draws. The best converged objective wins; ties keep the earliest start.
/// Deterministic for a fixed seed.
pub fn solve_masses(problem: &MassProblem, opts: &MassSolveOptions) -> Result<MassSolution> {
    let l = problem.len();
    if l == 0 {
        return Err(Error::InvalidInput("empty mass problem".into()));
    }
    let tol = opts.tol.unwrap_or_else(|| 1e-12 * (1.0 + problem.linear_norm()));
    let max_sweeps = opts.max_sweeps.unwrap_or(10 * l);

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(2 + opts.warm_starts.len() + opts.random_starts);
    starts.push(vec![0.0; l]);
    starts.push(vec![problem.cap; l]);
    starts.extend(opts.warm_starts.iter().cloned());
    for r in 0..opts.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64 + 1);
        starts.push((0..l).map(|_| rng.gen::<f64>() * problem.cap).collect());
    }

    let mut best: Option<(Vec<f64>, f64, usize, bool, usize)> = None;
    for (si, start) in starts.iter().enumerate() {
        let (m, sweeps, converged) = coordinate_descent(problem, start, tol, max_sweeps);
        let e = problem.energy(&m);
        let better = match &best {
            None => true,
            Some((_, be, ..)) => e < *be,
        };
        if better {
            best = Some((m, e, sweeps, converged, si));
        }
    }
    let (masses, objective, iterations, converged, start_index) = best.unwrap();
    let (kkt_residuals, kkt_max) = kkt_residual(problem, &masses);
    let mut at_lower = Vec::new();
    let mut at_upper = Vec::new();
    for (i, &m) in masses.iter().enumerate() {
        if m <= BOUNDARY_BAND {
            at_lower.push(i);
        } else if m >= problem.cap - BOUNDARY_BAND {
            at_upper.push(i);
        }
    }
    Ok(MassSolution {
        masses,
        objective,
        kkt_residuals,
        kkt_max,
        at_lower,
        at_upper,
        iterations,
        converged,
        start_index,
    })
}

/// Outcome of the stationarity linear system `G v = -l f`.
#[derive(Debug, Clone)]
pub enum InteriorSolve {
    /// All coordinates strictly inside `(0, R)`.
    Feasible { masses: Vec<f64>, objective: f64 },
    /// Stationary vector exists but leaves the open box; offending indices
    /// listed (frozen nodes always violate strict interiority).
    Infeasible { masses: Vec<f64>, violating: Vec<usize> },
}

/// Solve the interior stationarity system on the finite-field nodes.
///
/// Uses full-pivot Gaussian elimination; a pivot-ratio collapse below 1e-14
/// reports the matrix as singular.
pub fn interior_linear_solve(problem: &MassProblem) -> Result<InteriorSolve> {
    let l = problem.len();
    let active: Vec<usize> = (0..l).filter(|&i| problem.active(i)).collect();
    let n = active.len();
    if n == 0 {
        return Err(Error::InvalidInput("no nodes with finite field".into()));
    }

    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[r * n + c] = problem.kernel.entry(i, j);
        }
        rhs[r] = -(l as f64) * problem.fvals[i];
    }

    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut first_pivot = 0.0;
    for k in 0..n {
        // full pivoting: largest remaining |a_ij|
        let (mut pr, mut pc, mut pv) = (k, k, 0.0_f64);
        for r in k..n {
            for c in k..n {
                let v = a[r * n + c].abs();
                if v > pv {
                    (pr, pc, pv) = (r, c, v);
                }
            }
        }
        if k == 0 {
            first_pivot = pv;
        }
        if pv == 0.0 || pv < first_pivot * 1e-14 {
            return Err(Error::SingularMatrix {
                pivot_ratio: if first_pivot > 0.0 { pv / first_pivot } else { 0.0 },
            });
        }
        if pr != k {
            for c in 0..n {
                a.swap(k * n + c, pr * n + c);
            }
            rhs.swap(k, pr);
        }
        if pc != k {
            for r in 0..n {
                a.swap(r * n + k, r * n + pc);
            }
            col_perm.swap(k, pc);
        }
        for r in (k + 1)..n {
            let factor = a[r * n + k] / a[k * n + k];
            a[r * n + k] = 0.0;
            for c in (k + 1)..n {
                a[r * n + c] -= factor * a[k * n + c];
            }
            rhs[r] -= factor * rhs[k];
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for c in (k + 1)..n {
            acc -= a[k * n + c] * y[c];
        }
        y[k] = acc / a[k * n + k];
    }

    let mut masses = vec![0.0; l];
    for (k, &perm) in col_perm.iter().enumerate() {
        masses[active[perm]] = y[k];
    }

    let mut violating: Vec<usize> = (0..l)
        .filter(|&i| !problem.active(i))
        .collect();
    for &i in &active {
        if !(masses[i] > INTERIOR_MARGIN && masses[i] < problem.cap - INTERIOR_MARGIN) {
            violating.push(i);
        }
    }
    violating.sort_unstable();

    if violating.is_empty() {
        let objective = problem.energy(&masses);
        Ok(InteriorSolve::Feasible { masses, objective })
    } else {
        Ok(InteriorSolve::Infeasible { masses, violating })
    }
}

/// Exhaustive minimization over the uniform mass grid `{0, R/s, ..., R}^l`.
///
/// The oracle for acceptance tests: every grid point is visited, with partial
/// sums carried down the odometer. Guarded to `l <= 4`, `s <= 200`.
pub fn brute_force_masses(problem: &MassProblem, grid_steps: usize) -> Result<MassSolution> {
    let l = problem.len();
    if l > 4 || grid_steps > 200 {
        return Err(Error::ProblemTooLarge {
            what: format!("mass grid {}^{}", grid_steps + 1, l),
        });
    }
    if grid_steps == 0 {
        return Err(Error::InvalidInput("grid_steps must be >= 1".into()));
    }

    let lf = l as f64;
    let values: Vec<f64> = (0..=grid_steps)
        .map(|k| problem.cap * k as f64 / grid_steps as f64)
        .collect();

    let mut best_val = f64::INFINITY;
    let mut best_m: Vec<f64> = vec![0.0; l];
    let mut m = vec![0.0; l];
    let mut visited: u64 = 0;

    // depth-first over coordinates; pair_acc[d] and lin_acc[d] hold the
    // contributions of coordinates < d
    #[allow(clippy::too_many_arguments)]
    fn descend(
        problem: &MassProblem,
        values: &[f64],
        lf: f64,
        d: usize,
        pair_acc: f64,
        lin_acc: f64,
        m: &mut Vec<f64>,
        best_val: &mut f64,
        best_m: &mut Vec<f64>,
        visited: &mut u64,
    ) {
        let l = problem.len();
        if d == l {
            *visited += 1;
            let obj = 2.0 * pair_acc + 2.0 * lf * lin_acc;
            if obj < *best_val {
                *best_val = obj;
                best_m.clone_from(m);
            }
            return;
        }
        let frozen = !problem.fvals()[d].is_finite();
        let row = problem.kernel().row(d);
        for &v in values {
            if frozen && v != 0.0 {
                continue;
            }
            m[d] = v;
            let (dp, dl) = if v == 0.0 {
                (0.0, 0.0)
            } else {
                let mut cross = 0.0;
                for (j, &mj) in m[..d].iter().enumerate() {
                    if mj != 0.0 {
                        cross += mj * row[j];
                    }
                }
                (v * cross, v * problem.fvals()[d])
            };
            descend(problem, values, lf, d + 1, pair_acc + dp, lin_acc + dl, m, best_val, best_m, visited);
        }
        m[d] = 0.0;
    }

    descend(problem, &values, lf, 0, 0.0, 0.0, &mut m, &mut best_val, &mut best_m, &mut visited);

    let (kkt_residuals, kkt_max) = kkt_residual(problem, &best_m);
    let mut at_lower = Vec::new();
    let mut at_upper = Vec::new();
    for (i, &mi) in best_m.iter().enumerate() {
        if mi <= BOUNDARY_BAND {
            at_lower.push(i);
        } else if mi >= problem.cap - BOUNDARY_BAND {
            at_upper.push(i);
        }
    }
    Ok(MassSolution {
        masses: best_m,
        objective: best_val,
        kkt_residuals,
        kkt_max,
        at_lower,
        at_upper,
        iterations: visited as usize,
        converged: true,
        start_index: 0,
    })
}
