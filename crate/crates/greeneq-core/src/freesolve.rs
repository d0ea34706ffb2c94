//! The free discrete problem: minimize the energy over both particle
//! positions (restricted to a finite candidate grid on `K`) and masses in
//! `[0, R]`, by alternating a mass solve with per-particle best-response
//! position moves.
//!
//! Positions live on a grid so that the position step is derivative-free,
//! robust against the kernel singularity, and admits an exact brute-force
//! oracle on the same grid; grid refinement controls the bias. Particles
//! always occupy pairwise distinct grid points: a zero-mass particle can be
//! relocated to any free point without changing the energy, so nothing is
//! lost by keeping all positions distinct, and the kernel-matrix assembly
//! stays valid.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ExternalField;
use crate::kernel::{assemble_kernel_matrix, green_eval, GreenDomain, KernelMatrix};
use crate::massqp::{solve_masses, MassProblem, MassSolveOptions};
use crate::measure::WeightedConfiguration;

/// Candidate-grid formulation of the free problem.
#[derive(Debug, Clone)]
pub struct FreeProblem {
    pub domain: GreenDomain,
    pub k_grid: Vec<Complex64>,
    /// `f` at each grid point; `+inf` allowed.
    pub field_values: Vec<f64>,
    pub n: usize,
    pub cap: f64,
}

impl FreeProblem {
    pub fn new(
        domain: GreenDomain,
        k_grid: Vec<Complex64>,
        field: &ExternalField,
        n: usize,
        cap: f64,
    ) -> Result<Self> {
        let field_values =
            k_grid.iter().map(|&z| field.eval(z)).collect::<Result<Vec<f64>>>()?;
        Self::from_grid_values(domain, k_grid, field_values, n, cap)
    }

    pub fn from_grid_values(
        domain: GreenDomain,
        k_grid: Vec<Complex64>,
        field_values: Vec<f64>,
        n: usize,
        cap: f64,
    ) -> Result<Self> {
        if field_values.len() != k_grid.len() {
            return Err(Error::InvalidInput("field values must match grid length".into()));
        }
        if !cap.is_finite() || cap <= 0.0 {
            return Err(Error::InvalidInput("mass cap must be positive".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("particle count must be >= 1".into()));
        }
        for &z in &k_grid {
            if !domain.contains(z) {
                return Err(Error::outside_domain(z));
            }
        }
        Ok(FreeProblem { domain, k_grid, field_values, n, cap })
    }
}

/// Warm-start configuration: grid indices plus masses.
pub type SeedConfig = (Vec<usize>, Vec<f64>);

#[derive(Debug, Clone)]
pub struct FreeSolveOptions {
    pub restarts: usize,
    pub max_rounds: usize,
    /// Convergence threshold on the objective decrease per round;
    /// defaults to `1e-10 * (1 + |objective|)`.
    pub tol: Option<f64>,
    pub seed: u64,
    /// Extra warm starts tried before the random restarts.
    pub seed_configs: Vec<SeedConfig>,
    /// Random starts inside each mass solve.
    pub mass_random_starts: usize,
}

impl Default for FreeSolveOptions {
    fn default() -> Self {
        FreeSolveOptions {
            restarts: 8,
            max_rounds: 60,
            tol: None,
            seed: 0,
            seed_configs: Vec::new(),
            mass_random_starts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FreeSolution {
    pub configuration: WeightedConfiguration,
    pub position_indices: Vec<usize>,
    pub objective: f64,
    /// Objective after each round of the winning restart.
    pub trace: Vec<f64>,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Map points onto grid indices by exact proximity (1e-12).
pub fn snap_to_grid(grid: &[Complex64], points: &[Complex64]) -> Result<Vec<usize>> {
    points
        .iter()
        .map(|&p| {
            grid.iter()
                .position(|&g| (g - p).norm() <= 1e-12)
                .ok_or_else(|| Error::InvalidInput(format!("point ({}, {}) not on grid", p.re, p.im)))
        })
        .collect()
}

type AlternateOutcome = (Vec<usize>, Vec<f64>, f64, Vec<f64>, bool);

struct Engine {
    kernel: KernelMatrix,
    fvals: Vec<f64>,
    cap: f64,
}

impl Engine {
    fn build(problem: &FreeProblem) -> Result<Self> {
        let kernel = assemble_kernel_matrix(problem.domain, &problem.k_grid)?;
        Ok(Engine { kernel, fvals: problem.field_values.clone(), cap: problem.cap })
    }

    fn grid_len(&self) -> usize {
        self.kernel.size()
    }

    /// `E(z, m)` with multiplier `n = positions.len()`, honoring `0*inf = 0`.
    fn energy(&self, positions: &[usize], masses: &[f64]) -> f64 {
        let n = positions.len();
        let mut pair = 0.0;
        for i in 0..n {
            if masses[i] == 0.0 {
                continue;
            }
            let row = self.kernel.row(positions[i]);
            for j in (i + 1)..n {
                if masses[j] != 0.0 {
                    pair += masses[i] * masses[j] * row[positions[j]];
                }
            }
        }
        let mut lin = 0.0;
        for i in 0..n {
            if masses[i] != 0.0 {
                lin += masses[i] * self.fvals[positions[i]];
            }
        }
        2.0 * pair + 2.0 * n as f64 * lin
    }

    /// Partial energy of particle `i` when placed at grid point `p`.
    fn particle_cost(&self, positions: &[usize], masses: &[f64], i: usize, p: usize) -> f64 {
        let mi = masses[i];
        if mi == 0.0 {
            return 0.0;
        }
        let row = self.kernel.row(p);
        let mut acc = 0.0;
        for (j, (&pj, &mj)) in positions.iter().zip(masses).enumerate() {
            if j != i && mj != 0.0 {
                acc += mj * row[pj];
            }
        }
        mi * (acc + positions.len() as f64 * self.fvals[p])
    }

    fn alternate(
        &self,
        start_positions: &[usize],
        start_masses: &[f64],
        opts: &FreeSolveOptions,
        mass_seed: u64,
    ) -> AlternateOutcome {
        let n = start_positions.len();
        let mut positions = start_positions.to_vec();
        let mut masses = start_masses.to_vec();
        let mut occupied = vec![false; self.grid_len()];
        for &p in &positions {
            occupied[p] = true;
        }
        let mut energy = self.energy(&positions, &masses);
        let mut trace = Vec::new();
        let mut converged = false;

        for round in 0..opts.max_rounds {
            let before = energy;

            // (a) fixed positions: box QP over the masses, warm-started so
            // the step can never increase the objective
            let sub = self.kernel.submatrix(&positions);
            let fvals: Vec<f64> = positions.iter().map(|&p| self.fvals[p]).collect();
            let problem = MassProblem::new(sub, fvals, self.cap).expect("positions are distinct");
            let mass_opts = MassSolveOptions {
                random_starts: opts.mass_random_starts,
                seed: mass_seed.wrapping_add(round as u64),
                warm_starts: vec![masses.clone()],
                ..Default::default()
            };
            let sol = solve_masses(&problem, &mass_opts).expect("non-empty problem");
            masses = sol.masses;
            let after_masses = self.energy(&positions, &masses);
            debug_assert!(after_masses <= before + 1e-9 * (1.0 + before.abs()));

            // (b) fixed masses: best-response move per particle, in index
            // order; only strictly improving moves are taken
            for i in 0..n {
                if masses[i] == 0.0 {
                    continue;
                }
                let current = self.particle_cost(&positions, &masses, i, positions[i]);
                let mut best_cost = current;
                let mut best_p = positions[i];
                for (p, &occ) in occupied.iter().enumerate() {
                    if occ {
                        continue;
                    }
                    let cost = self.particle_cost(&positions, &masses, i, p);
                    if cost < best_cost {
                        best_cost = cost;
                        best_p = p;
                    }
                }
                if best_p != positions[i] {
                    occupied[positions[i]] = false;
                    occupied[best_p] = true;
                    positions[i] = best_p;
                }
            }

            energy = self.energy(&positions, &masses);
            debug_assert!(energy <= after_masses + 1e-9 * (1.0 + after_masses.abs()));
            trace.push(energy);

            let tol = opts.tol.unwrap_or(1e-10 * (1.0 + energy.abs()));
            if before - energy < tol {
                converged = true;
                break;
            }
        }
        (positions, masses, energy, trace, converged)
    }
}

fn spread_indices(grid_len: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    let mut idx: Vec<usize> = (0..n)
        .map(|k| k * (grid_len - 1) / (n - 1))
        .collect();
    // guard against collisions on coarse grids
    idx.dedup();
    let mut used: Vec<bool> = vec![false; grid_len];
    for &i in &idx {
        used[i] = true;
    }
    let mut next = 0;
    while idx.len() < n {
        while used[next] {
            next += 1;
        }
        used[next] = true;
        idx.push(next);
    }
    idx
}

fn random_distinct_indices(rng: &mut ChaCha8Rng, grid_len: usize, n: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, grid_len, n).into_vec()
}

/// Alternating mass/position minimization with deterministic multi-restart.
pub fn solve_free(problem: &FreeProblem, opts: &FreeSolveOptions) -> Result<FreeSolution> {
    if problem.k_grid.len() < problem.n {
        return Err(Error::GridTooSmall { got: problem.k_grid.len(), need: problem.n });
    }
    let engine = Engine::build(problem)?;
    solve_with_engine(&engine, problem.n, opts, &problem.k_grid)
}

fn solve_with_engine(
    engine: &Engine,
    n: usize,
    opts: &FreeSolveOptions,
    grid: &[Complex64],
) -> Result<FreeSolution> {
    let mut starts: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    starts.push((spread_indices(engine.grid_len(), n), vec![0.0; n]));
    for (pos, m) in &opts.seed_configs {
        if pos.len() != n || m.len() != n {
            return Err(Error::InvalidInput("seed configuration has wrong length".into()));
        }
        let mut sorted = pos.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.iter().any(|&p| p >= engine.grid_len()) {
            return Err(Error::InvalidInput("seed positions must be distinct grid indices".into()));
        }
        starts.push((pos.clone(), m.clone()));
    }
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64 + 1);
        starts.push((random_distinct_indices(&mut rng, engine.grid_len(), n), vec![0.0; n]));
    }

    let mut best: Option<AlternateOutcome> = None;
    for (si, (pos, m)) in starts.iter().enumerate() {
        let mass_seed = opts.seed.wrapping_add((si as u64) << 24);
        let out = engine.alternate(pos, m, opts, mass_seed);
        let better = best.as_ref().is_none_or(|b| out.2 < b.2);
        if better {
            best = Some(out);
        }
    }
    let (positions, masses, objective, trace, converged) = best.unwrap();
    let points: Vec<Complex64> = positions.iter().map(|&p| grid[p]).collect();
    let configuration = WeightedConfiguration::new(points, masses, engine.cap, n)?;
    Ok(FreeSolution {
        configuration,
        position_indices: positions,
        objective,
        trace,
        restarts_used: opts.restarts,
        converged,
    })
}

/// Exhaustive oracle over all position combinations and a uniform mass grid.
///
/// Independent of the solver: energies are accumulated with fresh kernel
/// evaluations, not the precomputed grid matrix. Position tuples are
/// enumerated as sorted index combinations; the energy is symmetric under
/// particle exchange and a zero-mass particle can sit at any free grid point,
/// so distinct sorted tuples reach the optimum.
pub fn brute_force_free(problem: &FreeProblem, mass_steps: usize) -> Result<FreeSolution> {
    if problem.k_grid.len() < problem.n {
        return Err(Error::GridTooSmall { got: problem.k_grid.len(), need: problem.n });
    }
    if problem.n > 3 || problem.k_grid.len() > 15 || mass_steps > 50 {
        return Err(Error::ProblemTooLarge {
            what: format!(
                "free search: n={}, grid={}, mass grid {}",
                problem.n,
                problem.k_grid.len(),
                mass_steps + 1
            ),
        });
    }
    if mass_steps == 0 {
        return Err(Error::InvalidInput("mass_steps must be >= 1".into()));
    }

    let n = problem.n;
    let g = problem.k_grid.len();
    let nf = n as f64;
    let mass_values: Vec<f64> =
        (0..=mass_steps).map(|k| problem.cap * k as f64 / mass_steps as f64).collect();

    let mut combo: Vec<usize> = (0..n).collect();
    let mut best_obj = f64::INFINITY;
    let mut best_combo = combo.clone();
    let mut best_masses = vec![0.0; n];

    loop {
        // pairwise kernel values for this tuple, evaluated directly
        let mut pair_g = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = green_eval(problem.domain, problem.k_grid[combo[i]], problem.k_grid[combo[j]])?;
                pair_g[i * n + j] = v;
            }
        }
        let fv: Vec<f64> = combo.iter().map(|&p| problem.field_values[p]).collect();

        let mut masses = vec![0usize; n];
        'mass: loop {
            let mut pair = 0.0;
            let mut lin = 0.0;
            for i in 0..n {
                let mi = mass_values[masses[i]];
                if mi == 0.0 {
                    continue;
                }
                lin += mi * fv[i];
                for j in (i + 1)..n {
                    let mj = mass_values[masses[j]];
                    if mj != 0.0 {
                        pair += mi * mj * pair_g[i * n + j];
                    }
                }
            }
            let obj = 2.0 * pair + 2.0 * nf * lin;
            if obj < best_obj {
                best_obj = obj;
                best_combo.clone_from(&combo);
                for (slot, &mi) in best_masses.iter_mut().zip(&masses) {
                    *slot = mass_values[mi];
                }
            }
            // odometer over the mass grid
            let mut d = 0;
            loop {
                if d == n {
                    break 'mass;
                }
                if masses[d] < mass_steps {
                    masses[d] += 1;
                    break;
                }
                masses[d] = 0;
                d += 1;
            }
        }

        // next sorted combination
        let mut i = n;
        loop {
            if i == 0 {
                let points: Vec<Complex64> =
                    best_combo.iter().map(|&p| problem.k_grid[p]).collect();
                let configuration =
                    WeightedConfiguration::new(points, best_masses.clone(), problem.cap, n)?;
                return Ok(FreeSolution {
                    configuration,
                    position_indices: best_combo,
                    objective: best_obj,
                    trace: Vec::new(),
                    restarts_used: 0,
                    converged: true,
                });
            }
            i -= 1;
            if combo[i] != i + g - n {
                combo[i] += 1;
                for j in (i + 1)..n {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub e_n: f64,
    pub e_n_over_n2: f64,
    pub restarts: usize,
    pub converged: bool,
}

/// Run the solver along an increasing `n` list on one shared grid, chaining
/// each solution into the next run as a warm start extended by a zero-mass
/// particle. For `f <= 0` this makes the objective non-increasing in `n` by
/// construction.
pub fn energy_scaling_trace(
    domain: GreenDomain,
    k_grid: &[Complex64],
    field_values: &[f64],
    n_list: &[usize],
    cap: f64,
    opts: &FreeSolveOptions,
    per_n_seeds: Option<&[Vec<SeedConfig>]>,
) -> Result<(Vec<ScalingRow>, Vec<FreeSolution>)> {
    if let Some(seeds) = per_n_seeds {
        if seeds.len() != n_list.len() {
            return Err(Error::InvalidInput("per-n seeds must align with the n list".into()));
        }
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if k_grid.len() < 4 * n_max {
        return Err(Error::GridTooSmall { got: k_grid.len(), need: 4 * n_max });
    }
    let problem0 = FreeProblem::from_grid_values(
        domain,
        k_grid.to_vec(),
        field_values.to_vec(),
        1.max(n_list.first().copied().unwrap_or(1)),
        cap,
    )?;
    let engine = Engine::build(&problem0)?;

    let mut rows = Vec::with_capacity(n_list.len());
    let mut solutions: Vec<FreeSolution> = Vec::with_capacity(n_list.len());
    let mut prev: Option<(Vec<usize>, Vec<f64>)> = None;

    for (k, &n) in n_list.iter().enumerate() {
        let mut opts_n = opts.clone();
        opts_n.seed = opts.seed.wrapping_add((k as u64) << 40);
        if let Some(seeds) = per_n_seeds {
            opts_n.seed_configs.extend(seeds[k].iter().cloned());
        }
        if let Some((ppos, pmass)) = &prev {
            if ppos.len() <= n {
                let mut pos = ppos.clone();
                let mut mass = pmass.clone();
                let mut used = vec![false; k_grid.len()];
                for &p in &pos {
                    used[p] = true;
                }
                let mut next = 0;
                while pos.len() < n {
                    while used[next] {
                        next += 1;
                    }
                    used[next] = true;
                    pos.push(next);
                    mass.push(0.0);
                }
                opts_n.seed_configs.push((pos, mass));
            }
        }
        let sol = solve_with_engine(&engine, n, &opts_n, k_grid)?;
        rows.push(ScalingRow {
            n,
            e_n: sol.objective,
            e_n_over_n2: sol.objective / (n as f64 * n as f64),
            restarts: opts_n.restarts,
            converged: sol.converged,
        });
        prev = Some((sol.position_indices.clone(), sol.configuration.masses().to_vec()));
        solutions.push(sol);
    }
    Ok((rows, solutions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CompactSet;
    use crate::measure::{discretize_upper_constrained, build_interval_partition, Density};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn hp() -> GreenDomain {
        GreenDomain::RightHalfPlane
    }

    fn uniform_grid(n: usize) -> Vec<Complex64> {
        (0..n).map(|k| c(1.0 + k as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn two_particles_go_to_the_endpoints() {
        let grid = uniform_grid(41);
        let p = FreeProblem::from_grid_values(hp(), grid.clone(), vec![-1.0; 41], 2, 1.0).unwrap();
        let sol = solve_free(&p, &FreeSolveOptions { seed: 11, ..Default::default() }).unwrap();
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.objective, 2.0 * 3.0_f64.ln() - 8.0, epsilon = 1e-9);
        let mut xs: Vec<f64> = sol.configuration.points().iter().map(|z| z.re).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(xs[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[1], 2.0, epsilon = 1e-12);
        assert_eq!(sol.configuration.masses(), &[1.0, 1.0]);
    }

    #[test]
    fn nonnegative_field_gives_zero_energy() {
        let grid = uniform_grid(21);
        let p = FreeProblem::from_grid_values(hp(), grid, vec![1.0; 21], 3, 1.0).unwrap();
        let sol = solve_free(&p, &FreeSolveOptions { seed: 5, ..Default::default() }).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.configuration.positive_atom_count() <= 1);
    }

    #[test]
    fn matches_brute_force_on_tiny_grid() {
        let grid = vec![c(1.0), c(1.5), c(2.0)];
        let p = FreeProblem::from_grid_values(hp(), grid, vec![-1.0; 3], 3, 1.0).unwrap();
        let brute = brute_force_free(&p, 50).unwrap();
        let sol = solve_free(&p, &FreeSolveOptions { seed: 3, restarts: 12, ..Default::default() }).unwrap();
        assert_abs_diff_eq!(sol.objective, brute.objective, epsilon = 1e-9);
    }

    #[test]
    fn grid_too_small_is_reported() {
        let p = FreeProblem::from_grid_values(hp(), vec![c(1.5)], vec![-1.0], 2, 1.0).unwrap();
        assert!(matches!(solve_free(&p, &Default::default()), Err(Error::GridTooSmall { .. })));
        assert!(matches!(brute_force_free(&p, 10), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn brute_force_guards() {
        let grid = uniform_grid(16);
        let p = FreeProblem::from_grid_values(hp(), grid, vec![-1.0; 16], 2, 1.0).unwrap();
        assert!(matches!(brute_force_free(&p, 10), Err(Error::ProblemTooLarge { .. })));
    }

    #[test]
    fn positive_masses_occupy_distinct_points() {
        let grid = uniform_grid(17);
        let p = FreeProblem::from_grid_values(hp(), grid, vec![-2.0; 17], 4, 1.5).unwrap();
        let sol = solve_free(&p, &FreeSolveOptions { seed: 9, ..Default::default() }).unwrap();
        let pts: Vec<_> = sol
            .configuration
            .points()
            .iter()
            .zip(sol.configuration.masses())
            .filter(|(_, &m)| m > 0.0)
            .map(|(z, _)| *z)
            .collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                assert!((pts[i] - pts[j]).norm() > 1e-12);
            }
        }
    }

    #[test]
    fn scaling_trace_monotone_for_nonpositive_field() {
        let grid = uniform_grid(48);
        let n_list = [2usize, 3, 4, 5, 6];
        let (rows, _) = energy_scaling_trace(
            hp(),
            &grid,
            &vec![-1.0; 48],
            &n_list,
            1.0,
            &FreeSolveOptions { seed: 21, restarts: 4, ..Default::default() },
            None,
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(
                w[1].e_n <= w[0].e_n + 1e-6,
                "e_{} = {} > e_{} = {}",
                w[1].n,
                w[1].e_n,
                w[0].n,
                w[0].e_n
            );
            assert!(w[1].e_n_over_n2 <= 0.0);
        }
    }

    #[test]
    fn seeded_solution_beats_discretized_measure() {
        // e_N / N^2 <= plug-in energy of any feasible discretized measure,
        // guaranteed by handing the solver that measure as a warm start
        let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
        let n = 8;
        let partition = build_interval_partition(&set, n).unwrap();
        let density = Density::constant_on(&set, 0.4);
        let cfg = discretize_upper_constrained(&density, &partition, 1.0).unwrap();

        let uniform: Vec<Complex64> = uniform_grid(33);
        let grid =
            crate::geometry::merge_grids(&set, &[&uniform, cfg.points()], 1e-13).unwrap();
        let fvals = vec![-1.0; grid.len()];
        let idx = snap_to_grid(&grid, cfg.points()).unwrap();

        let p = FreeProblem::from_grid_values(hp(), grid, fvals, n, 1.0).unwrap();
        let opts = FreeSolveOptions {
            seed: 2,
            seed_configs: vec![(idx, cfg.masses().to_vec())],
            ..Default::default()
        };
        let sol = solve_free(&p, &opts).unwrap();

        // plug-in value of the discretized measure equals its discrete energy
        // over n^2 (computed independently here)
        let mut pair = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                pair += cfg.masses()[i]
                    * cfg.masses()[j]
                    * green_eval(hp(), cfg.points()[i], cfg.points()[j]).unwrap();
            }
        }
        let lin: f64 = -cfg.masses().iter().sum::<f64>();
        let j_estimate = (2.0 * pair + 2.0 * n as f64 * lin) / (n as f64 * n as f64);
        assert!(sol.objective / (n as f64 * n as f64) <= j_estimate + 1e-12);
    }
}
