//! Experiment pipelines tying the solver modules into reproducible runs with
//! CSV traces and JSON verification reports.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use greeneq_core::error::Error as CoreError;
use greeneq_core::field::field_min;
use greeneq_core::freesolve::{
    energy_scaling_trace, snap_to_grid, FreeSolution, FreeSolveOptions, ScalingRow, SeedConfig,
};
use greeneq_core::geometry::merge_grids;
use greeneq_core::greedy::{estimate_a_set, greedy_run, GreedyRow};
use greeneq_core::kernel::{assemble_kernel_matrix, GreenDomain};
use greeneq_core::massqp::{mass_partial, solve_masses, MassProblem, MassSolution, MassSolveOptions};
use greeneq_core::measure::{
    build_interval_partition, discrete_jf_estimate, discretize_upper_constrained, Density,
    PartitionedSet, WeightedConfiguration,
};
use greeneq_core::verify::{
    constrained_ess_inf_check, continuity_scan_r, energy_bounds, estimate_cf, frostman_check,
    inequality_suite, kappa_min, kernel_identity_checks, lambda_regularity,
    uniform_density_upper_bound, CheckReport, EssInfReport, InequalityInputs, RScanRow,
};
use greeneq_core::Complex64;

use crate::config::{Experiment, Pipeline};
use crate::output::{emit_plotdata, fmt_f, write_csv, write_reports, PlotSeries};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{module}: {source}")]
    Core { module: &'static str, source: CoreError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn core(module: &'static str) -> impl Fn(CoreError) -> PipelineError {
    move |source| PipelineError::Core { module, source }
}

type PResult<T> = Result<T, PipelineError>;

/// Outcome of a run: files written and every verification report emitted.
pub struct RunArtifacts {
    pub outputs: Vec<PathBuf>,
    pub reports: Vec<CheckReport>,
}

impl RunArtifacts {
    pub fn any_failed(&self) -> bool {
        self.reports.iter().any(|r| !r.pass)
    }
}

/// Candidate grid shared across a family of runs: a uniform grid on `K`
/// merged with the partition midpoints of every `N` in the family, so that
/// prescribed-node configurations can seed the free solver.
pub struct FamilyGrid {
    pub grid: Vec<Complex64>,
    pub fvals: Vec<f64>,
}

pub fn family_grid(exp: &Experiment) -> PResult<FamilyGrid> {
    let max_n = exp.n_list.iter().copied().max().unwrap_or(2);
    let base = exp.set.uniform_grid(exp.grid.candidates.max(4 * max_n));
    let mut extra: Vec<Vec<Complex64>> = Vec::new();
    for &n in &exp.n_list {
        if let Ok(p) = build_interval_partition(&exp.set, n) {
            extra.push(p.nodes().to_vec());
        }
    }
    let mut grids: Vec<&[Complex64]> = vec![&base];
    for e in &extra {
        grids.push(e);
    }
    let grid = merge_grids(&exp.set, &grids, 1e-13).map_err(core("geometry"))?;
    let fvals = grid
        .iter()
        .map(|&z| exp.field.eval(z))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(core("field"))?;
    Ok(FamilyGrid { grid, fvals })
}

/// One prescribed-node solve.
pub struct NodesRun {
    pub n: usize,
    pub l: usize,
    /// Natural parameters of the nodes (real coordinate on segments).
    pub node_params: Vec<f64>,
    pub nodes: Vec<Complex64>,
    pub solution: MassSolution,
    pub partials: Vec<f64>,
}

/// Solve the prescribed-node mass problem for each family size (partition
/// midpoints), or once for an explicit node list.
pub fn run_nodes_family(exp: &Experiment) -> PResult<Vec<NodesRun>> {
    let mut runs = Vec::new();
    if let Some(params) = &exp.explicit_nodes {
        let nodes: Vec<Complex64> = match exp.domain {
            GreenDomain::RightHalfPlane => {
                params.iter().map(|&x| Complex64::new(x, 0.0)).collect()
            }
            GreenDomain::UnitDisk => exp
                .set
                .pieces()
                .first()
                .map(|p| params.iter().map(|&t| p.point_at(t)).collect())
                .unwrap_or_default(),
        };
        runs.push(solve_nodes(exp, nodes.len(), nodes)?);
    } else {
        for &n in &exp.n_list {
            let partition = build_interval_partition(&exp.set, n).map_err(core("measure"))?;
            runs.push(solve_nodes(exp, n, partition.nodes().to_vec())?);
        }
    }
    Ok(runs)
}

fn solve_nodes(exp: &Experiment, n: usize, nodes: Vec<Complex64>) -> PResult<NodesRun> {
    let kernel = assemble_kernel_matrix(exp.domain, &nodes).map_err(core("kernel"))?;
    let fvals = nodes
        .iter()
        .map(|&z| exp.field.eval(z))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(core("field"))?;
    let problem = MassProblem::new(kernel, fvals, exp.cap).map_err(core("massqp"))?;
    let opts = MassSolveOptions {
        random_starts: exp.mass_random_starts.max(2),
        seed: exp.seed.wrapping_add((n as u64) << 16),
        ..Default::default()
    };
    let solution = solve_masses(&problem, &opts).map_err(core("massqp"))?;
    let partials: Vec<f64> =
        (0..problem.len()).map(|i| mass_partial(&problem, &solution.masses, i)).collect();
    let node_params: Vec<f64> = nodes
        .iter()
        .map(|&z| exp.set.locate(z).map(|(_, t)| t).unwrap_or(z.re))
        .collect();
    Ok(NodesRun { n, l: nodes.len(), node_params, nodes, solution, partials })
}

/// Free-solver family on the shared grid, seeded from the prescribed-node
/// solutions and a discretized uniform-density candidate.
pub struct FreeFamily {
    pub grid: Vec<Complex64>,
    pub fvals: Vec<f64>,
    pub rows: Vec<ScalingRow>,
    pub solutions: Vec<FreeSolution>,
    /// Plug-in value of the discretized uniform-density seed per family size.
    pub j_tilde: Vec<Option<f64>>,
    /// Exact energy value of the best uniform density (continuous bound).
    pub uniform_bound: Option<(f64, f64)>,
}

pub fn run_free_family(
    exp: &Experiment,
    fam: &FamilyGrid,
    nodes_family: Option<&[NodesRun]>,
) -> PResult<FreeFamily> {
    let uniform_bound = match exp.domain {
        GreenDomain::RightHalfPlane => {
            uniform_density_upper_bound(&exp.set, &exp.field, exp.cap).map_err(core("verify"))?
        }
        GreenDomain::UnitDisk => None,
    };

    let mut per_n_seeds: Vec<Vec<SeedConfig>> = vec![Vec::new(); exp.n_list.len()];
    let mut j_tilde: Vec<Option<f64>> = vec![None; exp.n_list.len()];

    for (k, &n) in exp.n_list.iter().enumerate() {
        if let Ok(partition) = build_interval_partition(&exp.set, n) {
            if partition.len() == n {
                if let Some((c_star, _)) = uniform_bound {
                    if c_star > 0.0 {
                        let density = Density::constant_on(&exp.set, c_star);
                        let cfg = discretize_upper_constrained(&density, &partition, exp.cap)
                            .map_err(core("measure"))?;
                        let idx = snap_to_grid(&fam.grid, cfg.points()).map_err(core("freesolve"))?;
                        per_n_seeds[k].push((idx, cfg.masses().to_vec()));
                        j_tilde[k] = Some(
                            discrete_jf_estimate(exp.domain, &exp.field, &cfg)
                                .map_err(core("measure"))?,
                        );
                    }
                }
                if let Some(runs) = nodes_family {
                    if let Some(run) = runs.iter().find(|r| r.n == n && r.l == n) {
                        let idx = snap_to_grid(&fam.grid, &run.nodes).map_err(core("freesolve"))?;
                        per_n_seeds[k].push((idx, run.solution.masses.clone()));
                    }
                }
            }
        }
    }

    let opts = FreeSolveOptions {
        restarts: exp.restarts,
        max_rounds: exp.max_rounds,
        tol: exp.tol,
        seed: exp.seed,
        seed_configs: Vec::new(),
        mass_random_starts: exp.mass_random_starts,
    };
    let (rows, solutions) = energy_scaling_trace(
        exp.domain,
        &fam.grid,
        &fam.fvals,
        &exp.n_list,
        exp.cap,
        &opts,
        Some(&per_n_seeds),
    )
    .map_err(core("freesolve"))?;

    Ok(FreeFamily { grid: fam.grid.clone(), fvals: fam.fvals.clone(), rows, solutions, j_tilde, uniform_bound })
}

/// Greedy sequence bootstrapped from the finest free solution.
pub struct GreedyArtifacts {
    pub rows: Vec<GreedyRow>,
    pub c_f: f64,
    pub mu_mass: f64,
    pub a_size: usize,
    pub regime: &'static str,
}

pub fn run_greedy(exp: &Experiment, free: &FreeFamily) -> PResult<GreedyArtifacts> {
    let mu = &free.solutions.last().expect("free family is non-empty").configuration;
    let mu_mass = mu.total_mass();
    let c_f = estimate_cf(exp.domain, mu, &exp.field, exp.cap).map_err(core("verify"))?;

    let regime = if mu_mass <= 1e-12 {
        "zero_equilibrium"
    } else if mu_mass >= exp.cap * (1.0 - 1e-9) {
        "saturated"
    } else {
        "interior"
    };

    let (a_grid, a_fvals): (Vec<Complex64>, Vec<f64>) = if regime == "zero_equilibrium" {
        (free.grid.clone(), free.fvals.clone())
    } else {
        // widen the membership slack to the discrete potential ripple scale
        // (~ R ln n / n between atoms), so A covers the equality region and
        // not just the atoms themselves
        let n_eq = mu.normalization() as f64;
        let ripple = exp.cap * n_eq.ln() / n_eq;
        let slack = (1e-3_f64).max(ripple) * (1.0 + c_f.abs());
        let pts = estimate_a_set(exp.domain, &exp.field, mu, c_f, &free.grid, Some(slack))
            .map_err(core("greedy"))?;
        let idx = snap_to_grid(&free.grid, &pts).map_err(core("greedy"))?;
        (pts, idx.iter().map(|&i| free.fvals[i]).collect())
    };
    let a_size = a_grid.len();

    // seed at the field argmin; zero mass in the degenerate regime so the
    // trivial statistics stay identically zero
    let mut argmin = 0;
    for (i, &v) in a_fvals.iter().enumerate() {
        if v < a_fvals[argmin] {
            argmin = i;
        }
    }
    let seed_mass = if regime == "zero_equilibrium" { 0.0 } else { exp.cap };
    let (rows, _) = greedy_run(
        exp.domain,
        a_grid,
        a_fvals,
        exp.cap,
        exp.greedy_n_max,
        Some((argmin, seed_mass)),
    )
    .map_err(core("greedy"))?;

    Ok(GreedyArtifacts { rows, c_f, mu_mass, a_size, regime })
}

/// Constrained (upper-constraint) run on the reference-measure support.
pub struct ConstrainedRun {
    pub n: usize,
    pub l: usize,
    pub partition: PartitionedSet,
    pub solution: MassSolution,
    pub configuration: WeightedConfiguration,
    pub mass: f64,
    pub essinf: Option<EssInfReport>,
}

pub fn run_constrained_family(exp: &Experiment) -> PResult<Vec<ConstrainedRun>> {
    let support = exp.lambda_set.as_ref().unwrap_or(&exp.set);
    let mut runs = Vec::new();
    for &n in &exp.n_list {
        let partition = build_interval_partition(support, n).map_err(core("measure"))?;
        let nodes = partition.nodes().to_vec();
        let kernel = assemble_kernel_matrix(exp.domain, &nodes).map_err(core("kernel"))?;
        let fvals = nodes
            .iter()
            .map(|&z| exp.field.eval(z))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(core("field"))?;
        let problem = MassProblem::new(kernel, fvals, exp.cap).map_err(core("massqp"))?;
        let opts = MassSolveOptions {
            random_starts: exp.mass_random_starts.max(2),
            seed: exp.seed.wrapping_add((n as u64) << 16),
            ..Default::default()
        };
        let solution = solve_masses(&problem, &opts).map_err(core("massqp"))?;
        let configuration = WeightedConfiguration::new(
            nodes,
            solution.masses.clone(),
            exp.cap,
            partition.len(),
        )
        .map_err(core("measure"))?;
        let mass = configuration.total_mass();
        let essinf =
            match constrained_ess_inf_check(exp.domain, &configuration, &exp.field, exp.cap, None) {
                Ok(rep) => Some(rep),
                Err(CoreError::ZeroMeasure) => None,
                Err(e) => return Err(core("verify")(e)),
            };
        runs.push(ConstrainedRun {
            n,
            l: partition.len(),
            partition,
            solution,
            configuration,
            mass,
            essinf,
        });
    }
    Ok(runs)
}

pub fn lambda_regularity_reports(exp: &Experiment) -> Vec<CheckReport> {
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let rows = lambda_regularity(&exp.set, &eps, 401);
    let digest = format!("lambda;set_len={}", exp.set.total_length());
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let last = rows.last().unwrap().1;
    vec![
        CheckReport::new(
            "lambda_regularity_decreasing",
            &digest,
            rows.iter().map(|&(e, v)| (format!("eps_{e:e}"), v)).collect(),
            decreasing,
            0.0,
        ),
        CheckReport::new(
            "lambda_regularity_final_small",
            &digest,
            vec![("value_at_1e-4".into(), last)],
            last <= 0.01,
            0.01,
        ),
    ]
}

struct VerifyAllOutputs {
    reports: Vec<CheckReport>,
    outputs: Vec<PathBuf>,
}

fn verify_all(exp: &Experiment, dir: &Path) -> PResult<VerifyAllOutputs> {
    let mut outputs = Vec::new();
    let mut all_reports = Vec::new();

    // structural kernel and reference-measure checks
    let kernel_reports = kernel_identity_checks(exp.domain, 10_000, exp.seed);
    outputs.push(write_reports(dir, "verify_kernel.json", &kernel_reports)?);
    all_reports.extend(kernel_reports);

    let lam_reports = lambda_regularity_reports(exp);
    outputs.push(write_reports(dir, "verify_lambda_regularity.json", &lam_reports)?);
    all_reports.extend(lam_reports);

    // elementary bounds from beta and kappa
    let check_grid = exp.set.uniform_grid(exp.grid.check);
    let (beta, _) = field_min(&exp.field, &check_grid).map_err(core("field"))?;
    let kappa = kappa_min(exp.domain, &exp.set.uniform_grid(513)).map_err(core("verify"))?;
    let bounds = energy_bounds(beta, kappa, exp.cap);
    let digest = format!("bounds;beta={beta};kappa={kappa};cap={}", exp.cap);
    let bounds_reports = vec![CheckReport::new(
        "energy_bounds",
        &digest,
        vec![
            ("beta".into(), bounds.beta),
            ("kappa".into(), bounds.kappa),
            ("lower_bound".into(), bounds.lower_bound),
            ("r_star".into(), bounds.r_star),
            ("zero_mass_regime".into(), if bounds.zero_mass_regime { 1.0 } else { 0.0 }),
        ],
        bounds.lower_bound <= 1e-12,
        0.0,
    )];
    outputs.push(write_reports(dir, "verify_bounds.json", &bounds_reports)?);
    all_reports.extend(bounds_reports);

    // solver families
    let fam = family_grid(exp)?;
    let nodes_runs = run_nodes_family(exp)?;
    let free = run_free_family(exp, &fam, Some(&nodes_runs))?;
    outputs.extend(emit_nodes_outputs(dir, &nodes_runs)?);
    outputs.push(emit_free_trace(dir, &free.rows)?);

    // inequality chains with the certified per-size discretization values
    let v_upper_rows: Vec<(usize, f64)> = exp
        .n_list
        .iter()
        .zip(&free.j_tilde)
        .filter_map(|(&n, j)| j.map(|v| (n, v)))
        .collect();
    let e_rows: Vec<(usize, f64)> = free.rows.iter().map(|r| (r.n, r.e_n)).collect();
    let d_rows: Vec<(usize, f64)> =
        nodes_runs.iter().map(|r| (r.l, r.solution.objective)).collect();
    let finest = free.rows.last().unwrap();
    let v_f_est = finest.e_n_over_n2;
    let v_f_lambda_est = nodes_runs
        .last()
        .map(|r| r.solution.objective / ((r.n * r.n) as f64));
    let scale = 1.0
        + v_f_est
            .abs()
            .max(v_upper_rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max));
    let ineq = inequality_suite(&InequalityInputs {
        e_rows: &e_rows,
        d_rows: &d_rows,
        v_upper_rows: &v_upper_rows,
        v_f_estimate: Some(v_f_est),
        v_f_lambda_estimate: v_f_lambda_est,
        scale,
    });
    outputs.push(write_reports(dir, "verify_inequalities.json", &ineq)?);
    all_reports.extend(ineq);

    // convergence consistency between the two finest sizes and across problems
    let mut consistency = Vec::new();
    if free.rows.len() >= 2 {
        let prev = &free.rows[free.rows.len() - 2];
        let gap = (finest.e_n_over_n2 - prev.e_n_over_n2).abs();
        let tol = 0.05 * prev.e_n_over_n2.abs();
        consistency.push(CheckReport::new(
            "free_value_cauchy",
            &format!("free;n={}", finest.n),
            vec![("gap".into(), gap), ("prev".into(), prev.e_n_over_n2)],
            gap <= tol || prev.e_n_over_n2 == 0.0,
            tol,
        ));
    }
    if let Some(last_nodes) = nodes_runs.last() {
        if last_nodes.n == finest.n && finest.e_n_over_n2 != 0.0 {
            let d_norm = last_nodes.solution.objective / ((last_nodes.n * last_nodes.n) as f64);
            let gap = (d_norm - finest.e_n_over_n2).abs() / finest.e_n_over_n2.abs();
            consistency.push(CheckReport::new(
                "d_vs_e_relative_gap",
                &format!("dn;n={}", finest.n),
                vec![("relative_gap".into(), gap), ("d_over_n2".into(), d_norm)],
                gap <= 0.05,
                0.05,
            ));
        }
    }

    // first-order residuals of the finest free equilibrium estimate
    let mu = &free.solutions.last().unwrap().configuration;
    let c_f = estimate_cf(exp.domain, mu, &exp.field, exp.cap).map_err(core("verify"))?;
    let frostman = frostman_check(exp.domain, mu, &exp.field, &check_grid, c_f, None)
        .map_err(core("verify"))?;
    let f_scale = 1.0 + c_f.abs();
    let frostman_reports = vec![
        CheckReport::new(
            "frostman_offsupport",
            &format!("frostman;cf={c_f};grid={}", frostman.grid_size),
            vec![("min_residual".into(), frostman.min_residual_offsupport)],
            frostman.min_residual_offsupport >= -1e-2 * f_scale,
            1e-2 * f_scale,
        ),
        CheckReport::new(
            "frostman_onsupport",
            &format!("frostman;cf={c_f};grid={}", frostman.grid_size),
            vec![(
                "max_residual".into(),
                frostman.max_residual_onsupport.unwrap_or(f64::NEG_INFINITY),
            )],
            frostman.max_residual_onsupport.is_none_or(|m| m <= 1e-2 * f_scale),
            1e-2 * f_scale,
        ),
        CheckReport::new(
            "frostman_support_condition",
            &format!("frostman;cf={c_f}"),
            vec![("ok".into(), if frostman.support_condition_ok { 1.0 } else { 0.0 })],
            frostman.support_condition_ok,
            0.0,
        ),
    ];
    outputs.push(write_reports(dir, "verify_frostman.json", &frostman_reports)?);
    all_reports.extend(frostman_reports);

    // greedy trajectory against the free values
    let greedy = run_greedy(exp, &free)?;
    outputs.push(emit_greedy_trace(dir, &greedy.rows)?);
    let mut greedy_reports = vec![CheckReport::new(
        "greedy_masses_bang_bang",
        "greedy",
        vec![(
            "non_bang_bang".into(),
            greedy.rows.iter().filter(|r| r.m != 0.0 && r.m != exp.cap).count() as f64,
        )],
        greedy.rows.iter().all(|r| r.m == 0.0 || r.m == exp.cap),
        0.0,
    )];
    if let Some(row) = greedy.rows.iter().find(|r| r.n == finest.n) {
        if finest.e_n_over_n2 != 0.0 {
            let gap = (row.e_over_n2 - finest.e_n_over_n2).abs() / finest.e_n_over_n2.abs();
            greedy_reports.push(CheckReport::new(
                "greedy_vs_free_relative_gap",
                &format!("greedy;n={}", finest.n),
                vec![("relative_gap".into(), gap), ("greedy_e_over_n2".into(), row.e_over_n2)],
                gap <= 0.05,
                0.05,
            ));
        }
        // greedy history is feasible, so its energy dominates the best value
        greedy_reports.push(CheckReport::new(
            "greedy_dominates_free_value",
            &format!("greedy;n={}", finest.n),
            vec![("greedy".into(), row.e_over_n2), ("free".into(), finest.e_n_over_n2)],
            row.e_over_n2 >= finest.e_n_over_n2 - 1e-6 * scale,
            1e-6 * scale,
        ));
    }
    // feasibility lower bound at every shared size
    let mut worst_defect: f64 = f64::NEG_INFINITY;
    for fr in &free.rows {
        if let Some(row) = greedy.rows.iter().find(|r| r.n == fr.n) {
            worst_defect = worst_defect.max(fr.e_n_over_n2 - row.e_over_n2);
        }
    }
    if worst_defect > f64::NEG_INFINITY {
        greedy_reports.push(CheckReport::new(
            "greedy_dominates_free_value_all_n",
            "greedy;all shared n",
            vec![("worst_defect".into(), worst_defect)],
            worst_defect <= 1e-6 * scale,
            1e-6 * scale,
        ));
    }
    // the per-step minimum vanishes relative to n
    let u_at = |n: usize| greedy.rows.iter().find(|r| r.n == n).map(|r| r.u_step.abs() / n as f64);
    if let (Some(u16), Some(u_last)) = (u_at(16), u_at(greedy.rows.last().unwrap().n)) {
        greedy_reports.push(CheckReport::new(
            "greedy_step_value_vanishes",
            "greedy;u_n_over_n",
            vec![("u16_over_16".into(), u16), ("u_last_over_n".into(), u_last)],
            u_last <= u16 + 1e-12,
            1e-12,
        ));
    }
    outputs.push(write_reports(dir, "verify_greedy.json", &greedy_reports)?);
    all_reports.extend(greedy_reports);

    outputs.push(write_reports(dir, "verify_consistency.json", &consistency)?);
    all_reports.extend(consistency);

    // constrained essential-infimum check on the reference-measure pipeline
    let constrained = run_constrained_family(exp)?;
    let essinf_reports: Vec<CheckReport> = constrained
        .iter()
        .map(|run| match &run.essinf {
            Some(rep) => CheckReport::new(
                format!("essinf_n{}", run.n),
                &format!("essinf;n={};mass={}", run.n, run.mass),
                vec![
                    ("sup_on_support".into(), rep.sup_on_support),
                    ("essinf_on_rho".into(), rep.essinf_on_rho.unwrap_or(f64::INFINITY)),
                ],
                rep.pass,
                1e-2,
            ),
            None => CheckReport::new(
                format!("essinf_n{}_zero_measure", run.n),
                &format!("essinf;n={};mass=0", run.n),
                vec![("mass".into(), run.mass)],
                true,
                0.0,
            ),
        })
        .collect();
    outputs.push(write_reports(dir, "verify_essinf.json", &essinf_reports)?);
    all_reports.extend(essinf_reports);

    // combined plot data
    let series = vec![
        PlotSeries {
            name: "e_over_n2".into(),
            rows: free.rows.iter().map(|r| (r.n as f64, r.e_n_over_n2)).collect(),
        },
        PlotSeries {
            name: "d_over_n2".into(),
            rows: nodes_runs
                .iter()
                .map(|r| (r.n as f64, r.solution.objective / ((r.n * r.n) as f64)))
                .collect(),
        },
        PlotSeries {
            name: "greedy_e_over_n2".into(),
            rows: greedy.rows.iter().map(|r| (r.n as f64, r.e_over_n2)).collect(),
        },
    ];
    outputs.push(emit_plotdata(dir, "plotdata.csv", &series)?);

    Ok(VerifyAllOutputs { reports: all_reports, outputs })
}

fn emit_free_trace(dir: &Path, rows: &[ScalingRow]) -> std::io::Result<PathBuf> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f(r.e_n),
                fmt_f(r.e_n_over_n2),
                r.restarts.to_string(),
                r.converged.to_string(),
            ]
        })
        .collect();
    write_csv(dir, "trace_free.csv", "N,e_N,e_N_over_N2,restarts,converged", &body)
}

fn emit_nodes_outputs(dir: &Path, runs: &[NodesRun]) -> PResult<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    let trace: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.l.to_string(),
                fmt_f(r.solution.objective),
                fmt_f(r.solution.objective / ((r.n * r.n) as f64)),
                fmt_f(r.solution.kkt_max),
                r.solution.converged.to_string(),
            ]
        })
        .collect();
    outputs.push(write_csv(
        dir,
        "trace_nodes.csv",
        "N,l_N,d_N,d_N_over_N2,kkt_max,converged",
        &trace,
    )?);
    for r in runs {
        let body: Vec<Vec<String>> = (0..r.l)
            .map(|j| {
                vec![
                    j.to_string(),
                    fmt_f(r.node_params[j]),
                    fmt_f(r.solution.masses[j]),
                    fmt_f(r.partials[j]),
                    fmt_f(r.solution.kkt_residuals[j]),
                ]
            })
            .collect();
        outputs.push(write_csv(
            dir,
            &format!("masses_nodes_n{}.csv", r.n),
            "j,x_j,m_j,c_j,residual_j",
            &body,
        )?);
    }
    Ok(outputs)
}

fn emit_greedy_trace(dir: &Path, rows: &[GreedyRow]) -> std::io::Result<PathBuf> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f(r.a_re),
                fmt_f(r.a_im),
                fmt_f(r.m),
                fmt_f(r.chi_star),
                fmt_f(r.e_over_n2),
                fmt_f(r.mean_mf),
                fmt_f(r.pair_over_n2),
            ]
        })
        .collect();
    write_csv(
        dir,
        "trace_greedy.csv",
        "N,a_N_re,a_N_im,m_N,chi_star,E_over_N2,mean_mf,pair_energy_over_N2",
        &body,
    )
}

fn emit_scan_trace(dir: &Path, rows: &[RScanRow]) -> std::io::Result<PathBuf> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt_f(r.r), fmt_f(r.r_eff), fmt_f(r.v_hat), fmt_f(r.mass)])
        .collect();
    write_csv(dir, "trace_scan_r.csv", "R,R_eff,v_hat,mass", &body)
}

fn emit_constrained_outputs(dir: &Path, runs: &[ConstrainedRun]) -> PResult<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    let trace: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.l.to_string(),
                fmt_f(r.solution.objective),
                fmt_f(r.solution.objective / ((r.n * r.n) as f64)),
                fmt_f(r.mass),
                fmt_f(r.solution.kkt_max),
                r.solution.converged.to_string(),
            ]
        })
        .collect();
    outputs.push(write_csv(
        dir,
        "trace_constrained.csv",
        "N,l_N,d_N,d_N_over_N2,mass,kkt_max,converged",
        &trace,
    )?);
    for r in runs {
        let body: Vec<Vec<String>> = (0..r.l)
            .map(|j| {
                vec![
                    j.to_string(),
                    fmt_f(r.partition.cells()[j].t_lo),
                    fmt_f(r.partition.cells()[j].t_hi),
                    fmt_f(r.solution.masses[j]),
                    fmt_f(r.solution.kkt_residuals[j]),
                ]
            })
            .collect();
        outputs.push(write_csv(
            dir,
            &format!("masses_constrained_n{}.csv", r.n),
            "j,cell_lo,cell_hi,m_j,residual_j",
            &body,
        )?);
    }
    Ok(outputs)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    pipeline: &'a str,
    seed: u64,
    report_count: usize,
    failed_reports: Vec<String>,
    outputs: Vec<String>,
}

/// Execute the configured pipeline, writing outputs under `out_dir`.
pub fn run_experiment(exp: &Experiment, out_dir: &Path) -> PResult<RunArtifacts> {
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut reports: Vec<CheckReport> = Vec::new();

    match exp.pipeline {
        Pipeline::Free => {
            let fam = family_grid(exp)?;
            let free = run_free_family(exp, &fam, None)?;
            outputs.push(emit_free_trace(out_dir, &free.rows)?);
            let series = vec![PlotSeries {
                name: "e_over_n2".into(),
                rows: free.rows.iter().map(|r| (r.n as f64, r.e_n_over_n2)).collect(),
            }];
            outputs.push(emit_plotdata(out_dir, "plotdata.csv", &series)?);
        }
        Pipeline::Nodes => {
            let runs = run_nodes_family(exp)?;
            outputs.extend(emit_nodes_outputs(out_dir, &runs)?);
            let series = vec![PlotSeries {
                name: "d_over_n2".into(),
                rows: runs
                    .iter()
                    .map(|r| (r.n as f64, r.solution.objective / ((r.n * r.n) as f64)))
                    .collect(),
            }];
            outputs.push(emit_plotdata(out_dir, "plotdata.csv", &series)?);
        }
        Pipeline::Greedy => {
            let fam = family_grid(exp)?;
            let free = run_free_family(exp, &fam, None)?;
            outputs.push(emit_free_trace(out_dir, &free.rows)?);
            let greedy = run_greedy(exp, &free)?;
            outputs.push(emit_greedy_trace(out_dir, &greedy.rows)?);
            let regime_reports = vec![CheckReport::new(
                "greedy_regime",
                &format!("greedy;mass={};cap={}", greedy.mu_mass, exp.cap),
                vec![
                    ("mu_mass".into(), greedy.mu_mass),
                    ("c_f".into(), greedy.c_f),
                    ("a_size".into(), greedy.a_size as f64),
                    (
                        "interior_regime".into(),
                        if greedy.regime == "interior" { 1.0 } else { 0.0 },
                    ),
                ],
                true,
                0.0,
            )];
            outputs.push(write_reports(out_dir, "verify_greedy.json", &regime_reports)?);
            reports.extend(regime_reports);
            let series = vec![
                PlotSeries {
                    name: "e_over_n2".into(),
                    rows: free.rows.iter().map(|r| (r.n as f64, r.e_n_over_n2)).collect(),
                },
                PlotSeries {
                    name: "greedy_e_over_n2".into(),
                    rows: greedy.rows.iter().map(|r| (r.n as f64, r.e_over_n2)).collect(),
                },
            ];
            outputs.push(emit_plotdata(out_dir, "plotdata.csv", &series)?);
        }
        Pipeline::Constrained => {
            let runs = run_constrained_family(exp)?;
            outputs.extend(emit_constrained_outputs(out_dir, &runs)?);
            let essinf_reports: Vec<CheckReport> = runs
                .iter()
                .map(|run| match &run.essinf {
                    Some(rep) => CheckReport::new(
                        format!("essinf_n{}", run.n),
                        &format!("essinf;n={};mass={}", run.n, run.mass),
                        vec![
                            ("sup_on_support".into(), rep.sup_on_support),
                            ("essinf_on_rho".into(), rep.essinf_on_rho.unwrap_or(f64::INFINITY)),
                            ("d_n".into(), run.solution.objective),
                        ],
                        rep.pass,
                        1e-2,
                    ),
                    None => CheckReport::new(
                        format!("essinf_n{}_zero_measure", run.n),
                        &format!("essinf;n={};mass=0", run.n),
                        vec![("mass".into(), run.mass), ("d_n".into(), run.solution.objective)],
                        true,
                        0.0,
                    ),
                })
                .collect();
            outputs.push(write_reports(out_dir, "verify_essinf.json", &essinf_reports)?);
            reports.extend(essinf_reports);
            let series = vec![PlotSeries {
                name: "d_over_n2".into(),
                rows: runs
                    .iter()
                    .map(|r| (r.n as f64, r.solution.objective / ((r.n * r.n) as f64)))
                    .collect(),
            }];
            outputs.push(emit_plotdata(out_dir, "plotdata.csv", &series)?);
        }
        Pipeline::ScanR => {
            let fam = family_grid(exp)?;
            let check_grid = exp.set.uniform_grid(exp.grid.check);
            let (beta, _) = field_min(&exp.field, &check_grid).map_err(core("field"))?;
            let kappa = kappa_min(exp.domain, &exp.set.uniform_grid(513)).map_err(core("verify"))?;
            let n_scan = exp.n_list.iter().copied().max().unwrap();
            let opts = FreeSolveOptions {
                restarts: exp.restarts,
                max_rounds: exp.max_rounds,
                tol: exp.tol,
                seed: exp.seed,
                seed_configs: Vec::new(),
                mass_random_starts: exp.mass_random_starts,
            };
            let (rows, checks) = continuity_scan_r(
                exp.domain,
                &fam.grid,
                &fam.fvals,
                beta,
                kappa,
                n_scan,
                exp.r_grid.as_ref().expect("validated"),
                &opts,
            )
            .map_err(core("verify"))?;
            outputs.push(emit_scan_trace(out_dir, &rows)?);
            outputs.push(write_reports(out_dir, "verify_scan_r.json", &checks)?);
            reports.extend(checks);
            let series = vec![PlotSeries {
                name: "v_hat_of_r".into(),
                rows: rows.iter().map(|r| (r.r, r.v_hat)).collect(),
            }];
            outputs.push(emit_plotdata(out_dir, "plotdata.csv", &series)?);
        }
        Pipeline::VerifyAll => {
            let out = verify_all(exp, out_dir)?;
            outputs.extend(out.outputs);
            reports.extend(out.reports);
        }
    }

    let summary = RunSummary {
        pipeline: exp.pipeline.name(),
        seed: exp.seed,
        report_count: reports.len(),
        failed_reports: reports.iter().filter(|r| !r.pass).map(|r| r.name.clone()).collect(),
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    outputs.push(crate::output::write_json(out_dir, "run_summary.json", &summary)?);

    Ok(RunArtifacts { outputs, reports })
}
