//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them).
//!
//! The benchmark family (K = [1,2] in the half-plane, f = -1, R = 1,
//! N in {8, 16, 32, 64, 128}) is computed once and shared.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use greeneq_cli::config::{parse_config, Experiment};
use greeneq_cli::pipelines::{
    family_grid, run_free_family, run_greedy, run_nodes_family, FamilyGrid, FreeFamily,
    GreedyArtifacts, NodesRun,
};
use greeneq_cli::run_file;
use greeneq_core::field::{FieldPiece, FieldValue};
use greeneq_core::freesolve::{
    brute_force_free, energy_scaling_trace, solve_free, FreeProblem, FreeSolveOptions,
};
use greeneq_core::kernel::{assemble_kernel_matrix, GreenDomain};
use greeneq_core::massqp::{
    brute_force_masses, interior_linear_solve, kkt_residual, solve_masses, InteriorSolve,
    MassProblem, MassSolveOptions,
};
use greeneq_core::verify::{
    continuity_scan_r, estimate_cf, frostman_check, inequality_suite, kappa_min,
    kernel_identity_checks, lambda_regularity, InequalityInputs,
};
use greeneq_core::{CompactSet, Complex64, ExternalField};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hp() -> GreenDomain {
    GreenDomain::RightHalfPlane
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

struct Bench {
    exp: Experiment,
    fam: FamilyGrid,
    nodes: Vec<NodesRun>,
    free: FreeFamily,
    greedy: GreedyArtifacts,
}

static BENCH: OnceLock<Bench> = OnceLock::new();

fn bench() -> &'static Bench {
    BENCH.get_or_init(|| {
        let text = std::fs::read_to_string(configs_dir().join("benchmark_verify_all.json"))
            .expect("benchmark config present");
        let exp = parse_config(&text).expect("benchmark config parses");
        assert_eq!(exp.n_list, vec![8, 16, 32, 64, 128]);
        let fam = family_grid(&exp).expect("family grid");
        let nodes = run_nodes_family(&exp).expect("nodes family");
        let free = run_free_family(&exp, &fam, Some(&nodes)).expect("free family");
        let greedy = run_greedy(&exp, &free).expect("greedy run");
        Bench { exp, fam, nodes, free, greedy }
    })
}

/// Random prescribed-node instance on [1, 2] with piecewise-constant field
/// values in [-3, 1] and cap in {0.5, 1, 2}.
fn random_mass_instance(rng: &mut ChaCha8Rng, l: usize) -> MassProblem {
    let xs: Vec<f64> = loop {
        let mut draw: Vec<f64> = (0..l).map(|_| 1.0 + rng.gen::<f64>()).collect();
        draw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if draw.windows(2).all(|w| w[1] - w[0] >= 1e-3) {
            break draw;
        }
    };
    let nodes: Vec<Complex64> = xs.iter().map(|&x| c(x)).collect();
    let kernel = assemble_kernel_matrix(hp(), &nodes).unwrap();
    let fvals: Vec<f64> = (0..l).map(|_| -3.0 + 4.0 * rng.gen::<f64>()).collect();
    let cap = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    MassProblem::new(kernel, fvals, cap).unwrap()
}

#[test]
fn acceptance_01_mass_solver_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for trial in 0..20 {
        let l = 2 + (trial % 2);
        let p = random_mass_instance(&mut rng, l);
        let sol =
            solve_masses(&p, &MassSolveOptions::with_random_starts(8, 7000 + trial as u64)).unwrap();
        let brute = brute_force_masses(&p, 200).unwrap();
        let slack = 1e-2 * (1.0 + sol.objective.abs());
        assert!(
            sol.objective <= brute.objective + slack,
            "trial {trial}: solver {} vs brute {}",
            sol.objective,
            brute.objective
        );
        worst_gap = worst_gap.max(sol.objective - brute.objective);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 1 overran: {elapsed:?}");
    println!(
        "[acceptance 01] PASS mass-solver oracle equivalence: 20 instances, worst objective gap {worst_gap:.3e}, {elapsed:.2?}"
    );
}

#[test]
fn acceptance_02_kkt_certification_and_interior_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_kkt: f64 = 0.0;
    for trial in 0..20 {
        let l = 2 + (trial % 3);
        let p = random_mass_instance(&mut rng, l);
        let sol =
            solve_masses(&p, &MassSolveOptions::with_random_starts(8, 9000 + trial as u64)).unwrap();
        assert!(sol.converged, "trial {trial} did not converge");
        let bound = 1e-6 * (1.0 + p.linear_norm());
        assert!(sol.kkt_max <= bound, "trial {trial}: kkt {} > {bound}", sol.kkt_max);
        worst_kkt = worst_kkt.max(sol.kkt_max);
    }

    // two-node benchmark with cap 5: the stationarity system has the closed
    // form (2/ln 3, 2/ln 3)
    let nodes = [c(1.0), c(2.0)];
    let kernel = assemble_kernel_matrix(hp(), &nodes).unwrap();
    let p5 = MassProblem::new(kernel, vec![-1.0, -1.0], 5.0).unwrap();
    let want = 2.0 / 3.0_f64.ln();
    match interior_linear_solve(&p5).unwrap() {
        InteriorSolve::Feasible { masses, objective } => {
            assert!((masses[0] - want).abs() <= 1e-8, "m0 = {}", masses[0]);
            assert!((masses[1] - want).abs() <= 1e-8, "m1 = {}", masses[1]);
            let (_, kkt) = kkt_residual(&p5, &masses);
            assert!(kkt <= 1e-8, "interior kkt {kkt}");
            let sol = solve_masses(&p5, &MassSolveOptions::with_random_starts(8, 5)).unwrap();
            assert!(sol.objective <= objective + 1e-12);
        }
        other => panic!("expected feasible interior solve, got {other:?}"),
    }
    println!(
        "[acceptance 02] PASS KKT certification: worst residual {worst_kkt:.3e}; interior solve matches 2/ln3 = {want:.10}"
    );
}

fn random_free_instance(
    rng: &mut ChaCha8Rng,
) -> (FreeProblem, ExternalField) {
    let n = 2 + (rng.gen::<u32>() % 2) as usize;
    let g = 8 + (rng.gen::<u32>() % 5) as usize; // 8..=12
    let xs: Vec<f64> = loop {
        let mut draw: Vec<f64> = (0..g).map(|_| 1.0 + rng.gen::<f64>()).collect();
        draw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if draw.windows(2).all(|w| w[1] - w[0] >= 1e-3) {
            break draw;
        }
    };
    // piecewise-constant field with two random breakpoints
    let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
    let mut b1 = 1.0 + rng.gen::<f64>();
    let mut b2 = 1.0 + rng.gen::<f64>();
    if b2 < b1 {
        std::mem::swap(&mut b1, &mut b2);
    }
    let vals: Vec<f64> = (0..3).map(|_| -3.0 + 4.0 * rng.gen::<f64>()).collect();
    let field = ExternalField::new(
        set,
        vec![
            FieldPiece { lo: 1.0, hi: b1, value: FieldValue::Constant(vals[0]) },
            FieldPiece { lo: b1, hi: b2, value: FieldValue::Constant(vals[1]) },
            FieldPiece { lo: b2, hi: 2.0, value: FieldValue::Constant(vals[2]) },
        ],
        FieldValue::Infinite,
    )
    .unwrap();
    let cap = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
    let grid: Vec<Complex64> = xs.iter().map(|&x| c(x)).collect();
    let problem = FreeProblem::new(hp(), grid, &field, n, cap).unwrap();
    (problem, field)
}

#[test]
fn acceptance_03_free_solver_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let (problem, _field) = random_free_instance(&mut rng);
        let brute = brute_force_free(&problem, 50).unwrap();
        let sol = solve_free(
            &problem,
            &FreeSolveOptions { restarts: 24, seed: 4000 + trial as u64, ..Default::default() },
        )
        .unwrap();
        let gap = (sol.objective - brute.objective).abs();
        assert!(
            gap <= 1e-9 * (1.0 + brute.objective.abs()),
            "trial {trial}: solver {} vs brute {}",
            sol.objective,
            brute.objective
        );
        worst = worst.max(gap);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "criterion 3 overran: {elapsed:?}");
    println!(
        "[acceptance 03] PASS free-solver oracle equivalence: 10 instances, worst gap {worst:.3e}, {elapsed:.2?}"
    );
}

#[test]
fn acceptance_04_inequality_chains_on_the_benchmark() {
    let b = bench();
    let e_rows: Vec<(usize, f64)> = b.free.rows.iter().map(|r| (r.n, r.e_n)).collect();
    let d_rows: Vec<(usize, f64)> =
        b.nodes.iter().map(|r| (r.l, r.solution.objective)).collect();
    let v_upper_rows: Vec<(usize, f64)> = b
        .exp
        .n_list
        .iter()
        .zip(&b.free.j_tilde)
        .filter_map(|(&n, j)| j.map(|v| (n, v)))
        .collect();
    assert_eq!(v_upper_rows.len(), b.exp.n_list.len(), "every size carries a certified bound");
    let finest = b.free.rows.last().unwrap();
    let scale = 1.0 + finest.e_n_over_n2.abs();
    let reports = inequality_suite(&InequalityInputs {
        e_rows: &e_rows,
        d_rows: &d_rows,
        v_upper_rows: &v_upper_rows,
        v_f_estimate: Some(finest.e_n_over_n2),
        v_f_lambda_estimate: Some(
            b.nodes.last().unwrap().solution.objective / ((finest.n * finest.n) as f64),
        ),
        scale,
    });
    let failures: Vec<&str> =
        reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    assert!(failures.is_empty(), "inequality failures: {failures:?}");
    println!(
        "[acceptance 04] PASS inequality chains: {} checks, zero failures (e.g. e_128 = {:.6}, d_128 = {:.6})",
        reports.len(),
        e_rows.last().unwrap().1,
        d_rows.last().unwrap().1
    );
}

#[test]
fn acceptance_05_monotone_in_n_for_nonpositive_field() {
    let b = bench();
    let n_list: Vec<usize> = (8..=64).collect();
    let opts = FreeSolveOptions {
        restarts: 2,
        seed: 505,
        max_rounds: 50,
        ..Default::default()
    };
    let (rows, _) = energy_scaling_trace(
        b.exp.domain,
        &b.fam.grid,
        &b.fam.fvals,
        &n_list,
        b.exp.cap,
        &opts,
        None,
    )
    .unwrap();
    let mut worst: f64 = f64::NEG_INFINITY;
    for w in rows.windows(2) {
        let increase = w[1].e_n - w[0].e_n;
        assert!(
            increase <= 1e-6,
            "e_{} = {} > e_{} = {} + 1e-6",
            w[1].n,
            w[1].e_n,
            w[0].n,
            w[0].e_n
        );
        worst = worst.max(increase);
    }
    println!(
        "[acceptance 05] PASS monotonicity e_(N+1) <= e_N for N in 8..=64 (worst increase {worst:.3e})"
    );
}

#[test]
fn acceptance_06_convergence_consistency() {
    let b = bench();
    let rows = &b.free.rows;
    let (r64, r128) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    assert_eq!((r64.n, r128.n), (64, 128));

    let cauchy = (r128.e_n_over_n2 - r64.e_n_over_n2).abs();
    assert!(
        cauchy <= 0.05 * r64.e_n_over_n2.abs(),
        "free Cauchy gap {cauchy} vs {}",
        0.05 * r64.e_n_over_n2.abs()
    );

    let d128 = b.nodes.last().unwrap();
    assert_eq!(d128.n, 128);
    let d_norm = d128.solution.objective / (128.0 * 128.0);
    let d_gap = (d_norm - r128.e_n_over_n2).abs() / r128.e_n_over_n2.abs();
    assert!(d_gap <= 0.05, "d vs e gap {d_gap}");

    let g128 = b.greedy.rows.iter().find(|r| r.n == 128).expect("greedy reaches 128");
    let g_gap = (g128.e_over_n2 - r128.e_n_over_n2).abs() / r128.e_n_over_n2.abs();
    assert!(g_gap <= 0.05, "greedy vs e gap {g_gap}");

    println!(
        "[acceptance 06] PASS convergence consistency: |e128/128^2 - e64/64^2| = {cauchy:.4e}, d-gap {d_gap:.3e}, greedy-gap {g_gap:.3e}"
    );
}

#[test]
fn acceptance_07_frostman_residuals() {
    let b = bench();
    let mu = &b.free.solutions.last().unwrap().configuration;
    let c_f = estimate_cf(b.exp.domain, mu, &b.exp.field, b.exp.cap).unwrap();
    let grid = b.exp.set.uniform_grid(2001);
    let rep = frostman_check(b.exp.domain, mu, &b.exp.field, &grid, c_f, None).unwrap();
    let scale = 1.0 + c_f.abs();
    assert_eq!(rep.grid_size, 2001);
    assert!(
        rep.min_residual_offsupport >= -1e-2 * scale,
        "off-support residual {}",
        rep.min_residual_offsupport
    );
    let on = rep.max_residual_onsupport.expect("equilibrium estimate has atoms");
    assert!(on <= 1e-2 * scale, "on-support residual {on}");
    assert!(rep.support_condition_ok);
    println!(
        "[acceptance 07] PASS Frostman residuals on 2001-point grid: off-support min {:.4e}, on-support max {:.4e}, C_f = {c_f}",
        rep.min_residual_offsupport, on
    );
}

#[test]
fn acceptance_08_trivial_regimes() {
    // nonnegative field: zero energies, at most one positive mass, zero measure
    let set = CompactSet::segments(&[(1.0, 2.0)]).unwrap();
    let field = ExternalField::constant(set.clone(), 1.0).unwrap();
    let grid = set.uniform_grid(128);
    let fvals: Vec<f64> = grid.iter().map(|&z| field.eval(z).unwrap()).collect();
    let (rows, sols) = energy_scaling_trace(
        hp(),
        &grid,
        &fvals,
        &[2, 4, 8, 16],
        1.0,
        &FreeSolveOptions { restarts: 4, seed: 808, ..Default::default() },
        None,
    )
    .unwrap();
    for (row, sol) in rows.iter().zip(&sols) {
        assert_eq!(row.e_n, 0.0, "e_{} must vanish exactly", row.n);
        assert!(sol.configuration.positive_atom_count() <= 1);
        assert_eq!(sol.configuration.total_mass(), 0.0);
    }

    // the upper-constraint counterexample: reference measure on [0,1] where
    // f = 0, field -1 on the unreachable [2,3]; minimizer is zero for every cap
    let template = std::fs::read_to_string(configs_dir().join("counterexample_constrained.json"))
        .expect("counterexample config present");
    for cap in [0.5, 1.0, 5.0] {
        let text = template.replace("\"cap\": 1.0", &format!("\"cap\": {cap:.1}"));
        let exp = parse_config(&text).unwrap();
        assert_eq!(exp.cap, cap);
        let runs = greeneq_cli::pipelines::run_constrained_family(&exp).unwrap();
        for run in &runs {
            assert_eq!(run.solution.objective, 0.0, "cap {cap}, n {}", run.n);
            assert_eq!(run.mass, 0.0);
            assert!(run.essinf.is_none(), "zero measure: ess-inf check is vacuous");
        }
    }
    println!(
        "[acceptance 08] PASS trivial regimes: f >= 0 gives identically zero energies and measures; counterexample gives zero constrained minimizer for caps 0.5, 1, 5"
    );
}

#[test]
fn acceptance_09_cap_continuity_and_saturation() {
    let b = bench();
    let threshold = 2.0 / 3.0_f64.ln();
    let r_grid: Vec<f64> = vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, threshold, 2.0, 2.25, 2.5];
    let kappa = kappa_min(b.exp.domain, &b.exp.set.uniform_grid(513)).unwrap();
    let (rows, checks) = continuity_scan_r(
        b.exp.domain,
        &b.fam.grid,
        &b.fam.fvals,
        -1.0,
        kappa,
        24,
        &r_grid,
        &FreeSolveOptions { restarts: 4, seed: 909, ..Default::default() },
    )
    .unwrap();
    assert_eq!(rows.len(), 10);
    for w in rows.windows(2) {
        assert!(w[1].v_hat <= w[0].v_hat + 1e-12, "v must be non-increasing in R");
    }
    let saturated: Vec<_> = rows.iter().filter(|r| r.r >= threshold - 1e-12).collect();
    assert!(saturated.len() >= 4);
    let m_ref = saturated[0].mass;
    for row in &saturated {
        assert!((row.mass - m_ref).abs() <= 1e-3, "mass wanders past the threshold");
    }
    assert!(checks.iter().all(|c| c.pass), "scan checks: {checks:?}");
    println!(
        "[acceptance 09] PASS cap continuity: v-hat non-increasing over 10 caps, mass constant (= {m_ref:.6}) for R >= 2/ln3 = {threshold:.6}"
    );
}

#[test]
fn acceptance_10_kernel_identities_and_reference_regularity() {
    for domain in [GreenDomain::RightHalfPlane, GreenDomain::UnitDisk] {
        let reports = kernel_identity_checks(domain, 10_000, 1010);
        for r in &reports {
            assert!(r.pass, "{domain:?} kernel check {} failed: {:?}", r.name, r.values);
        }
    }
    let set = CompactSet::segments(&[(0.0, 1.0)]).unwrap();
    let rows = lambda_regularity(&set, &[1e-1, 1e-2, 1e-3, 1e-4], 801);
    for w in rows.windows(2) {
        assert!(w[1].1 < w[0].1);
    }
    let (eps, last) = *rows.last().unwrap();
    let closed_form = 2.0 * eps * (1.0 - eps.ln());
    assert!((last - closed_form).abs() <= 1e-10);
    assert!(last <= 0.01, "regularity tail {last}");
    println!(
        "[acceptance 10] PASS kernel identity suites (10^4 pairs per domain) and regularity tail {last:.4e} = 2e(1-ln e) at e = 1e-4"
    );
}

#[test]
fn acceptance_11_bitwise_reproducibility_of_shipped_configs() {
    let dir = configs_dir();
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("configs directory present")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    assert!(configs.len() >= 7, "expected the shipped config set, found {configs:?}");

    for cfg in &configs {
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_file(cfg, None, Some(da.path()), None).unwrap();
        run_file(cfg, None, Some(db.path()), None).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(da.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in &names {
            let a = std::fs::read(da.path().join(name)).unwrap();
            let b = std::fs::read(db.path().join(name)).unwrap_or_default();
            assert_eq!(a, b, "{}: {name} differs between identical runs", cfg.display());
        }
    }
    println!(
        "[acceptance 11] PASS bitwise reproducibility across {} shipped configs (two runs each)",
        configs.len()
    );
}
