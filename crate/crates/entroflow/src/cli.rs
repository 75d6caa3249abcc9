//! Batch front end: the run / sweep / check / oracle commands.
//!
//! Exit codes: 0 success, 1 config error, 2 step failure, 3 invariant
//! violation. The output directory is resolved as `ENTROFLOW_OUT` (env) over
//! `--out` over the config's `output.dir` over the working directory.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics;
use crate::graphs::{self, GraphKind, GraphSpec};
use crate::mesh::Mesh;
use crate::oracle::{self, SplitMix64};
use crate::output;
use crate::presets;
use crate::stepper::{Scheme, SweepParam, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STEP_FAILURE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Env var overriding the output directory for run and sweep.
pub const OUT_ENV: &str = "ENTROFLOW_OUT";
/// Env var making the check command run with corrupted solver tolerances;
/// the battery must then report violations (negative control).
pub const CORRUPT_ENV: &str = "ENTROFLOW_CORRUPT_TOLERANCE";

fn resolve_out_dir(config: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    match &config.out_dir {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("."),
    }
}

fn active_tolerances() -> Tolerances {
    if std::env::var(CORRUPT_ENV).is_ok_and(|v| !v.is_empty() && v != "0") {
        Tolerances::corrupted()
    } else {
        Tolerances::default()
    }
}

/// `run`: execute one configuration and write trajectory.csv,
/// diagnostics.csv and summary.json.
pub fn cmd_run(config_path: &Path, out_flag: Option<&Path>) -> i32 {
    let config = match RunConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = resolve_out_dir(&config, out_flag);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return EXIT_CONFIG;
    }
    let (mesh, params, data) = match config.build() {
        Ok(x) => x,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let scheme = match Scheme::new(&params, &data, &mesh) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = match scheme.run(config.t_final, config.n_steps) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("run aborted: {e}");
            return EXIT_STEP_FAILURE;
        }
    };
    let bounds = if outcome.failure.is_none() {
        match diagnostics::bound_tracker(&mesh, &params, &outcome.trajectory) {
            Ok(b) => Some(b),
            Err(e) => {
                eprintln!("bound tracker failed: {e}");
                return EXIT_STEP_FAILURE;
            }
        }
    } else {
        None
    };
    let write = (|| -> Result<(), crate::Error> {
        output::write_trajectory_csv(&out_dir.join("trajectory.csv"), &mesh, &outcome.trajectory)?;
        output::write_diagnostics_csv(
            &out_dir.join("diagnostics.csv"),
            &mesh,
            &params,
            &outcome.trajectory,
        )?;
        output::write_summary_json(
            &out_dir.join("summary.json"),
            &mesh,
            &params,
            &outcome,
            bounds.as_ref(),
        )?;
        Ok(())
    })();
    if let Err(e) = write {
        eprintln!("output error: {e}");
        return EXIT_CONFIG;
    }
    match &outcome.failure {
        None => {
            println!(
                "run ok: {} steps, h = {}, outputs in {}",
                outcome.trajectory.reports.len(),
                output::fmt_real(outcome.trajectory.h),
                out_dir.display()
            );
            EXIT_OK
        }
        Some(f) => {
            eprintln!("step {} failed: {}", f.step, f.message);
            EXIT_STEP_FAILURE
        }
    }
}

/// `sweep`: halving continuation over h, eps or tau.
pub fn cmd_sweep(
    config_path: &Path,
    param_name: &str,
    levels: usize,
    out_flag: Option<&Path>,
) -> i32 {
    let config = match RunConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let param = match SweepParam::parse(param_name) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if levels < 2 {
        eprintln!("config error: --levels must be at least 2");
        return EXIT_CONFIG;
    }
    let out_dir = resolve_out_dir(&config, out_flag);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return EXIT_CONFIG;
    }
    let (mesh, params, data) = match config.build() {
        Ok(x) => x,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rows = match crate::stepper::continuation(
        &params,
        &data,
        &mesh,
        config.t_final,
        config.n_steps,
        param,
        levels,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = output::write_sweep_csv(&out_dir.join("sweep.csv"), param, &rows) {
        eprintln!("output error: {e}");
        return EXIT_CONFIG;
    }
    let mut failed = false;
    for row in &rows {
        match &row.outcome {
            Ok(_) => println!(
                "level {}: {} = {}, {} steps ok",
                row.level,
                param.name(),
                output::fmt_real(row.value),
                row.n_steps
            ),
            Err(msg) => {
                eprintln!("level {} failed: {msg}", row.level);
                failed = true;
            }
        }
    }
    if failed {
        EXIT_STEP_FAILURE
    } else {
        EXIT_OK
    }
}

struct Check {
    failures: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check {
            failures: Vec::new(),
        }
    }

    fn assert(&mut self, ok: bool, clause: &str, detail: String) {
        if ok {
            println!("[check] ok: {clause} ({detail})");
        } else {
            println!("[check] VIOLATION: {clause} ({detail})");
            self.failures.push(format!("{clause}: {detail}"));
        }
    }

    fn note(&mut self, what: &str, detail: String) {
        println!("[check] measured: {what} ({detail})");
    }
}

/// `check`: the full invariant battery on the preset suite plus the scalar
/// operator properties. Returns nonzero on any violation, naming the clause.
pub fn cmd_check() -> i32 {
    let mut check = Check::new();
    let tol = active_tolerances();

    graph_property_battery(&mut check);
    regularized_log_battery(&mut check);
    mesh_battery(&mut check);
    preset_battery(&mut check, &tol);
    measurement_battery(&mut check);

    if check.failures.is_empty() {
        println!("[check] all clauses passed");
        EXIT_OK
    } else {
        eprintln!("[check] {} violation(s):", check.failures.len());
        for f in &check.failures {
            eprintln!("[check]   {f}");
        }
        EXIT_VIOLATION
    }
}

fn graph_property_battery(check: &mut Check) {
    let mut rng = SplitMix64::new(0x6e74726f);
    for graph in GraphKind::ALL {
        let g = GraphSpec::new(graph);
        let mut max_prox_excess: f64 = 0.0;
        let mut prox_monotone = true;
        let mut max_yosida_excess: f64 = 0.0;
        for _ in 0..1000 {
            let eps = rng.uniform(0.02, 1.0);
            let r = rng.uniform(-10.0, 10.0);
            let s = rng.uniform(-10.0, 10.0);
            let (jr, js) = (graphs::prox(g, eps, r), graphs::prox(g, eps, s));
            let (yr, ys) = (graphs::yosida(g, eps, r), graphs::yosida(g, eps, s));
            let (jr, js, yr, ys) = match (jr, js, yr, ys) {
                (Ok(a), Ok(b), Ok(c), Ok(d)) => (a, b, c, d),
                _ => {
                    check.assert(false, "resolvent solve", format!("{graph:?} failed"));
                    return;
                }
            };
            max_prox_excess = max_prox_excess.max((jr - js).abs() - (r - s).abs());
            if (jr - js) * (r - s) < -1e-10 {
                prox_monotone = false;
            }
            max_yosida_excess =
                max_yosida_excess.max((yr - ys).abs() - (r - s).abs() / eps * (1.0 + 1e-10));
        }
        check.assert(
            max_prox_excess <= 1e-10 && prox_monotone,
            "resolvent is monotone and 1-Lipschitz",
            format!("{graph:?}, excess {max_prox_excess:.2e}"),
        );
        check.assert(
            max_yosida_excess <= 1e-9,
            "Yosida map is (1/eps)-Lipschitz",
            format!("{graph:?}, excess {max_yosida_excess:.2e}"),
        );

        // envelope derivative against the Yosida map
        let step = 1e-4;
        let mut worst_fd: f64 = 0.0;
        for i in 0..200 {
            let eps = if i % 2 == 0 { 0.5 } else { 0.1 };
            let r = -4.0 + 8.0 * (i as f64 + 0.5) / 200.0;
            if graph == GraphKind::Indicator && (r.abs() - 1.0).abs() < 2.0 * step {
                continue;
            }
            let d = (graphs::moreau(g, eps, r + step).unwrap()
                - graphs::moreau(g, eps, r - step).unwrap())
                / (2.0 * step);
            let y = graphs::yosida(g, eps, r).unwrap();
            worst_fd = worst_fd.max((d - y).abs() / y.abs().max(1.0));
        }
        check.assert(
            worst_fd <= 1e-6,
            "envelope derivative matches Yosida map",
            format!("{graph:?}, max error {worst_fd:.2e}"),
        );

        // envelope squeeze and exact zeros
        let mut squeeze_ok = true;
        for i in 0..200 {
            let eps = if i % 2 == 0 { 0.3 } else { 0.05 };
            let r = -2.0 + 4.0 * (i as f64 + 0.5) / 200.0;
            let env = graphs::moreau(g, eps, r).unwrap();
            if env < 0.0 {
                squeeze_ok = false;
            }
            if let graphs::Extended::Finite(pot) = graphs::betahat(g, r) {
                if env > pot + 1e-12 {
                    squeeze_ok = false;
                }
            }
        }
        check.assert(
            squeeze_ok,
            "0 <= envelope <= potential",
            format!("{graph:?}"),
        );
        check.assert(
            graphs::yosida(g, 0.37, 0.0).unwrap() == 0.0
                && graphs::moreau(g, 0.37, 0.0).unwrap() == 0.0,
            "Yosida map and envelope vanish exactly at 0",
            format!("{graph:?}"),
        );
    }

    // resolvent against the brute-force minimizer
    let all = [
        GraphSpec::new(GraphKind::Regular),
        GraphSpec::new(GraphKind::Logarithmic),
        GraphSpec::new(GraphKind::Indicator),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = all[(rng.next_u64() % 3) as usize];
        let eps = rng.uniform(0.02, 1.0);
        let r = rng.uniform(-10.0, 10.0);
        let fast = graphs::prox(g, eps, r).unwrap();
        let brute = oracle::prox_bruteforce(g, eps, r);
        worst = worst.max((fast - brute).abs());
    }
    check.assert(
        worst <= 1e-8,
        "resolvent matches brute-force minimizer",
        format!("max gap {worst:.2e} over 100 triples"),
    );
}

fn regularized_log_battery(check: &mut Check) {
    let mut worst_residual: f64 = 0.0;
    let mut min_deriv_margin: f64 = f64::INFINITY;
    for eps in [1.0, 0.1, 0.01] {
        let reg = graphs::RegularizedLog::new(eps);
        for i in 0..1000 {
            let r = -10.0 + 20.0 * (i as f64 + 0.5) / 1000.0;
            let rho = reg.rho(r).unwrap();
            let x = reg.ln_eps(r).unwrap();
            worst_residual = worst_residual.max((rho + eps * x - r).abs() / r.abs().max(1.0));
            min_deriv_margin = min_deriv_margin.min(reg.deriv(r).unwrap() - eps);
        }
    }
    check.assert(
        worst_residual <= 1e-12,
        "log resolvent residual",
        format!("max {worst_residual:.2e} relative"),
    );
    check.assert(
        min_deriv_margin >= 0.0,
        "regularized log derivative >= eps",
        format!("min margin {min_deriv_margin:.2e}"),
    );
    let reg = graphs::RegularizedLog::new(0.2);
    let pts: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.2).collect();
    let fd = oracle::fd_check(
        |r| reg.eval(r).unwrap(),
        |r| reg.deriv(r).unwrap(),
        &pts,
        1e-5,
    );
    check.assert(
        fd <= 1e-6,
        "regularized log derivative matches finite differences",
        format!("max error {fd:.2e}"),
    );
}

fn mesh_battery(check: &mut Check) {
    let mesh = Mesh::new(64, 1.0, 1.0, 1.0).unwrap();
    let n = mesh.n_nodes();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).sin()).collect();
    let kx = mesh.apply_stiffness(&x);
    let g: Vec<f64> = (0..n).map(|i| x[i] + kx[i] / mesh.lumped_mass()[i]).collect();
    let back = mesh.neumann_green(&g);
    let inv_gap = back
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    check.assert(
        inv_gap <= 1e-12,
        "Green operator inverts 1 - discrete Laplacian",
        format!("max gap {inv_gap:.2e}"),
    );

    let y: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.13).cos()).collect();
    let sym_gap =
        (mesh.mass_inner(&x, &mesh.neumann_green(&y)) - mesh.mass_inner(&y, &mesh.neumann_green(&x)))
            .abs();
    check.assert(
        sym_gap <= 1e-12,
        "Green operator is self-adjoint in the M-inner product",
        format!("gap {sym_gap:.2e}"),
    );

    let v = mesh.project_zero_mean(&x);
    let w = mesh.zero_mean_green(&v).unwrap();
    let kw = mesh.apply_stiffness(&w);
    let res = (0..n)
        .map(|i| (kw[i] - mesh.lumped_mass()[i] * v[i]).abs())
        .fold(0.0f64, f64::max);
    check.assert(
        res <= 1e-10,
        "inverse Neumann Laplacian residual",
        format!("max {res:.2e}"),
    );
}

fn preset_battery(check: &mut Check, tol: &Tolerances) {
    for (name, config) in presets::preset_suite() {
        let (mesh, params, data) = match config.build() {
            Ok(x) => x,
            Err(e) => {
                check.assert(false, "preset build", format!("{name}: {e}"));
                continue;
            }
        };
        let scheme = match Scheme::new(&params, &data, &mesh) {
            Ok(s) => s.with_tolerances(tol.clone()),
            Err(e) => {
                check.assert(false, "preset scheme", format!("{name}: {e}"));
                continue;
            }
        };
        let outcome = match scheme.run(config.t_final, config.n_steps) {
            Ok(o) => o,
            Err(e) => {
                check.assert(false, "preset run", format!("{name}: {e}"));
                continue;
            }
        };
        check.assert(
            outcome.failure.is_none(),
            "preset run completes",
            name.clone(),
        );
        if outcome.failure.is_some() {
            continue;
        }
        let traj = &outcome.trajectory;
        let initial = &traj.states[0];
        let c0 = diagnostics::conserved_total(&mesh, &initial.phi, &initial.mu, traj.h);
        let denom = c0.abs().max(1.0);
        let mut max_drift: f64 = 0.0;
        let mut min_slack = f64::INFINITY;
        let mut max_gap: f64 = 0.0;
        let mut max_residual: f64 = 0.0;
        let mut max_ratio_excess = f64::NEG_INFINITY;
        let mut min_rho = f64::INFINITY;
        for report in &traj.reports {
            max_drift = max_drift.max((report.conserved - c0).abs() / denom);
            min_slack = min_slack
                .min(report.slack_temperature)
                .min(report.slack_subgradient)
                .min(report.slack_energy);
            max_gap = max_gap.max(report.identity_gap).max(report.flux_identity_gap);
            max_residual = max_residual.max(report.scheme_residual);
            min_rho = min_rho.min(report.min_rho);
            let q = report.contraction_factor;
            for r in report.ratios.iter().skip(2) {
                max_ratio_excess = max_ratio_excess.max(r - q * (1.0 + 1e-6));
            }
        }
        check.assert(
            max_drift <= 1e-10,
            "conserved total drift <= 1e-10",
            format!("{name}: {max_drift:.2e}"),
        );
        check.assert(
            min_slack >= -1e-9,
            "per-step inequality slacks >= -1e-9",
            format!("{name}: min {min_slack:.2e}"),
        );
        check.assert(
            max_gap <= 1e-9,
            "per-step identities hold to 1e-9",
            format!("{name}: max gap {max_gap:.2e}"),
        );
        check.assert(
            max_residual <= 1e-10,
            "scheme residuals <= 1e-10",
            format!("{name}: max {max_residual:.2e}"),
        );
        check.assert(
            min_rho > 0.0,
            "log resolvent of the temperature stays positive",
            format!("{name}: min {min_rho:.2e}"),
        );
        check.assert(
            max_ratio_excess <= 0.0 || max_ratio_excess == f64::NEG_INFINITY,
            "fixed-point ratios below the contraction factor",
            format!("{name}: max excess {max_ratio_excess:.2e}"),
        );
        if name.starts_with("stationary") {
            let last = traj.states.last().unwrap();
            let mut drift: f64 = 0.0;
            for i in 0..mesh.n_nodes() {
                drift = drift
                    .max((last.theta[i] - initial.theta[i]).abs())
                    .max((last.phi[i] - initial.phi[i]).abs());
            }
            check.assert(
                drift <= 1e-10,
                "stationary data reproduce the initial state",
                format!("{name}: drift {drift:.2e}"),
            );
            let min_theta = traj
                .reports
                .iter()
                .map(|r| r.min_theta)
                .fold(f64::INFINITY, f64::min);
            check.assert(
                min_theta >= data.theta_min * (1.0 - 1e-6),
                "temperature stays above its lower bound",
                format!("{name}: min {min_theta:.6}"),
            );
        }
    }
}

fn measurement_battery(check: &mut Check) {
    for graph in GraphKind::ALL {
        for eps in [0.1, 0.05, 0.025] {
            let c = diagnostics::coercivity_constant(GraphSpec::new(graph), eps, 1.0, 5.0, 1000)
                .unwrap();
            check.note(
                "coercivity constant",
                format!("{graph:?}, eps = {eps}: C = {c:.6}"),
            );
        }
    }
    let mesh = Mesh::new(64, 1.0, 1.0, 1.0).unwrap();
    let (c1, c2) = diagnostics::trace_equivalence_constants(&mesh, 100);
    check.note(
        "trace/norm equivalence constants",
        format!("c1 = {c1:.6}, c2 = {c2:.6}"),
    );
    check.assert(
        c1 > 0.0 && c1 <= c2,
        "trace equivalence constants are ordered",
        format!("c1 = {c1:.6}, c2 = {c2:.6}"),
    );
}

/// `oracle`: randomized dense-vs-stepper comparisons plus the brute-force
/// resolvent sweep. Deterministic for a fixed seed.
pub fn cmd_oracle(seed: u64, cases: usize) -> i32 {
    let mut rng = SplitMix64::new(seed);
    let mut violations = 0usize;
    println!("oracle report (seed {seed}, {cases} cases per graph)");
    for graph in GraphKind::ALL {
        let mut worst = 0.0f64;
        let mut damping = 0usize;
        for case in 0..cases {
            let (p, data, mesh, state, h) = oracle::random_step_case(graph, &mut rng);
            let scheme = match Scheme::new(&p, &data, &mesh) {
                Ok(s) => s,
                Err(e) => {
                    println!("  {graph:?} case {case}: setup failed: {e}");
                    violations += 1;
                    continue;
                }
            };
            let fp = match scheme.fixed_point_step(&state, (0.0, h)) {
                Ok(f) => f,
                Err(e) => {
                    println!("  {graph:?} case {case}: stepper failed: {e}");
                    violations += 1;
                    continue;
                }
            };
            let mu = crate::stepper::reconstruct_mu(&mesh, &state.mu, &state.phi, &fp.phi, h);
            let problem = oracle::DenseStepProblem {
                params: &p,
                data: &data,
                mesh: &mesh,
                state: &state,
                window: (0.0, h),
            };
            match oracle::dense_step_solve(&problem) {
                Ok((theta_d, phi_d, mu_d, stats)) => {
                    damping += stats.damping_events;
                    let mut gap = 0.0f64;
                    for i in 0..mesh.n_nodes() {
                        gap = gap
                            .max((fp.theta[i] - theta_d[i]).abs())
                            .max((fp.phi[i] - phi_d[i]).abs())
                            .max((mu[i] - mu_d[i]).abs());
                    }
                    worst = worst.max(gap);
                    if gap > 1e-9 {
                        println!("  {graph:?} case {case}: gap {gap:.3e} exceeds 1e-9");
                        violations += 1;
                    }
                }
                Err(e) => {
                    println!("  {graph:?} case {case}: dense solve failed: {e}");
                    violations += 1;
                }
            }
        }
        println!(
            "  {graph:?}: max state gap {} over {cases} cases, {damping} damping events",
            output::fmt_real(worst)
        );
    }

    let all = [
        GraphSpec::new(GraphKind::Regular),
        GraphSpec::new(GraphKind::Logarithmic),
        GraphSpec::new(GraphKind::Indicator),
    ];
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = all[(rng.next_u64() % 3) as usize];
        let eps = rng.uniform(0.02, 1.0);
        let r = rng.uniform(-10.0, 10.0);
        let gap = (graphs::prox(g, eps, r).unwrap() - oracle::prox_bruteforce(g, eps, r)).abs();
        worst = worst.max(gap);
        if gap > 1e-8 {
            println!("  resolvent vs brute force: gap {gap:.3e} at {g:?} eps={eps} r={r}");
            violations += 1;
        }
    }
    println!(
        "  resolvent vs brute force: max gap {} over 100 triples",
        output::fmt_real(worst)
    );

    if violations == 0 {
        println!("oracle: all comparisons within tolerance");
        EXIT_OK
    } else {
        eprintln!("oracle: {violations} violation(s)");
        EXIT_VIOLATION
    }
}
