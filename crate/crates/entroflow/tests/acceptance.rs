//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).

use std::time::Instant;

use entroflow::diagnostics;
use entroflow::graphs::{self, GraphKind, GraphSpec};
use entroflow::oracle::{self, SplitMix64};
use entroflow::presets;
use entroflow::stepper::{
    contraction_bound, continuation, reconstruct_mu, step_guard, Scheme, SweepParam, STEP_SAFETY,
};

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[acceptance] {criterion}: {verdict} — {detail}");
    assert!(pass, "{criterion} FAILED: {detail}");
}

/// Criterion 1: 20 randomized single-step problems per graph kind on 3-node
/// meshes; stepper vs dense coupled solve agree to 1e-9 in the max norm over
/// theta, phi, mu. Runtime < 10 s.
#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xACCE01);
    let mut worst: f64 = 0.0;
    for graph in GraphKind::ALL {
        for _ in 0..20 {
            let (p, data, mesh, state, h) = oracle::random_step_case(graph, &mut rng);
            let scheme = Scheme::new(&p, &data, &mesh).unwrap();
            let fp = scheme.fixed_point_step(&state, (0.0, h)).unwrap();
            let mu = reconstruct_mu(&mesh, &state.mu, &state.phi, &fp.phi, h);
            let problem = oracle::DenseStepProblem {
                params: &p,
                data: &data,
                mesh: &mesh,
                state: &state,
                window: (0.0, h),
            };
            let (theta_d, phi_d, mu_d, _) = oracle::dense_step_solve(&problem).unwrap();
            for i in 0..mesh.n_nodes() {
                worst = worst
                    .max((fp.theta[i] - theta_d[i]).abs())
                    .max((fp.phi[i] - phi_d[i]).abs())
                    .max((mu[i] - mu_d[i]).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 1 (oracle equivalence)",
        worst <= 1e-9 && elapsed < 10.0,
        &format!("max gap {worst:.3e} over 60 cases in {elapsed:.2} s"),
    );
}

/// Criterion 2: a 100-step run on 64 cells per graph kind keeps the relative
/// drift of the conserved total below 1e-10. Runtime < 30 s.
#[test]
fn criterion_2_conservation() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for graph in GraphKind::ALL {
        let config = presets::smooth(graph);
        assert_eq!(config.n_cells, 64);
        let (mesh, params, data) = config.build().unwrap();
        let scheme = Scheme::new(&params, &data, &mesh).unwrap();
        let n_steps = 100;
        let out = scheme.run(config.h() * n_steps as f64, n_steps).unwrap();
        assert!(out.failure.is_none(), "{graph:?}: {:?}", out.failure);
        let initial = &out.trajectory.states[0];
        let c0 = diagnostics::conserved_total(&mesh, &initial.phi, &initial.mu, out.trajectory.h);
        for report in &out.trajectory.reports {
            worst = worst.max((report.conserved - c0).abs() / c0.abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 2 (conservation)",
        worst <= 1e-10 && elapsed < 30.0,
        &format!("max relative drift {worst:.3e} over 3 x 100 steps in {elapsed:.2} s"),
    );
}

/// Criterion 3: over at least 100 accepted steps at h = 0.5 h0, every
/// measured fixed-point ratio beyond the 2-iteration burn-in stays below
/// 2 sup|lambda_eps'|^2 h / (c_s eps tau) * (1 + 1e-6).
#[test]
fn criterion_3_contraction_bound() {
    let mut total_measured = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    for graph in GraphKind::ALL {
        let config = presets::contraction(graph);
        let (mesh, params, data) = config.build().unwrap();
        let guard = step_guard(&params).unwrap();
        assert!((config.h() - STEP_SAFETY * guard.h0).abs() <= 1e-12 * config.h());
        let q = contraction_bound(&params, config.h());
        let scheme = Scheme::new(&params, &data, &mesh).unwrap();
        let out = scheme.run(config.t_final, config.n_steps).unwrap();
        assert!(out.failure.is_none(), "{graph:?}: {:?}", out.failure);
        assert!(out.trajectory.reports.len() >= 100);
        for report in &out.trajectory.reports {
            for ratio in report.ratios.iter().skip(2) {
                total_measured += 1;
                worst_margin = worst_margin.max(ratio - q * (1.0 + 1e-6));
            }
        }
    }
    report(
        "criterion 3 (contraction bound)",
        total_measured > 0 && worst_margin <= 0.0,
        &format!("{total_measured} measured ratios, worst margin {worst_margin:.3e}"),
    );
}

/// Criterion 4: resolvent and Yosida properties, envelope-derivative match,
/// exact zeros, and agreement with the brute-force minimizer. Runtime < 5 s.
#[test]
fn criterion_4_graph_property_suite() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xACCE04);
    let all = [
        GraphSpec::new(GraphKind::Regular),
        GraphSpec::new(GraphKind::Logarithmic),
        GraphSpec::new(GraphKind::Indicator),
    ];
    for g in all {
        for _ in 0..1000 {
            let eps = rng.uniform(0.02, 1.0);
            let r = rng.uniform(-10.0, 10.0);
            let s = rng.uniform(-10.0, 10.0);
            let jr = graphs::prox(g, eps, r).unwrap();
            let js = graphs::prox(g, eps, s).unwrap();
            assert!((jr - js).abs() <= (r - s).abs() + 1e-10, "{g:?} 1-Lipschitz");
            assert!((jr - js) * (r - s) >= -1e-10, "{g:?} monotone");
            let yr = graphs::yosida(g, eps, r).unwrap();
            let ys = graphs::yosida(g, eps, s).unwrap();
            assert!(
                (yr - ys).abs() <= (r - s).abs() / eps * (1.0 + 1e-10) + 1e-9,
                "{g:?} (1/eps)-Lipschitz"
            );
        }
        // envelope derivative against the Yosida map
        let step = 1e-4;
        for i in 0..200 {
            let eps = if i % 2 == 0 { 0.5 } else { 0.1 };
            let r = -4.0 + 8.0 * (i as f64 + 0.5) / 200.0;
            if g.kind == GraphKind::Indicator && (r.abs() - 1.0).abs() < 2.0 * step {
                continue;
            }
            let fd = (graphs::moreau(g, eps, r + step).unwrap()
                - graphs::moreau(g, eps, r - step).unwrap())
                / (2.0 * step);
            let y = graphs::yosida(g, eps, r).unwrap();
            assert!(
                (fd - y).abs() <= 1e-6 * y.abs().max(1.0),
                "{g:?} envelope derivative at {r}"
            );
        }
        // squeeze and exact zeros
        for i in 0..200 {
            let eps = if i % 2 == 0 { 0.3 } else { 0.05 };
            let r = -2.0 + 4.0 * (i as f64 + 0.5) / 200.0;
            let env = graphs::moreau(g, eps, r).unwrap();
            assert!(env >= 0.0);
            if let graphs::Extended::Finite(pot) = graphs::betahat(g, r) {
                assert!(env <= pot + 1e-12);
            }
        }
        assert_eq!(graphs::yosida(g, 0.41, 0.0).unwrap(), 0.0);
        assert_eq!(graphs::moreau(g, 0.41, 0.0).unwrap(), 0.0);
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = all[(rng.next_u64() % 3) as usize];
        let eps = rng.uniform(0.02, 1.0);
        let r = rng.uniform(-10.0, 10.0);
        worst =
            worst.max((graphs::prox(g, eps, r).unwrap() - oracle::prox_bruteforce(g, eps, r)).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 4 (graph property suite)",
        worst <= 1e-8 && elapsed < 5.0,
        &format!("brute-force max gap {worst:.3e}, {elapsed:.2} s"),
    );
}

/// Criterion 5: log-resolvent residuals below 1e-12*max(1,|r|) on 1000
/// samples for eps in {1, 0.1, 0.01}; Ln_eps' >= eps everywhere; derivative
/// matches finite differences to 1e-6.
#[test]
fn criterion_5_regularized_log() {
    let mut worst_residual: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for eps in [1.0, 0.1, 0.01] {
        let reg = graphs::RegularizedLog::new(eps);
        for i in 0..1000 {
            let r = -10.0 + 20.0 * (i as f64 + 0.5) / 1000.0;
            let rho = reg.rho(r).unwrap();
            let x = reg.ln_eps(r).unwrap();
            worst_residual = worst_residual.max((rho + eps * x - r).abs() / r.abs().max(1.0));
            min_margin = min_margin.min(reg.deriv(r).unwrap() - eps);
        }
    }
    let mut worst_fd: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let reg = graphs::RegularizedLog::new(eps);
        let pts: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        worst_fd = worst_fd.max(oracle::fd_check(
            |r| reg.eval(r).unwrap(),
            |r| reg.deriv(r).unwrap(),
            &pts,
            1e-5,
        ));
    }
    report(
        "criterion 5 (regularized log)",
        worst_residual <= 1e-12 && min_margin >= 0.0 && worst_fd <= 1e-6,
        &format!(
            "max residual {worst_residual:.3e}, min derivative margin {min_margin:.3e}, fd error {worst_fd:.3e}"
        ),
    );
}

/// Criterion 6: the three per-step inequality slacks stay above -1e-9 on
/// every accepted step of the full preset suite.
#[test]
fn criterion_6_per_step_slacks() {
    let mut min_slack = f64::INFINITY;
    for (name, config) in presets::preset_suite() {
        let (mesh, params, data) = config.build().unwrap();
        let scheme = Scheme::new(&params, &data, &mesh).unwrap();
        let out = scheme.run(config.t_final, config.n_steps).unwrap();
        assert!(out.failure.is_none(), "{name} failed: {:?}", out.failure);
        for report in &out.trajectory.reports {
            min_slack = min_slack
                .min(report.slack_temperature)
                .min(report.slack_subgradient)
                .min(report.slack_energy);
        }
    }
    report(
        "criterion 6 (per-step inequality slacks)",
        min_slack >= -1e-9,
        &format!("min slack {min_slack:.3e} over the preset suite"),
    );
}

/// Criterion 7: eps-halving and h-halving over 3 levels give strictly
/// decreasing pairwise trajectory differences in the discrete L2(0,T;H)
/// metric; a tau-halving over 3 levels keeps every uniform a-priori row
/// within 2x of the first level, with the regularized-log time-derivative
/// rows normalized by (1 + 1/tau). Runtime < 5 min total.
#[test]
fn criterion_7_continuation_studies() {
    let start = Instant::now();
    for graph in GraphKind::ALL {
        for param in [SweepParam::Eps, SweepParam::H] {
            let config = presets::sweep_base(graph);
            let (mesh, params, data) = config.build().unwrap();
            let rows = continuation(
                &params,
                &data,
                &mesh,
                config.t_final,
                config.n_steps,
                param,
                3,
            )
            .unwrap();
            let diffs: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.diff_from_prev.map(|d| d.l2_state))
                .collect();
            assert_eq!(diffs.len(), 2, "{graph:?} {param:?}");
            assert!(
                diffs[1] < diffs[0],
                "{graph:?} {:?}: state differences not strictly decreasing: {diffs:?}",
                param
            );
            let phi_diffs: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.diff_from_prev.map(|d| d.l2_phi))
                .collect();
            assert!(
                phi_diffs[1] < phi_diffs[0],
                "{graph:?} {:?}: phase differences not strictly decreasing: {phi_diffs:?}",
                param
            );
        }

        // tau sweep: uniform rows within 2x of the first level
        let config = presets::sweep_tau_base(graph);
        let (mesh, params, data) = config.build().unwrap();
        let rows = continuation(
            &params,
            &data,
            &mesh,
            config.t_final,
            config.n_steps,
            SweepParam::Tau,
            3,
        )
        .unwrap();
        let mut level0_uniform: Vec<f64> = Vec::new();
        let mut level0_weighted: Vec<f64> = Vec::new();
        for row in &rows {
            let (_, bounds) = row.outcome.as_ref().expect("tau level failed");
            let uniform = bounds.uniform_rows();
            let weighted = bounds.tau_weighted_rows();
            let weight = 1.0 + 1.0 / row.value;
            if row.level == 0 {
                level0_uniform = uniform.iter().map(|(_, v)| *v).collect();
                level0_weighted = weighted.iter().map(|(_, v)| v / weight).collect();
                continue;
            }
            for (i, (name, value)) in uniform.iter().enumerate() {
                assert!(
                    *value <= 2.0 * level0_uniform[i] + 1e-30,
                    "{graph:?} tau={}: uniform row {name} = {value:.6e} exceeds 2x level 0 ({:.6e})",
                    row.value,
                    level0_uniform[i]
                );
            }
            for (i, (name, value)) in weighted.iter().enumerate() {
                let normalized = value / weight;
                assert!(
                    normalized <= 2.0 * level0_weighted[i] + 1e-30,
                    "{graph:?} tau={}: weighted row {name} = {normalized:.6e} exceeds 2x level 0 ({:.6e})",
                    row.value,
                    level0_weighted[i]
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "criterion 7 (continuation studies)",
        elapsed < 300.0,
        &format!("eps/h differences strictly decreasing, tau rows bounded; {elapsed:.1} s"),
    );
}

/// Criterion 8: constant-compatible data reproduce the initial state for 50
/// steps to 1e-10 and the temperature never leaves its lower bound.
#[test]
fn criterion_8_stationary_preservation() {
    let mut worst_drift: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for graph in GraphKind::ALL {
        let config = presets::stationary(graph);
        assert_eq!(config.n_steps, 50);
        let (mesh, params, data) = config.build().unwrap();
        let scheme = Scheme::new(&params, &data, &mesh).unwrap();
        let out = scheme.run(config.t_final, config.n_steps).unwrap();
        assert!(out.failure.is_none(), "{graph:?}: {:?}", out.failure);
        let initial = &out.trajectory.states[0];
        for state in &out.trajectory.states {
            for i in 0..mesh.n_nodes() {
                worst_drift = worst_drift
                    .max((state.theta[i] - initial.theta[i]).abs())
                    .max((state.phi[i] - initial.phi[i]).abs())
                    .max((state.mu[i] - initial.mu[i]).abs());
            }
        }
        let min_theta = out
            .trajectory
            .reports
            .iter()
            .map(|r| r.min_theta)
            .fold(f64::INFINITY, f64::min);
        min_margin = min_margin.min(min_theta - data.theta_min * (1.0 - 1e-6));
    }
    report(
        "criterion 8 (stationary preservation)",
        worst_drift <= 1e-10 && min_margin >= 0.0,
        &format!("max drift {worst_drift:.3e}, temperature margin {min_margin:.3e}"),
    );
}
