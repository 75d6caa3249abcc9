//! Built-in run configurations used by the check command, the acceptance
//! suite and as starting points for user configs.

use crate::config::{Profile, RunConfig};
use crate::graphs::{GraphKind, GraphSpec, LatentHeat};
use crate::stepper::{step_guard, PhysParams, Source, TimeFunction, STEP_SAFETY};

fn base_params(graph: GraphKind, tau: f64, eps: f64) -> PhysParams {
    PhysParams {
        c_s: 1.0,
        eta: 1.0,
        gamma: 1.0,
        tau,
        eps,
        graph: GraphSpec::new(graph),
        latent: LatentHeat::default(),
        theta_a: 0.25,
        theta_b: 0.5,
    }
}

/// Final time for `n_steps` steps at the maximal admissible step size.
fn guarded_t_final(params: &PhysParams, n_steps: usize) -> f64 {
    let guard = step_guard(params).expect("preset parameters admit a step guard");
    STEP_SAFETY * guard.h0 * n_steps as f64
}

/// Constant-compatible data: `theta = theta_a`, `phi = 0`, `mu = 0` is a
/// fixed point of the scheme (the chemical potential
/// `beta_eps(0) + sigma'(0) - lambda_eps'(0) theta` vanishes), so the run
/// reproduces its initial state.
pub fn stationary(graph: GraphKind) -> RunConfig {
    let params = base_params(graph, 0.1, 0.1);
    let theta_bar = params.theta_a;
    let n_steps = 50;
    let t_final = guarded_t_final(&params, n_steps);
    RunConfig {
        n_cells: 64,
        length: 1.0,
        t_final,
        n_steps,
        params,
        alpha0: 1.0,
        alpha1: 1.0,
        alpha_min: 0.5,
        alpha_max: 2.0,
        theta_min: theta_bar,
        theta_max: 4.0,
        theta_gamma: [
            TimeFunction::Constant(theta_bar),
            TimeFunction::Constant(theta_bar),
        ],
        source: Source::zero(),
        init_theta: Profile::Constant(theta_bar),
        init_phi: Profile::Constant(0.0),
        mu0: 0.0,
        out_dir: None,
        seed: 0,
    }
}

/// Smooth nonstationary data on 64 cells: cosine initial profiles, constant
/// exterior temperatures and a sinusoidal source over one period.
pub fn smooth(graph: GraphKind) -> RunConfig {
    let params = base_params(graph, 0.1, 0.1);
    let n_steps = 128;
    let t_final = guarded_t_final(&params, n_steps);
    RunConfig {
        n_cells: 64,
        length: 1.0,
        t_final,
        n_steps,
        params,
        alpha0: 1.0,
        alpha1: 1.5,
        alpha_min: 0.5,
        alpha_max: 2.0,
        theta_min: 0.2,
        theta_max: 4.0,
        theta_gamma: [TimeFunction::Constant(1.1), TimeFunction::Constant(0.9)],
        source: Source {
            time: TimeFunction::Sinusoid {
                base: 0.0,
                amplitude: 0.5,
                period: t_final,
                phase: 0.0,
            },
            spatial_mode: 1,
        },
        init_theta: Profile::Cosine {
            base: 1.0,
            amplitude: 0.2,
            mode: 1,
        },
        init_phi: Profile::Cosine {
            base: 0.1,
            amplitude: 0.4,
            mode: 1,
        },
        mu0: 0.0,
        out_dir: None,
        seed: 0,
    }
}

/// Configuration that makes the fixed point iterate visibly: with a linear
/// latent heat (`a2 = 0`) the factor `lambda_eps'(phi)` sits exactly at its
/// supremum, so the measured contraction ratios approach the theoretical
/// factor instead of collapsing orders of magnitude below it.
pub fn contraction(graph: GraphKind) -> RunConfig {
    let params = PhysParams {
        latent: LatentHeat::new(1.0, 0.0),
        ..base_params(graph, 0.1, 0.5)
    };
    let n_steps = 128;
    let t_final = guarded_t_final(&params, n_steps);
    let mut config = smooth(graph);
    config.params = params;
    config.n_steps = n_steps;
    config.t_final = t_final;
    config.source = Source {
        time: TimeFunction::Sinusoid {
            base: 0.0,
            amplitude: 0.5,
            period: t_final,
            phase: 0.0,
        },
        spatial_mode: 1,
    };
    config
}

/// Lighter configuration intended as the base of continuation sweeps:
/// fewer cells and steps, and a viscosity large enough that halving
/// schedules stay affordable.
pub fn sweep_base(graph: GraphKind) -> RunConfig {
    let params = base_params(graph, 0.2, 0.1);
    let n_steps = 64;
    let t_final = guarded_t_final(&params, n_steps);
    let mut config = smooth(graph);
    config.n_cells = 32;
    config.params = params;
    config.n_steps = n_steps;
    config.t_final = t_final;
    config.source = Source {
        time: TimeFunction::Sinusoid {
            base: 0.0,
            amplitude: 0.5,
            period: t_final,
            phase: 0.0,
        },
        spatial_mode: 1,
    };
    config
}

/// Base configuration for viscosity sweeps. The viscosity starts small
/// relative to the relaxation rates of the active modes, so the tracked
/// a-priori quantities vary little across a halving schedule (they are
/// bounded uniformly in the viscosity, but individual rows pick up
/// `1 + tau k^2` rate factors when `tau` is comparable to the mode scale).
pub fn sweep_tau_base(graph: GraphKind) -> RunConfig {
    let mut config = sweep_base(graph);
    config.params.tau = 0.02;
    let n_steps = 64;
    let t_final = guarded_t_final(&config.params, n_steps);
    config.n_steps = n_steps;
    config.t_final = t_final;
    config.source = Source {
        time: TimeFunction::Sinusoid {
            base: 0.0,
            amplitude: 0.5,
            period: t_final,
            phase: 0.0,
        },
        spatial_mode: 1,
    };
    config
}

/// The preset battery exercised by the check command.
pub fn preset_suite() -> Vec<(String, RunConfig)> {
    let mut suite = Vec::new();
    for graph in GraphKind::ALL {
        suite.push((format!("stationary_{}", graph.name()), stationary(graph)));
    }
    for graph in GraphKind::ALL {
        suite.push((format!("smooth_{}", graph.name()), smooth(graph)));
    }
    for graph in GraphKind::ALL {
        suite.push((format!("contraction_{}", graph.name()), contraction(graph)));
    }
    suite
}
