//! Conserved quantities, energy records and per-step inequality checks on
//! computed trajectories.
//!
//! Everything here is evaluated on solver output; the slacks quantify, up to
//! solve tolerances and roundoff, inequalities that hold exactly for the
//! discrete scheme:
//!
//! * conservation of the mean of `phi + h mu`;
//! * the temperature convexity estimate built on `e^x (x - y) >= e^x - e^y`;
//! * the subgradient inequality
//!   `(beta_eps(a), a - b) >= int betahat_eps(a) - int betahat_eps(b)`;
//! * the per-step energy inequality with its explicit constants;
//! * the exact testing identity obtained by pairing the phase equation with
//!   `phi_{n+1} - phi_n` and the potential update with the inverse Neumann
//!   Laplacian;
//! * the flux identity `h ||grad mu_{n+1}||^2 = h ||dphi/h + dmu||_{V0*}^2`.

use crate::graphs::{self, GraphSpec};
use crate::mesh::Mesh;
use crate::stepper::{PhysParams, State, Trajectory};
use crate::Error;

/// Mean of `phi + h mu` over the domain: `(1/L) sum_i M_i (phi_i + h mu_i)`.
/// Constant along any successful run.
pub fn conserved_total(mesh: &Mesh, phi: &[f64], mu: &[f64], h: f64) -> f64 {
    let combined: Vec<f64> = phi.iter().zip(mu.iter()).map(|(p, m)| p + h * m).collect();
    mesh.mean(&combined)
}

/// Energy functional at one level:
/// `gamma/2 ||grad phi||^2 + sum_i M_i betahat_eps(phi_i) + h/2 ||mu||_M^2`.
pub fn energy(
    mesh: &Mesh,
    params: &PhysParams,
    phi: &[f64],
    mu: &[f64],
    h: f64,
) -> Result<f64, Error> {
    let mut pot = 0.0;
    for (m, p) in mesh.lumped_mass().iter().zip(phi.iter()) {
        pot += m * graphs::moreau(params.graph, params.eps, *p)?;
    }
    Ok(0.5 * params.gamma * mesh.grad_norm_sq(phi) + pot + 0.5 * h * mesh.mass_norm_sq(mu))
}

/// Slack of the subgradient inequality for the Moreau envelope:
/// `(M beta_eps(phi_new)) . (phi_new - phi_old)
///  - [ sum M betahat_eps(phi_new) - sum M betahat_eps(phi_old) ] >= 0`.
pub fn check_subgradient_step(
    g: GraphSpec,
    eps: f64,
    phi_new: &[f64],
    phi_old: &[f64],
    mesh: &Mesh,
) -> Result<f64, Error> {
    let mass = mesh.lumped_mass();
    let mut pairing = 0.0;
    let mut env_new = 0.0;
    let mut env_old = 0.0;
    for i in 0..phi_new.len() {
        pairing += mass[i] * graphs::yosida(g, eps, phi_new[i])? * (phi_new[i] - phi_old[i]);
        env_new += mass[i] * graphs::moreau(g, eps, phi_new[i])?;
        env_old += mass[i] * graphs::moreau(g, eps, phi_old[i])?;
    }
    Ok(pairing - (env_new - env_old))
}

/// Slack of the temperature convexity inequality: the pairing
/// `c_s (theta_new, Ln_eps theta_new - Ln_eps theta_old)_M` minus its
/// quadratic/entropy lower bound
/// `c_s eps/2 [ d||theta||^2 + ||dtheta||^2 ] + c_s eps/2 [ same for
/// ln_eps theta ] + c_s d( int rho_eps(theta) )`.
pub fn check_temperature_step(
    mesh: &Mesh,
    params: &PhysParams,
    theta_new: &[f64],
    theta_old: &[f64],
) -> Result<f64, Error> {
    let reg = params.reg_log();
    let mass = mesh.lumped_mass();
    let cs = params.c_s;
    let eps = params.eps;
    let mut pairing = 0.0;
    let mut bound = 0.0;
    for i in 0..theta_new.len() {
        let xn = reg.ln_eps(theta_new[i])?;
        let xo = reg.ln_eps(theta_old[i])?;
        let rho_n = xn.exp();
        let rho_o = xo.exp();
        let tn = theta_new[i];
        let to = theta_old[i];
        pairing += cs * mass[i] * tn * ((eps * tn + xn) - (eps * to + xo));
        bound += 0.5 * cs * eps * mass[i] * (tn * tn - to * to + (tn - to) * (tn - to));
        bound += 0.5 * cs * eps * mass[i] * (xn * xn - xo * xo + (xn - xo) * (xn - xo));
        bound += cs * mass[i] * (rho_n - rho_o);
    }
    Ok(pairing - bound)
}

fn difference(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

/// `||dphi/h + dmu||_{V0*}^2` for one step, computed on the zero-mean
/// projection (the true combination has zero mean by conservation; the
/// projection removes roundoff).
pub fn step_flux_norm_sq(
    mesh: &Mesh,
    phi_old: &[f64],
    phi_new: &[f64],
    mu_old: &[f64],
    mu_new: &[f64],
    h: f64,
) -> Result<f64, Error> {
    let n = phi_new.len();
    let w: Vec<f64> = (0..n)
        .map(|i| (phi_new[i] - phi_old[i]) / h + (mu_new[i] - mu_old[i]))
        .collect();
    let w = mesh.project_zero_mean(&w);
    let norm = mesh.dual_norm_v0(&w)?;
    Ok(norm * norm)
}

/// Slack of the per-step energy inequality: right side minus left side of
///
/// ```text
/// h/2 ||dphi/h + dmu||_{V0*}^2 + tau h ||dphi/h||_M^2
///   + gamma/2 ( ||grad phi_new||^2 - ||grad phi_old||^2 + ||grad dphi||^2 )
///   + int betahat_eps(phi_new) - int betahat_eps(phi_old)
///   + h/2 ( ||mu_new||_M^2 - ||mu_old||_M^2 ) + h/4 ||dmu||_M^2
/// <= 2 sup|sigma''|^2 h ||phi_new||_V^2 + 2 |sigma'(0)|^2 L h
///   + (M lambda_eps'(phi_old) (phi_new - phi_old)) . theta_new
/// ```
#[allow(clippy::too_many_arguments)]
pub fn check_energy_step(
    mesh: &Mesh,
    params: &PhysParams,
    phi_old: &[f64],
    phi_new: &[f64],
    mu_old: &[f64],
    mu_new: &[f64],
    theta_new: &[f64],
    h: f64,
) -> Result<f64, Error> {
    let record = energy_record(mesh, params, phi_old, phi_new, mu_old, mu_new, theta_new, h)?;
    Ok(record.slack)
}

/// Detailed terms of the per-step energy inequality.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRecord {
    /// Energy at the new level.
    pub energy: f64,
    /// `h/2 ||dphi/h + dmu||_{V0*}^2`.
    pub dissipation_flux: f64,
    /// `tau h ||dphi/h||_M^2`.
    pub dissipation_viscous: f64,
    /// `h/4 ||mu_new - mu_old||_M^2`.
    pub dissipation_mu: f64,
    /// `gamma/2 ||grad(phi_new - phi_old)||^2`.
    pub dissipation_grad: f64,
    /// `(M lambda_eps'(phi_old)(phi_new - phi_old)) . theta_new`.
    pub coupling: f64,
    /// Right side minus left side; nonnegative up to roundoff.
    pub slack: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn energy_record(
    mesh: &Mesh,
    params: &PhysParams,
    phi_old: &[f64],
    phi_new: &[f64],
    mu_old: &[f64],
    mu_new: &[f64],
    theta_new: &[f64],
    h: f64,
) -> Result<EnergyRecord, Error> {
    let mass = mesh.lumped_mass();
    let n = phi_new.len();
    let dphi = difference(phi_new, phi_old);
    let dphi_quot: Vec<f64> = dphi.iter().map(|d| d / h).collect();
    let dmu = difference(mu_new, mu_old);

    let flux_sq = step_flux_norm_sq(mesh, phi_old, phi_new, mu_old, mu_new, h)?;
    let dissipation_flux = 0.5 * h * flux_sq;
    let dissipation_viscous = params.tau * h * mesh.mass_norm_sq(&dphi_quot);
    let dissipation_mu = 0.25 * h * mesh.mass_norm_sq(&dmu);
    let dissipation_grad = 0.5 * params.gamma * mesh.grad_norm_sq(&dphi);

    let mut env_new = 0.0;
    let mut env_old = 0.0;
    let mut coupling = 0.0;
    for i in 0..n {
        env_new += mass[i] * graphs::moreau(params.graph, params.eps, phi_new[i])?;
        env_old += mass[i] * graphs::moreau(params.graph, params.eps, phi_old[i])?;
        let lam_p = params.latent.trunc_prime(params.eps, phi_old[i]);
        coupling += mass[i] * lam_p * dphi[i] * theta_new[i];
    }

    let lhs = dissipation_flux
        + dissipation_viscous
        + 0.5 * params.gamma * (mesh.grad_norm_sq(phi_new) - mesh.grad_norm_sq(phi_old))
        + dissipation_grad
        + (env_new - env_old)
        + 0.5 * h * (mesh.mass_norm_sq(mu_new) - mesh.mass_norm_sq(mu_old))
        + dissipation_mu;
    let sig2 = params.sigma_second_sup();
    let sig0 = params.sigma_prime(0.0);
    let rhs = 2.0 * sig2 * sig2 * h * mesh.v_norm_sq(phi_new)
        + 2.0 * sig0 * sig0 * mesh.length() * h
        + coupling;

    Ok(EnergyRecord {
        energy: 0.5 * params.gamma * mesh.grad_norm_sq(phi_new)
            + env_new
            + 0.5 * h * mesh.mass_norm_sq(mu_new),
        dissipation_flux,
        dissipation_viscous,
        dissipation_mu,
        dissipation_grad,
        coupling,
        slack: rhs - lhs,
    })
}

/// Per-step temperature quantities: the entropy-side integrals and the
/// convexity slack.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureRecord {
    /// `c_s sum M rho_eps(theta_new)`; positive since the log resolvent is.
    pub rho_integral: f64,
    /// `(c_s eps / 2) ||theta_new||_M^2`.
    pub theta_sq: f64,
    /// `(c_s eps / 2) ||ln_eps(theta_new)||_M^2`.
    pub log_sq: f64,
    /// Slack of the convexity inequality against the previous level.
    pub slack: f64,
}

pub fn temperature_record(
    mesh: &Mesh,
    params: &PhysParams,
    theta_new: &[f64],
    theta_old: &[f64],
) -> Result<TemperatureRecord, Error> {
    let reg = params.reg_log();
    let mass = mesh.lumped_mass();
    let mut rho_integral = 0.0;
    let mut theta_sq = 0.0;
    let mut log_sq = 0.0;
    for i in 0..theta_new.len() {
        let x = reg.ln_eps(theta_new[i])?;
        rho_integral += params.c_s * mass[i] * x.exp();
        theta_sq += 0.5 * params.c_s * params.eps * mass[i] * theta_new[i] * theta_new[i];
        log_sq += 0.5 * params.c_s * params.eps * mass[i] * x * x;
    }
    Ok(TemperatureRecord {
        rho_integral,
        theta_sq,
        log_sq,
        slack: check_temperature_step(mesh, params, theta_new, theta_old)?,
    })
}

/// Gap of the exact per-step testing identity
///
/// ```text
/// h ||dphi/h + dmu||_{V0*}^2 + tau h ||dphi/h||_M^2
///   + gamma (phi_new - phi_old) . K phi_new
///   + (M beta_eps(phi_new)) . (phi_new - phi_old)
///   + h (mu_new - mu_old, mu_new)_M
/// = -h (sigma'(phi_new), dphi/h)_M
///   + (M lambda_eps'(phi_old)(phi_new - phi_old)) . theta_new
/// ```
///
/// which validates the accepted solve end to end.
#[allow(clippy::too_many_arguments)]
pub fn step_identity_gap(
    mesh: &Mesh,
    params: &PhysParams,
    phi_old: &[f64],
    phi_new: &[f64],
    mu_old: &[f64],
    mu_new: &[f64],
    theta_new: &[f64],
    h: f64,
) -> Result<f64, Error> {
    let mass = mesh.lumped_mass();
    let n = phi_new.len();
    let dphi = difference(phi_new, phi_old);
    let dphi_quot: Vec<f64> = dphi.iter().map(|d| d / h).collect();
    let dmu = difference(mu_new, mu_old);
    let flux_sq = step_flux_norm_sq(mesh, phi_old, phi_new, mu_old, mu_new, h)?;

    let k_new = mesh.apply_stiffness(phi_new);
    let mut beta_pairing = 0.0;
    let mut grad_pairing = 0.0;
    let mut coupling = 0.0;
    let mut sigma_pairing = 0.0;
    for i in 0..n {
        beta_pairing += mass[i] * graphs::yosida(params.graph, params.eps, phi_new[i])? * dphi[i];
        grad_pairing += dphi[i] * k_new[i];
        let lam_p = params.latent.trunc_prime(params.eps, phi_old[i]);
        coupling += mass[i] * lam_p * dphi[i] * theta_new[i];
        sigma_pairing += mass[i] * params.sigma_prime(phi_new[i]) * dphi_quot[i];
    }
    let lhs = h * flux_sq
        + params.tau * h * mesh.mass_norm_sq(&dphi_quot)
        + params.gamma * grad_pairing
        + beta_pairing
        + h * mesh.mass_inner(&dmu, mu_new);
    let rhs = -h * sigma_pairing + coupling;
    Ok((lhs - rhs).abs())
}

/// Gap of the flux-norm identity
/// `h ||grad mu_new||^2 = h ||dphi/h + dmu||_{V0*}^2`.
pub fn flux_identity_gap(
    mesh: &Mesh,
    phi_old: &[f64],
    phi_new: &[f64],
    mu_old: &[f64],
    mu_new: &[f64],
    h: f64,
) -> Result<f64, Error> {
    let flux_sq = step_flux_norm_sq(mesh, phi_old, phi_new, mu_old, mu_new, h)?;
    Ok((h * mesh.grad_norm_sq(mu_new) - h * flux_sq).abs())
}

/// All per-step diagnostics bundled for the stepper.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub conserved: f64,
    pub energy: f64,
    pub slack_temperature: f64,
    pub slack_subgradient: f64,
    pub slack_energy: f64,
    pub identity_gap: f64,
    pub flux_identity_gap: f64,
}

pub fn step_diagnostics(
    mesh: &Mesh,
    params: &PhysParams,
    old: &State,
    new: &State,
    h: f64,
) -> Result<StepDiagnostics, Error> {
    let record = energy_record(
        mesh, params, &old.phi, &new.phi, &old.mu, &new.mu, &new.theta, h,
    )?;
    Ok(StepDiagnostics {
        conserved: conserved_total(mesh, &new.phi, &new.mu, h),
        energy: record.energy,
        slack_temperature: check_temperature_step(mesh, params, &new.theta, &old.theta)?,
        slack_subgradient: check_subgradient_step(
            params.graph,
            params.eps,
            &new.phi,
            &old.phi,
            mesh,
        )?,
        slack_energy: record.slack,
        identity_gap: step_identity_gap(
            mesh, params, &old.phi, &new.phi, &old.mu, &new.mu, &new.theta, h,
        )?,
        flux_identity_gap: flux_identity_gap(mesh, &old.phi, &new.phi, &old.mu, &new.mu, h)?,
    })
}

/// Squared discrete analogues of the a-priori bound list, accumulated over a
/// completed trajectory. The last two rows are the only ones allowed to grow
/// like `1 + 1/tau`; everything else is bounded uniformly in the data.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// `tau ||d_t phi||^2_{L2(0,T;H)}`.
    pub tau_dphi_l2h_sq: f64,
    /// `||phi||^2_{Linf(0,T;V)}`.
    pub phi_linf_v_sq: f64,
    /// `||theta||^2_{L2(0,T;V)}`.
    pub theta_l2v_sq: f64,
    /// `||d_t phi||^2_{L2(0,T;V*)}`.
    pub dphi_l2vstar_sq: f64,
    /// `||mu||^2_{L2(0,T;V)}`.
    pub mu_l2v_sq: f64,
    /// `||beta_eps(phi)||^2_{L2(0,T;H)}`.
    pub xi_l2h_sq: f64,
    /// `||phi||^2_{L2(0,T;W)}` with the discrete Laplacian `M^{-1} K`.
    pub phi_l2w_sq: f64,
    /// `||d_t (c_s u + lambda_eps(phi))||^2_{L2(0,T;V*)}`.
    pub entropy_dt_l2vstar_sq: f64,
    /// `||c_s u + lambda_eps(phi)||^2_{Linf(0,T;H)}`.
    pub entropy_linf_h_sq: f64,
    /// `||u||^2_{Linf(0,T;H)}` (`u` is the regularized log-temperature).
    pub u_linf_h_sq: f64,
    /// `||lambda_eps(phi)||^2_{Linf(0,T;H)}`.
    pub lambda_linf_h_sq: f64,
    /// `||d_t u||^2_{L2(0,T;V*)}`; may scale like `1 + 1/tau`.
    pub du_l2vstar_sq: f64,
    /// `||d_t lambda_eps(phi)||^2_{L2(0,T;V*)}`; may scale like `1 + 1/tau`.
    pub dlambda_l2vstar_sq: f64,
}

impl BoundReport {
    /// Rows bounded uniformly in `tau`, as (name, squared value).
    pub fn uniform_rows(&self) -> [(&'static str, f64); 11] {
        [
            ("tau_dphi_l2h_sq", self.tau_dphi_l2h_sq),
            ("phi_linf_v_sq", self.phi_linf_v_sq),
            ("theta_l2v_sq", self.theta_l2v_sq),
            ("dphi_l2vstar_sq", self.dphi_l2vstar_sq),
            ("mu_l2v_sq", self.mu_l2v_sq),
            ("xi_l2h_sq", self.xi_l2h_sq),
            ("phi_l2w_sq", self.phi_l2w_sq),
            ("entropy_dt_l2vstar_sq", self.entropy_dt_l2vstar_sq),
            ("entropy_linf_h_sq", self.entropy_linf_h_sq),
            ("u_linf_h_sq", self.u_linf_h_sq),
            ("lambda_linf_h_sq", self.lambda_linf_h_sq),
        ]
    }

    /// Rows permitted to grow like `1 + 1/tau`.
    pub fn tau_weighted_rows(&self) -> [(&'static str, f64); 2] {
        [
            ("du_l2vstar_sq", self.du_l2vstar_sq),
            ("dlambda_l2vstar_sq", self.dlambda_l2vstar_sq),
        ]
    }

    pub fn all_rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = self.uniform_rows().to_vec();
        rows.extend(self.tau_weighted_rows());
        rows
    }
}

/// Evaluate the bound list on a completed trajectory.
pub fn bound_tracker(
    mesh: &Mesh,
    params: &PhysParams,
    traj: &Trajectory,
) -> Result<BoundReport, Error> {
    if traj.states.len() != traj.n_steps + 1 {
        return Err(Error::Precondition(
            "bound tracker requires a completed run".to_string(),
        ));
    }
    let h = traj.h;
    let n_nodes = mesh.n_nodes();
    let lambda_of = |phi: &[f64]| -> Vec<f64> {
        phi.iter()
            .map(|p| params.latent.trunc(params.eps, *p))
            .collect()
    };
    let entropy_of = |state: &State| -> Vec<f64> {
        let lam = lambda_of(&state.phi);
        (0..n_nodes)
            .map(|i| params.c_s * state.u[i] + lam[i])
            .collect()
    };

    let mut report = BoundReport {
        tau_dphi_l2h_sq: 0.0,
        phi_linf_v_sq: 0.0,
        theta_l2v_sq: 0.0,
        dphi_l2vstar_sq: 0.0,
        mu_l2v_sq: 0.0,
        xi_l2h_sq: 0.0,
        phi_l2w_sq: 0.0,
        entropy_dt_l2vstar_sq: 0.0,
        entropy_linf_h_sq: 0.0,
        u_linf_h_sq: 0.0,
        lambda_linf_h_sq: 0.0,
        du_l2vstar_sq: 0.0,
        dlambda_l2vstar_sq: 0.0,
    };

    for state in &traj.states {
        report.phi_linf_v_sq = report.phi_linf_v_sq.max(mesh.v_norm_sq(&state.phi));
        report.u_linf_h_sq = report.u_linf_h_sq.max(mesh.mass_norm_sq(&state.u));
        let lam = lambda_of(&state.phi);
        report.lambda_linf_h_sq = report.lambda_linf_h_sq.max(mesh.mass_norm_sq(&lam));
        let entropy = entropy_of(state);
        report.entropy_linf_h_sq = report.entropy_linf_h_sq.max(mesh.mass_norm_sq(&entropy));
    }

    for n in 0..traj.n_steps {
        let old = &traj.states[n];
        let new = &traj.states[n + 1];

        // right-endpoint level quantities
        report.theta_l2v_sq += h * mesh.v_norm_sq(&new.theta);
        report.mu_l2v_sq += h * mesh.v_norm_sq(&new.mu);
        let xi: Vec<f64> = new
            .phi
            .iter()
            .map(|p| graphs::yosida(params.graph, params.eps, *p))
            .collect::<Result<Vec<f64>, Error>>()?;
        report.xi_l2h_sq += h * mesh.mass_norm_sq(&xi);
        let k_phi = mesh.apply_stiffness(&new.phi);
        let lap: Vec<f64> = (0..n_nodes)
            .map(|i| k_phi[i] / mesh.lumped_mass()[i])
            .collect();
        report.phi_l2w_sq += h * (mesh.mass_norm_sq(&new.phi) + mesh.mass_norm_sq(&lap));

        // difference quotients
        let dphi: Vec<f64> = (0..n_nodes).map(|i| (new.phi[i] - old.phi[i]) / h).collect();
        report.tau_dphi_l2h_sq += params.tau * h * mesh.mass_norm_sq(&dphi);
        let nv = mesh.dual_norm_v(&dphi);
        report.dphi_l2vstar_sq += h * nv * nv;

        let du: Vec<f64> = (0..n_nodes).map(|i| (new.u[i] - old.u[i]) / h).collect();
        let nu = mesh.dual_norm_v(&du);
        report.du_l2vstar_sq += h * nu * nu;

        let lam_new = lambda_of(&new.phi);
        let lam_old = lambda_of(&old.phi);
        let dlam: Vec<f64> = (0..n_nodes).map(|i| (lam_new[i] - lam_old[i]) / h).collect();
        let nl = mesh.dual_norm_v(&dlam);
        report.dlambda_l2vstar_sq += h * nl * nl;

        let ent_new = entropy_of(new);
        let ent_old = entropy_of(old);
        let dent: Vec<f64> = (0..n_nodes).map(|i| (ent_new[i] - ent_old[i]) / h).collect();
        let ne = mesh.dual_norm_v(&dent);
        report.entropy_dt_l2vstar_sq += h * ne * ne;
    }
    Ok(report)
}

/// Measured coercivity constant: the smallest `C >= 0` with
/// `betahat_eps(r)/2 >= gamma/2 r^2 - C` over `samples` points in
/// `[-r_max, r_max]`.
pub fn coercivity_constant(
    g: GraphSpec,
    eps: f64,
    gamma: f64,
    r_max: f64,
    samples: usize,
) -> Result<f64, Error> {
    let mut c = 0.0f64;
    for i in 0..samples {
        let r = -r_max + 2.0 * r_max * (i as f64 + 0.5) / samples as f64;
        let env = graphs::moreau(g, eps, r)?;
        c = c.max(0.5 * gamma * r * r - 0.5 * env);
    }
    Ok(c)
}

/// Measured discrete trace/norm equivalence constants: the extreme ratios of
/// `||z||_V^2` to `||grad z||^2 + z(0)^2 + z(L)^2` over a deterministic
/// sample of grid functions.
pub fn trace_equivalence_constants(mesh: &Mesh, samples: usize) -> (f64, f64) {
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for s in 0..samples {
        let z: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| ((i * (s + 2) + 3 * s + 1) as f64 * 0.41).sin())
            .collect();
        let trace = mesh.grad_norm_sq(&z) + z[0] * z[0] + z[z.len() - 1] * z[z.len() - 1];
        if trace <= 0.0 {
            continue;
        }
        let ratio = mesh.v_norm_sq(&z) / trace;
        c1 = c1.min(ratio);
        c2 = c2.max(ratio);
    }
    (c1, c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{GraphKind, LatentHeat};

    fn params(graph: GraphKind) -> PhysParams {
        PhysParams {
            c_s: 1.0,
            eta: 1.0,
            gamma: 1.0,
            tau: 0.1,
            eps: 0.1,
            graph: GraphSpec::new(graph),
            latent: LatentHeat::default(),
            theta_a: 0.25,
            theta_b: 0.5,
        }
    }

    #[test]
    fn conserved_total_pinned() {
        let mesh = Mesh::new(4, 2.0, 1.0, 1.0).unwrap();
        let phi = vec![0.3; 5];
        let mu = vec![0.0; 5];
        assert!((conserved_total(&mesh, &phi, &mu, 0.01) - 0.3).abs() <= 1e-14);
        // direct summation cross-check on arbitrary data
        let phi = vec![0.1, -0.5, 0.7, 0.2, -0.3];
        let mu = vec![1.0, 0.0, -2.0, 0.5, 0.25];
        let h = 0.05;
        let direct: f64 = mesh
            .lumped_mass()
            .iter()
            .zip(phi.iter().zip(mu.iter()))
            .map(|(m, (p, q))| m * (p + h * q))
            .sum::<f64>()
            / mesh.length();
        assert_eq!(conserved_total(&mesh, &phi, &mu, h), direct);
    }

    #[test]
    fn subgradient_slack_zero_for_equal_args() {
        let mesh = Mesh::new(4, 1.0, 1.0, 1.0).unwrap();
        let phi = vec![0.4, -0.2, 0.9, -0.7, 0.1];
        for graph in GraphKind::ALL {
            let slack =
                check_subgradient_step(GraphSpec::new(graph), 0.2, &phi, &phi, &mesh).unwrap();
            assert_eq!(slack, 0.0);
        }
    }

    #[test]
    fn subgradient_slack_nonnegative_on_random_pairs() {
        let mesh = Mesh::new(8, 1.0, 1.0, 1.0).unwrap();
        for graph in [GraphKind::Regular, GraphKind::Indicator] {
            for s in 0..25 {
                let a: Vec<f64> = (0..9)
                    .map(|i| ((i * 5 + s * 3 + 1) % 13) as f64 / 6.5 - 1.0)
                    .collect();
                let b: Vec<f64> = (0..9)
                    .map(|i| ((i * 7 + s * 2 + 4) % 11) as f64 / 5.5 - 1.0)
                    .collect();
                let slack =
                    check_subgradient_step(GraphSpec::new(graph), 0.3, &a, &b, &mesh).unwrap();
                assert!(slack >= -1e-12, "{graph:?} sample {s}: slack {slack}");
            }
        }
    }

    #[test]
    fn temperature_slack_zero_for_equal_and_nonnegative_otherwise() {
        let mesh = Mesh::new(6, 1.0, 1.0, 1.0).unwrap();
        let p = params(GraphKind::Regular);
        let theta = vec![0.5, 1.0, 2.0, 0.8, 1.5, 3.0, 0.9];
        let slack = check_temperature_step(&mesh, &p, &theta, &theta).unwrap();
        assert!(slack.abs() <= 1e-14);
        // random positive pairs, including strong contrast
        for s in 0..20 {
            let a: Vec<f64> = (0..7)
                .map(|i| 0.01 + ((i + s) % 7) as f64 * 150.0)
                .collect();
            let b: Vec<f64> = (0..7)
                .map(|i| 0.02 + ((2 * i + s) % 5) as f64 * 200.0)
                .collect();
            let slack = check_temperature_step(&mesh, &p, &a, &b).unwrap();
            assert!(slack >= -1e-9, "sample {s}: slack {slack}");
            assert!(slack.is_finite());
        }
    }

    #[test]
    fn coercivity_constant_is_finite_and_reported() {
        for graph in GraphKind::ALL {
            for eps in [0.1, 0.01] {
                let c = coercivity_constant(GraphSpec::new(graph), eps, 1.0, 5.0, 500).unwrap();
                assert!(c.is_finite() && c >= 0.0);
            }
        }
    }

    #[test]
    fn trace_constants_ordered() {
        let mesh = Mesh::new(32, 1.0, 1.0, 1.0).unwrap();
        let (c1, c2) = trace_equivalence_constants(&mesh, 64);
        assert!(c1 > 0.0 && c1 <= c2 && c2.is_finite());
    }
}
