//! Implicit time stepping for the coupled system.
//!
//! One step from level `n` to `n+1` with step size `h` solves, nodewise with
//! lumped mass `M`, stiffness `K`, Robin operator `R` and Green operator
//! `G = (M + K)^{-1} M`:
//!
//! ```text
//! (1) c_s M Ln_eps(theta) + eta h K theta + h R theta
//!       = h M f_avg + c_s M u_n + h (Robin data) + M lambda_eps'(phi_n) (phi_n - phi)
//! (2) mu = G mu_n + (1/h) G (phi_n - phi)
//! (3) tau M phi + M G phi + gamma h K phi + h M beta_eps(phi) + h M sigma'(phi)
//!       = M ( tau phi_n + h G mu_n + G phi_n + h lambda_eps'(phi_n) theta )
//! ```
//!
//! Equation (1) defines the temperature map `A(phi) = theta`, equation (3)
//! the phase map `B(theta) = phi`. The step is the fixed point of
//! `S = B ∘ A`, which is a contraction in the M-norm with factor
//! `q = 2 sup|lambda_eps'|^2 h / (c_s eps tau)` whenever `h` is below the
//! guard of [`step_guard`]; the solver runs at `h <= 0.5 * h0` so `q <= 1/2`.
//! Measured iteration ratios are asserted against `q` at runtime.

use crate::diagnostics;
use crate::graphs::{yosida_with_deriv, GraphSpec, LatentHeat, RegularizedLog};
use crate::mesh::{thomas_symmetric, GridFunction, Mesh};
use crate::Error;

/// The stepper never runs above this fraction of the step guard.
pub const STEP_SAFETY: f64 = 0.5;

/// Scalar coefficients and model functions of the system.
#[derive(Debug, Clone)]
pub struct PhysParams {
    /// Specific heat `c_s > 0`.
    pub c_s: f64,
    /// Entropy-flux coefficient `eta > 0`.
    pub eta: f64,
    /// Interface coefficient `gamma > 0`.
    pub gamma: f64,
    /// Viscosity `tau >= 0`; the discrete scheme itself requires `tau > 0`.
    pub tau: f64,
    /// Regularization parameter `eps` in `(0, 1]`, shared by the Yosida
    /// approximation of the graph, the regularized logarithm and the
    /// latent-heat truncation.
    pub eps: f64,
    pub graph: GraphSpec,
    pub latent: LatentHeat,
    /// Coefficients of `sigma(r) = theta_a r - theta_b r^2`.
    pub theta_a: f64,
    pub theta_b: f64,
}

impl PhysParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.c_s > 0.0) {
            return Err(Error::Config(format!("c_s must be positive, got {}", self.c_s)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        Ok(())
    }

    pub fn sigma(&self, r: f64) -> f64 {
        self.theta_a * r - self.theta_b * r * r
    }

    pub fn sigma_prime(&self, r: f64) -> f64 {
        self.theta_a - 2.0 * self.theta_b * r
    }

    /// `sigma''`, a constant for the quadratic `sigma`.
    pub fn sigma_second(&self) -> f64 {
        -2.0 * self.theta_b
    }

    pub fn sigma_second_sup(&self) -> f64 {
        2.0 * self.theta_b.abs()
    }

    /// `sup |lambda_eps'|` for the current `eps`.
    pub fn lambda_prime_sup(&self) -> f64 {
        self.latent.trunc_prime_sup(self.eps)
    }

    pub fn reg_log(&self) -> RegularizedLog {
        RegularizedLog::new(self.eps)
    }
}

/// Scalar function of time used for boundary data and sources.
#[derive(Debug, Clone)]
pub enum TimeFunction {
    Constant(f64),
    /// `values[i]` on `[times[i], times[i+1])`; `times[0]` must be 0.
    PiecewiseConstant { times: Vec<f64>, values: Vec<f64> },
    /// `base + amplitude * sin(2 pi t / period + phase)`.
    Sinusoid {
        base: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
}

/// Abscissas/weights of 4-point Gauss-Legendre on [-1, 1].
const GAUSS4: [(f64, f64); 4] = [
    (-0.8611363115940526, 0.3478548451374538),
    (-0.3399810435848563, 0.6521451548625461),
    (0.3399810435848563, 0.6521451548625461),
    (0.8611363115940526, 0.3478548451374538),
];

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(v) => *v,
            TimeFunction::PiecewiseConstant { times, values } => {
                let mut v = values[0];
                for (ti, vi) in times.iter().zip(values.iter()) {
                    if t >= *ti {
                        v = *vi;
                    }
                }
                v
            }
            TimeFunction::Sinusoid {
                base,
                amplitude,
                period,
                phase,
            } => base + amplitude * (2.0 * std::f64::consts::PI * t / period + phase).sin(),
        }
    }

    /// Inclusive range of values taken over all times.
    pub fn range(&self) -> (f64, f64) {
        match self {
            TimeFunction::Constant(v) => (*v, *v),
            TimeFunction::PiecewiseConstant { values, .. } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            TimeFunction::Sinusoid {
                base, amplitude, ..
            } => (base - amplitude.abs(), base + amplitude.abs()),
        }
    }

    /// Interval average `(1/(t1-t0)) int_{t0}^{t1}`. Smooth shapes use
    /// 4-point Gauss quadrature; the piecewise-constant shape is averaged
    /// exactly by splitting at its jump times.
    pub fn interval_average(&self, t0: f64, t1: f64) -> f64 {
        debug_assert!(t1 > t0);
        match self {
            TimeFunction::Constant(v) => *v,
            TimeFunction::PiecewiseConstant { times, .. } => {
                let mut cuts: Vec<f64> = vec![t0];
                for ti in times {
                    if *ti > t0 && *ti < t1 {
                        cuts.push(*ti);
                    }
                }
                cuts.push(t1);
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    total += self.eval(0.5 * (w[0] + w[1])) * (w[1] - w[0]);
                }
                total / (t1 - t0)
            }
            TimeFunction::Sinusoid { .. } => {
                let mid = 0.5 * (t0 + t1);
                let half = 0.5 * (t1 - t0);
                GAUSS4
                    .iter()
                    .map(|(x, w)| 0.5 * w * self.eval(mid + half * x))
                    .sum()
            }
        }
    }
}

/// Space-time entropy source `f(x, t) = g(t) cos(mode pi x / L)`.
#[derive(Debug, Clone)]
pub struct Source {
    pub time: TimeFunction,
    pub spatial_mode: u32,
}

impl Source {
    pub fn zero() -> Self {
        Source {
            time: TimeFunction::Constant(0.0),
            spatial_mode: 0,
        }
    }

    /// Nodal values of the interval average over `[t0, t1]`.
    pub fn average_nodal(&self, mesh: &Mesh, t0: f64, t1: f64) -> GridFunction {
        let g = self.time.interval_average(t0, t1);
        let k = self.spatial_mode as f64 * std::f64::consts::PI / mesh.length();
        mesh.nodes().iter().map(|x| g * (k * x).cos()).collect()
    }
}

/// Boundary and initial data for one run.
#[derive(Debug, Clone)]
pub struct BoundaryAndData {
    /// Exterior temperature at the left/right endpoint.
    pub theta_gamma: [TimeFunction; 2],
    pub source: Source,
    pub theta0: GridFunction,
    pub phi0: GridFunction,
    /// Initial chemical potential; the canonical choice is zero.
    pub mu0: GridFunction,
    /// Lower bound `theta_* > 0` for the boundary and initial temperature.
    pub theta_min: f64,
    /// Upper bound `theta^*`.
    pub theta_max: f64,
}

impl BoundaryAndData {
    /// Check the data box constraints and that the initial phase mean lies
    /// strictly inside the domain of the graph.
    pub fn validate(&self, mesh: &Mesh, params: &PhysParams) -> Result<(), Error> {
        let n = mesh.n_nodes();
        for (name, v) in [("theta0", &self.theta0), ("phi0", &self.phi0), ("mu0", &self.mu0)] {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "{name} has {} nodes, mesh has {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} contains non-finite values")));
            }
        }
        if !(self.theta_min > 0.0 && self.theta_max >= self.theta_min) {
            return Err(Error::Config(format!(
                "temperature bounds must satisfy 0 < theta_min <= theta_max, got [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        for (i, th) in self.theta0.iter().enumerate() {
            if *th < self.theta_min || *th > self.theta_max {
                return Err(Error::Config(format!(
                    "theta0 at node {i} is {th}, outside [{}, {}]",
                    self.theta_min, self.theta_max
                )));
            }
        }
        for (side, tg) in self.theta_gamma.iter().enumerate() {
            let (lo, hi) = tg.range();
            if lo < self.theta_min || hi > self.theta_max {
                return Err(Error::Config(format!(
                    "theta_gamma[{side}] takes values in [{lo}, {hi}], outside [{}, {}]",
                    self.theta_min, self.theta_max
                )));
            }
        }
        for (i, ph) in self.phi0.iter().enumerate() {
            if !crate::graphs::betahat(params.graph, *ph).is_finite() {
                return Err(Error::Config(format!(
                    "betahat(phi0) is infinite at node {i} (phi0 = {ph})"
                )));
            }
        }
        let m0 = mesh.mean(&self.phi0);
        let (lo, hi) = params.graph.domain_interior();
        if !(m0 > lo && m0 < hi) {
            return Err(Error::Config(format!(
                "initial phase mean {m0} is not interior to the graph domain ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Nodal unknowns at one time level. `u = Ln_eps(theta)` nodewise.
#[derive(Debug, Clone)]
pub struct State {
    pub index: usize,
    pub theta: GridFunction,
    pub phi: GridFunction,
    pub mu: GridFunction,
    pub u: GridFunction,
}

impl State {
    /// Check the `u = Ln_eps(theta)` linkage.
    pub fn validate(&self, params: &PhysParams) -> Result<(), Error> {
        let reg = params.reg_log();
        for i in 0..self.theta.len() {
            let ln = reg.eval(self.theta[i])?;
            if (self.u[i] - ln).abs() > 1e-12 * ln.abs().max(1.0) {
                return Err(Error::InvariantViolation(format!(
                    "u[{i}] = {} but Ln_eps(theta[{i}]) = {ln}",
                    self.u[i]
                )));
            }
        }
        Ok(())
    }
}

/// Solver tolerances. The defaults drive each solve to its floating-point
/// floor, far below the guaranteed acceptance bounds, so downstream
/// identities (notably the `1/h`-amplified potential update) keep full
/// accuracy.
#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Newton keeps iterating until the residual (max norm, relative to data
    /// scale) reaches this target or stalls.
    pub newton_target: f64,
    /// A stalled or capped Newton solve is accepted at this residual.
    pub newton_accept: f64,
    pub newton_cap: usize,
    /// Fixed-point convergence requirement in the M-norm of successive
    /// phase iterates.
    pub fixed_point: f64,
    pub fixed_point_cap: usize,
    /// Extra fixed-point iterations after convergence, continued while the
    /// update still contracts, to reach the floating-point floor.
    pub fixed_point_polish_cap: usize,
    /// Relative conjugate-gradient tolerance of the phase linear stage.
    pub cg_rel: f64,
    /// Step failures retry with halved substeps up to this many times.
    pub retry_cap: u32,
    /// Allowed relative excursion of measured contraction ratios.
    pub ratio_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_target: 8.0 * f64::EPSILON,
            newton_accept: 1e-12,
            newton_cap: 60,
            fixed_point: 1e-11,
            fixed_point_cap: 200,
            fixed_point_polish_cap: 40,
            cg_rel: 1e-13,
            retry_cap: 5,
            ratio_slack: 1e-6,
        }
    }
}

impl Tolerances {
    /// Deliberately broken tolerances for the negative-control hook of the
    /// check command: solves stop far too early, so the residual battery
    /// must flag violations.
    pub fn corrupted() -> Self {
        Tolerances {
            newton_target: 1e-5,
            newton_accept: 1e-4,
            fixed_point: 1e-3,
            fixed_point_polish_cap: 0,
            ..Tolerances::default()
        }
    }
}

/// Step-size guard
/// `h0 = min{ 1, tau/(2 sup|sigma''|), c_s eps tau/(2 sup|lambda_eps'|^2),
/// gamma/(8 sup|sigma''|^2) }`, with entries whose denominator vanishes
/// omitted (they impose no restriction).
#[derive(Debug, Clone)]
pub struct StepGuard {
    pub h0: f64,
    /// Name of the entry attaining the minimum.
    pub binding: &'static str,
    pub entries: Vec<(&'static str, f64)>,
}

/// Compute the step guard. Errors for `tau = 0`, where the scheme is
/// undefined; the non-viscous case is reached through a `tau` schedule.
pub fn step_guard(p: &PhysParams) -> Result<StepGuard, Error> {
    if !(p.tau > 0.0) {
        return Err(Error::Config(
            "step guard undefined for tau = 0; reach the non-viscous case by a tau schedule"
                .to_string(),
        ));
    }
    if !(p.eps > 0.0) {
        return Err(Error::Config("step guard requires eps > 0".to_string()));
    }
    let sig2 = p.sigma_second_sup();
    let lam = p.lambda_prime_sup();
    let mut entries: Vec<(&'static str, f64)> = vec![("1", 1.0)];
    if sig2 > 0.0 {
        entries.push(("tau/(2*sup|sigma''|)", p.tau / (2.0 * sig2)));
        entries.push(("gamma/(8*sup|sigma''|^2)", p.gamma / (8.0 * sig2 * sig2)));
    }
    if lam > 0.0 {
        entries.push((
            "c_s*eps*tau/(2*sup|lambda_eps'|^2)",
            p.c_s * p.eps * p.tau / (2.0 * lam * lam),
        ));
    }
    let (binding, h0) = entries
        .iter()
        .cloned()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    Ok(StepGuard { h0, binding, entries })
}

/// Contraction factor of `S = B ∘ A` at step size `h`:
/// `2 sup|lambda_eps'|^2 h / (c_s eps tau)`.
pub fn contraction_bound(p: &PhysParams, h: f64) -> f64 {
    let lam = p.lambda_prime_sup();
    2.0 * lam * lam * h / (p.c_s * p.eps * p.tau)
}

/// Chemical potential update
/// `mu_{n+1} = G mu_n + (1/h) G (phi_n - phi_{n+1})`.
pub fn reconstruct_mu(
    mesh: &Mesh,
    mu_n: &[f64],
    phi_n: &[f64],
    phi_next: &[f64],
    h: f64,
) -> GridFunction {
    let g_mu = mesh.neumann_green(mu_n);
    let diff: Vec<f64> = phi_n.iter().zip(phi_next.iter()).map(|(a, b)| a - b).collect();
    let g_diff = mesh.neumann_green(&diff);
    g_mu.iter()
        .zip(g_diff.iter())
        .map(|(a, b)| a + b / h)
        .collect()
}

/// Telemetry of one nonlinear solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub cg_iterations: usize,
    pub damping_events: usize,
}

/// Output of the contraction fixed point for one (sub)step.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub theta: GridFunction,
    pub phi: GridFunction,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub stats_a: SolveStats,
    pub stats_b: SolveStats,
}

/// Per-step telemetry and invariant values.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    /// Step size actually used for the final substep.
    pub h_used: f64,
    pub substeps: u32,
    pub retries: u32,
    pub fp_iterations: usize,
    pub ratios: Vec<f64>,
    /// Largest ratio subject to the contraction assertion (0 when fewer than
    /// three ratios were measured).
    pub max_ratio: f64,
    pub contraction_factor: f64,
    pub newton_a_iterations: usize,
    pub newton_b_iterations: usize,
    pub residual_a: f64,
    pub residual_b: f64,
    pub cg_iterations: usize,
    pub damping_events: usize,
    /// Mean of `phi + h mu` over the domain.
    pub conserved: f64,
    /// Energy `gamma/2 ||grad phi||^2 + int betahat_eps(phi) + h/2 ||mu||_M^2`.
    pub energy: f64,
    pub min_theta: f64,
    pub min_rho: f64,
    /// Slack of the temperature convexity inequality (>= -1e-9 on success).
    pub slack_temperature: f64,
    /// Slack of the subgradient inequality for the envelope.
    pub slack_subgradient: f64,
    /// Slack of the per-step energy inequality.
    pub slack_energy: f64,
    /// Gap of the exact per-step testing identity.
    pub identity_gap: f64,
    /// Gap of `h ||grad mu||^2 = h ||dphi/h + dmu||_{V0*}^2`.
    pub flux_identity_gap: f64,
    /// Max-norm residual of the three step equations at the accepted state.
    pub scheme_residual: f64,
}

/// Completed (or partially completed) run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t_final: f64,
    pub n_steps: usize,
    pub h: f64,
    pub states: Vec<State>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|i| i as f64 * self.h).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub step: usize,
    pub message: String,
}

/// Result of a run: the trajectory computed so far plus failure info when a
/// step aborted after exhausting its retries.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub failure: Option<RunFailure>,
}

/// One time-discrete problem: parameters, data, mesh and tolerances.
pub struct Scheme<'a> {
    pub params: &'a PhysParams,
    pub data: &'a BoundaryAndData,
    pub mesh: &'a Mesh,
    pub tol: Tolerances,
}

impl<'a> Scheme<'a> {
    pub fn new(
        params: &'a PhysParams,
        data: &'a BoundaryAndData,
        mesh: &'a Mesh,
    ) -> Result<Self, Error> {
        params.validate()?;
        data.validate(mesh, params)?;
        Ok(Scheme {
            params,
            data,
            mesh,
            tol: Tolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// Initial level: `theta = theta0`, `u = Ln_eps(theta0)`, `phi = phi0`,
    /// `mu = mu0`.
    pub fn initial_state(&self) -> Result<State, Error> {
        let reg = self.params.reg_log();
        let u = self
            .data
            .theta0
            .iter()
            .map(|t| reg.eval(*t))
            .collect::<Result<Vec<f64>, Error>>()?;
        Ok(State {
            index: 0,
            theta: self.data.theta0.clone(),
            phi: self.data.phi0.clone(),
            mu: self.data.mu0.clone(),
            u,
        })
    }

    /// Temperature elliptic solve `A`: given the previous state and a trial
    /// phase, return `theta` solving equation (1) over `[t0, t1]`. Newton
    /// starts from the previous time level.
    pub fn solve_temperature(
        &self,
        state: &State,
        phi_trial: &[f64],
        window: (f64, f64),
    ) -> Result<(GridFunction, SolveStats), Error> {
        self.solve_temperature_from(&state.theta, state, phi_trial, window)
    }

    /// Temperature solve with an explicit Newton starting point (the fixed
    /// point warm-starts from its previous iterate).
    fn solve_temperature_from(
        &self,
        initial: &[f64],
        state: &State,
        phi_trial: &[f64],
        window: (f64, f64),
    ) -> Result<(GridFunction, SolveStats), Error> {
        let (t0, t1) = window;
        let h = t1 - t0;
        let p = self.params;
        let mesh = self.mesh;
        let n = mesh.n_nodes();
        let mass = mesh.lumped_mass();
        let reg = p.reg_log();

        let f_avg = self.data.source.average_nodal(mesh, t0, t1);
        let tg0 = self.data.theta_gamma[0].interval_average(t0, t1);
        let tg1 = self.data.theta_gamma[1].interval_average(t0, t1);

        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let lam_p = p.latent.trunc_prime(p.eps, state.phi[i]);
            rhs[i] = h * mass[i] * f_avg[i]
                + p.c_s * mass[i] * state.u[i]
                + mass[i] * lam_p * (state.phi[i] - phi_trial[i]);
        }
        rhs[0] += h * mesh.alpha0() * tg0;
        rhs[n - 1] += h * mesh.alpha1() * tg1;
        let scale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));

        let eta_h = p.eta * h;
        let off = vec![-eta_h / mesh.dx(); n - 1];

        let residual = |theta: &[f64]| -> Result<(Vec<f64>, Vec<f64>, f64), Error> {
            let k_theta = mesh.apply_stiffness(theta);
            let mut res = vec![0.0; n];
            let mut ln_deriv = vec![0.0; n];
            let mut worst = 0.0f64;
            for i in 0..n {
                let (ln, dln) = reg.eval_with_deriv(theta[i])?;
                ln_deriv[i] = dln;
                res[i] = p.c_s * mass[i] * ln
                    + eta_h * k_theta[i]
                    + h * mesh.robin_diag(i) * theta[i]
                    - rhs[i];
                worst = worst.max(res[i].abs());
            }
            Ok((res, ln_deriv, worst))
        };

        let mut theta = initial.to_vec();
        let mut stats = SolveStats::default();
        let (mut res, mut ln_deriv, mut worst) = residual(&theta)?;
        for iter in 0..self.tol.newton_cap {
            if worst <= self.tol.newton_target * scale {
                stats.iterations = iter;
                stats.residual = worst;
                return Ok((theta, stats));
            }
            let diag: Vec<f64> = (0..n)
                .map(|i| {
                    p.c_s * mass[i] * ln_deriv[i]
                        + eta_h * mesh.stiffness_diag(i)
                        + h * mesh.robin_diag(i)
                })
                .collect();
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let step = thomas_symmetric(&diag, &off, &neg);

            // backtracking on the residual norm; the Jacobian is SPD so the
            // Newton direction is a descent direction for it
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> =
                    theta.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
                let (tres, tderiv, tworst) = residual(&trial)?;
                if tworst <= (1.0 - 1e-4 * t) * worst || tworst <= self.tol.newton_target * scale {
                    theta = trial;
                    res = tres;
                    ln_deriv = tderiv;
                    worst = tworst;
                    break;
                }
                t *= 0.5;
                stats.damping_events += 1;
                if t < 2f64.powi(-30) {
                    // no further decrease is possible in floating point
                    stats.iterations = iter + 1;
                    stats.residual = worst;
                    return if worst <= self.tol.newton_accept * scale {
                        Ok((theta, stats))
                    } else {
                        Err(Error::SolveFailed {
                            context: "temperature solve",
                            detail: format!("line search stalled at residual {worst:.3e}"),
                        })
                    };
                }
            }
        }
        stats.iterations = self.tol.newton_cap;
        stats.residual = worst;
        if worst <= self.tol.newton_accept * scale {
            Ok((theta, stats))
        } else {
            Err(Error::SolveFailed {
                context: "temperature solve",
                detail: format!(
                    "residual {worst:.3e} above {:.1e} after {} iterations",
                    self.tol.newton_accept * scale,
                    self.tol.newton_cap
                ),
            })
        }
    }

    /// Phase elliptic solve `B`: given the previous state and a temperature,
    /// return `phi` solving equation (3) at step size `h`. Newton starts
    /// from the previous time level.
    pub fn solve_phase(
        &self,
        state: &State,
        theta_input: &[f64],
        h: f64,
    ) -> Result<(GridFunction, SolveStats), Error> {
        self.solve_phase_from(&state.phi, state, theta_input, h)
    }

    /// Phase solve with an explicit Newton starting point.
    fn solve_phase_from(
        &self,
        initial: &[f64],
        state: &State,
        theta_input: &[f64],
        h: f64,
    ) -> Result<(GridFunction, SolveStats), Error> {
        let p = self.params;
        let mesh = self.mesh;
        let n = mesh.n_nodes();
        let mass = mesh.lumped_mass();

        let g_mu = mesh.neumann_green(&state.mu);
        let g_phi = mesh.neumann_green(&state.phi);
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let lam_p = p.latent.trunc_prime(p.eps, state.phi[i]);
            rhs[i] = mass[i]
                * (p.tau * state.phi[i] + h * g_mu[i] + g_phi[i] + h * lam_p * theta_input[i]);
        }
        let scale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        let gamma_h = p.gamma * h;
        let sig2 = p.sigma_second();

        let residual = |phi: &[f64]| -> Result<(Vec<f64>, Vec<f64>, f64), Error> {
            let g = mesh.neumann_green(phi);
            let k = mesh.apply_stiffness(phi);
            let mut res = vec![0.0; n];
            let mut beta_deriv = vec![0.0; n];
            let mut worst = 0.0f64;
            for i in 0..n {
                let (b, db) = yosida_with_deriv(p.graph, p.eps, phi[i])?;
                beta_deriv[i] = db;
                res[i] = p.tau * mass[i] * phi[i]
                    + mass[i] * g[i]
                    + gamma_h * k[i]
                    + h * mass[i] * b
                    + h * mass[i] * p.sigma_prime(phi[i])
                    - rhs[i];
                worst = worst.max(res[i].abs());
            }
            Ok((res, beta_deriv, worst))
        };

        let mut phi = initial.to_vec();
        let mut stats = SolveStats::default();
        let (mut res, mut beta_deriv, mut worst) = residual(&phi)?;
        for iter in 0..self.tol.newton_cap {
            if worst <= self.tol.newton_target * scale {
                stats.iterations = iter;
                stats.residual = worst;
                return Ok((phi, stats));
            }
            // linear stage: CG on the SPD operator
            //   tau M + M G + gamma h K + h M diag(beta_eps') + h M sigma''
            let bd = beta_deriv.clone();
            let apply = |v: &[f64]| -> Vec<f64> {
                let gv = mesh.neumann_green(v);
                let kv = mesh.apply_stiffness(v);
                (0..n)
                    .map(|i| {
                        p.tau * mass[i] * v[i]
                            + mass[i] * gv[i]
                            + gamma_h * kv[i]
                            + h * mass[i] * (bd[i] + sig2) * v[i]
                    })
                    .collect()
            };
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let (step, cg_iters) =
                conjugate_gradient(apply, &neg, self.tol.cg_rel, 40 * n.max(16))?;
            stats.cg_iterations += cg_iters;

            let mut t = 1.0;
            loop {
                let trial: Vec<f64> =
                    phi.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
                let (tres, tderiv, tworst) = residual(&trial)?;
                if tworst <= (1.0 - 1e-4 * t) * worst || tworst <= self.tol.newton_target * scale {
                    phi = trial;
                    res = tres;
                    beta_deriv = tderiv;
                    worst = tworst;
                    break;
                }
                t *= 0.5;
                stats.damping_events += 1;
                if t < 2f64.powi(-30) {
                    // no further decrease is possible in floating point
                    stats.iterations = iter + 1;
                    stats.residual = worst;
                    return if worst <= self.tol.newton_accept * scale {
                        Ok((phi, stats))
                    } else {
                        Err(Error::SolveFailed {
                            context: "phase solve",
                            detail: format!("line search stalled at residual {worst:.3e}"),
                        })
                    };
                }
            }
        }
        stats.iterations = self.tol.newton_cap;
        stats.residual = worst;
        if worst <= self.tol.newton_accept * scale {
            Ok((phi, stats))
        } else {
            Err(Error::SolveFailed {
                context: "phase solve",
                detail: format!(
                    "residual {worst:.3e} above {:.1e} after {} iterations",
                    self.tol.newton_accept * scale,
                    self.tol.newton_cap
                ),
            })
        }
    }

    /// Iterate `phi_{k+1} = B(A(phi_k))` from `phi_0 = phi_n` until the
    /// M-norm of successive iterates drops below the fixed-point tolerance.
    /// Measured ratios beyond a 2-iteration burn-in must stay below the
    /// contraction factor; a violation is reported as an invariant error
    /// since the bound is proven for step sizes below the guard.
    pub fn fixed_point_step(
        &self,
        state: &State,
        window: (f64, f64),
    ) -> Result<FixedPointResult, Error> {
        let h = window.1 - window.0;
        let guard = step_guard(self.params)?;
        if h > STEP_SAFETY * guard.h0 * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "step size {h:.6e} exceeds {STEP_SAFETY} * h0 = {:.6e} (binding entry {})",
                STEP_SAFETY * guard.h0,
                guard.binding
            )));
        }
        let q = contraction_bound(self.params, h);
        let mut stats_a = SolveStats::default();
        let mut stats_b = SolveStats::default();
        let mut ratios = Vec::new();
        let mut phi_iter = state.phi.clone();
        let mut theta_guess = state.theta.clone();
        let mut prev_diff: Option<f64> = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut last_diff = f64::NAN;

        for k in 0..self.tol.fixed_point_cap {
            let (theta, sa) =
                self.solve_temperature_from(&theta_guess, state, &phi_iter, window)?;
            let (phi_next, sb) = self.solve_phase_from(&phi_iter, state, &theta, h)?;
            theta_guess = theta;
            accumulate(&mut stats_a, &sa);
            accumulate(&mut stats_b, &sb);
            stats_b.residual = sb.residual;
            iterations = k + 1;

            let diff_vec: Vec<f64> = phi_next
                .iter()
                .zip(phi_iter.iter())
                .map(|(a, b)| a - b)
                .collect();
            let diff = self.mesh.mass_norm(&diff_vec);
            if let Some(pd) = prev_diff {
                if pd > 0.0 {
                    let ratio = diff / pd;
                    ratios.push(ratio);
                    if ratios.len() > 2 && ratio > q * (1.0 + self.tol.ratio_slack) {
                        return Err(Error::InvariantViolation(format!(
                            "fixed-point ratio {ratio:.6e} exceeds contraction factor {q:.6e} at iteration {k}"
                        )));
                    }
                }
            }
            phi_iter = phi_next;
            if diff <= self.tol.fixed_point {
                converged = true;
                last_diff = diff;
                break;
            }
            prev_diff = Some(diff);
        }
        if !converged {
            return Err(Error::SolveFailed {
                context: "fixed point",
                detail: format!(
                    "no convergence after {} iterations (last diff {:.3e})",
                    self.tol.fixed_point_cap,
                    prev_diff.unwrap_or(f64::NAN)
                ),
            });
        }

        // Polish: the potential update divides the phase increment by h, so
        // keep contracting toward the floating-point floor. Ratios here are
        // noise-dominated and not subject to the contraction assertion.
        let floor = 64.0 * f64::EPSILON * self.mesh.mass_norm(&phi_iter).max(1.0);
        for _ in 0..self.tol.fixed_point_polish_cap {
            if last_diff <= floor {
                break;
            }
            let (theta, sa) =
                self.solve_temperature_from(&theta_guess, state, &phi_iter, window)?;
            let (phi_next, sb) = self.solve_phase_from(&phi_iter, state, &theta, h)?;
            theta_guess = theta;
            accumulate(&mut stats_a, &sa);
            accumulate(&mut stats_b, &sb);
            stats_b.residual = sb.residual;
            iterations += 1;
            let diff_vec: Vec<f64> = phi_next
                .iter()
                .zip(phi_iter.iter())
                .map(|(a, b)| a - b)
                .collect();
            let diff = self.mesh.mass_norm(&diff_vec);
            phi_iter = phi_next;
            if diff >= 0.5 * last_diff {
                // updates no longer contract: floor reached
                break;
            }
            last_diff = diff;
        }

        // recompute the temperature from the final phase so the accepted
        // triple satisfies the coupled equations tightly
        let (theta_final, sa2) =
            self.solve_temperature_from(&theta_guess, state, &phi_iter, window)?;
        accumulate(&mut stats_a, &sa2);
        stats_a.residual = sa2.residual;
        Ok(FixedPointResult {
            theta: theta_final,
            phi: phi_iter,
            iterations,
            ratios,
            stats_a,
            stats_b,
        })
    }

    /// Max-norm residuals of the three step equations at an accepted state
    /// pair, in the order (temperature, potential update, phase).
    pub fn scheme_residuals(
        &self,
        state: &State,
        next: &State,
        window: (f64, f64),
    ) -> Result<[f64; 3], Error> {
        let (t0, t1) = window;
        let h = t1 - t0;
        let p = self.params;
        let mesh = self.mesh;
        let n = mesh.n_nodes();
        let mass = mesh.lumped_mass();
        let reg = p.reg_log();

        let f_avg = self.data.source.average_nodal(mesh, t0, t1);
        let tg0 = self.data.theta_gamma[0].interval_average(t0, t1);
        let tg1 = self.data.theta_gamma[1].interval_average(t0, t1);
        let k_theta = mesh.apply_stiffness(&next.theta);
        let mut r1 = 0.0f64;
        for i in 0..n {
            let lam_p = p.latent.trunc_prime(p.eps, state.phi[i]);
            let mut res = p.c_s * mass[i] * reg.eval(next.theta[i])?
                + p.eta * h * k_theta[i]
                + h * mesh.robin_diag(i) * next.theta[i]
                - h * mass[i] * f_avg[i]
                - p.c_s * mass[i] * state.u[i]
                - mass[i] * lam_p * (state.phi[i] - next.phi[i]);
            if i == 0 {
                res -= h * mesh.alpha0() * tg0;
            }
            if i == n - 1 {
                res -= h * mesh.alpha1() * tg1;
            }
            r1 = r1.max(res.abs());
        }

        let rebuilt = reconstruct_mu(mesh, &state.mu, &state.phi, &next.phi, h);
        let r2 = next
            .mu
            .iter()
            .zip(rebuilt.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        let g_next = mesh.neumann_green(&next.phi);
        let g_mu = mesh.neumann_green(&state.mu);
        let g_phi = mesh.neumann_green(&state.phi);
        let k_phi = mesh.apply_stiffness(&next.phi);
        let mut r3 = 0.0f64;
        for i in 0..n {
            let lam_p = p.latent.trunc_prime(p.eps, state.phi[i]);
            let beta = crate::graphs::yosida(p.graph, p.eps, next.phi[i])?;
            let res = p.tau * mass[i] * next.phi[i]
                + mass[i] * g_next[i]
                + p.gamma * h * k_phi[i]
                + h * mass[i] * beta
                + h * mass[i] * p.sigma_prime(next.phi[i])
                - mass[i]
                    * (p.tau * state.phi[i] + h * g_mu[i] + g_phi[i] + h * lam_p * next.theta[i]);
            r3 = r3.max(res.abs());
        }
        Ok([r1, r2, r3])
    }

    /// Advance one step of the outer grid, retrying with halved substeps on
    /// solver failure (up to `retry_cap` halvings). Only solve failures are
    /// retried; invariant violations and precondition errors propagate.
    pub fn advance(&self, state: &State, window: (f64, f64)) -> Result<(State, StepReport), Error> {
        let mut last: Option<Error> = None;
        for retry in 0..=self.tol.retry_cap {
            match self.advance_substepped(state, window, 1usize << retry, retry) {
                Ok(out) => return Ok(out),
                Err(e @ Error::SolveFailed { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(Error::StepFailed {
            step: state.index,
            retries: self.tol.retry_cap,
            reason: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    fn advance_substepped(
        &self,
        state: &State,
        window: (f64, f64),
        pieces: usize,
        retries: u32,
    ) -> Result<(State, StepReport), Error> {
        let (t0, t1) = window;
        let h_sub = (t1 - t0) / pieces as f64;
        let reg = self.params.reg_log();

        let mut current = state.clone();
        let mut report = StepReport {
            step: state.index,
            h_used: h_sub,
            substeps: pieces as u32,
            retries,
            fp_iterations: 0,
            ratios: Vec::new(),
            max_ratio: 0.0,
            contraction_factor: contraction_bound(self.params, h_sub),
            newton_a_iterations: 0,
            newton_b_iterations: 0,
            residual_a: 0.0,
            residual_b: 0.0,
            cg_iterations: 0,
            damping_events: 0,
            conserved: 0.0,
            energy: 0.0,
            min_theta: f64::INFINITY,
            min_rho: f64::INFINITY,
            slack_temperature: f64::INFINITY,
            slack_subgradient: f64::INFINITY,
            slack_energy: f64::INFINITY,
            identity_gap: 0.0,
            flux_identity_gap: 0.0,
            scheme_residual: 0.0,
        };

        for piece in 0..pieces {
            let w = (
                t0 + piece as f64 * h_sub,
                if piece + 1 == pieces {
                    t1
                } else {
                    t0 + (piece + 1) as f64 * h_sub
                },
            );
            let fp = self.fixed_point_step(&current, w)?;
            let mu = reconstruct_mu(self.mesh, &current.mu, &current.phi, &fp.phi, w.1 - w.0);
            let mut u = Vec::with_capacity(fp.theta.len());
            let mut min_theta = f64::INFINITY;
            let mut min_rho = f64::INFINITY;
            for t in &fp.theta {
                u.push(reg.eval(*t)?);
                min_theta = min_theta.min(*t);
                min_rho = min_rho.min(reg.rho(*t)?);
            }
            let next = State {
                index: current.index + 1,
                theta: fp.theta,
                phi: fp.phi,
                mu,
                u,
            };

            let step_diag =
                diagnostics::step_diagnostics(self.mesh, self.params, &current, &next, w.1 - w.0)?;
            let residuals = self.scheme_residuals(&current, &next, w)?;

            report.fp_iterations += fp.iterations;
            report.max_ratio = report
                .max_ratio
                .max(fp.ratios.iter().skip(2).cloned().fold(0.0, f64::max));
            report.ratios.extend(fp.ratios);
            report.newton_a_iterations += fp.stats_a.iterations;
            report.newton_b_iterations += fp.stats_b.iterations;
            report.residual_a = report.residual_a.max(fp.stats_a.residual);
            report.residual_b = report.residual_b.max(fp.stats_b.residual);
            report.cg_iterations += fp.stats_a.cg_iterations + fp.stats_b.cg_iterations;
            report.damping_events += fp.stats_a.damping_events + fp.stats_b.damping_events;
            report.min_theta = report.min_theta.min(min_theta);
            report.min_rho = report.min_rho.min(min_rho);
            report.slack_temperature = report.slack_temperature.min(step_diag.slack_temperature);
            report.slack_subgradient = report.slack_subgradient.min(step_diag.slack_subgradient);
            report.slack_energy = report.slack_energy.min(step_diag.slack_energy);
            report.identity_gap = report.identity_gap.max(step_diag.identity_gap);
            report.flux_identity_gap = report.flux_identity_gap.max(step_diag.flux_identity_gap);
            report.scheme_residual = report
                .scheme_residual
                .max(residuals.iter().cloned().fold(0.0, f64::max));
            report.conserved = step_diag.conserved;
            report.energy = step_diag.energy;

            current = next;
        }
        Ok((current, report))
    }

    /// Run `n_steps` uniform steps to `t_final`. On a step failure the
    /// partial trajectory is returned together with the failure.
    pub fn run(&self, t_final: f64, n_steps: usize) -> Result<RunOutcome, Error> {
        let h = t_final / n_steps as f64;
        let mut states = vec![self.initial_state()?];
        let mut reports = Vec::with_capacity(n_steps);
        let mut failure = None;
        for n in 0..n_steps {
            let window = (n as f64 * h, (n + 1) as f64 * h);
            match self.advance(states.last().unwrap(), window) {
                Ok((next, report)) => {
                    states.push(next);
                    reports.push(report);
                }
                Err(e @ Error::InvariantViolation(_)) => return Err(e),
                Err(e) => {
                    failure = Some(RunFailure {
                        step: n,
                        message: e.to_string(),
                    });
                    break;
                }
            }
        }
        Ok(RunOutcome {
            trajectory: Trajectory {
                t_final,
                n_steps,
                h,
                states,
                reports,
            },
            failure,
        })
    }
}

fn accumulate(into: &mut SolveStats, from: &SolveStats) {
    into.iterations += from.iterations;
    into.cg_iterations += from.cg_iterations;
    into.damping_events += from.damping_events;
    into.residual = into.residual.max(from.residual);
}

/// Matrix-free conjugate gradient for SPD operators. Returns the solution
/// and the iteration count; errs when the cap is reached before the
/// relative residual tolerance.
fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    rel_tol: f64,
    cap: usize,
) -> Result<(Vec<f64>, usize), Error>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let target = rel_tol * b_norm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|x| x * x).sum();
    for iter in 0..cap {
        if rs.sqrt() <= target {
            return Ok((x, iter));
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::SolveFailed {
                context: "conjugate gradient",
                detail: format!("operator lost positive definiteness (p.Ap = {pap:.3e})"),
            });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    if rs.sqrt() <= target * 10.0 {
        // accept a near-miss; the Newton loop re-verifies the true residual
        return Ok((x, cap));
    }
    Err(Error::SolveFailed {
        context: "conjugate gradient",
        detail: format!(
            "no convergence after {cap} iterations (residual {:.3e}, target {:.3e})",
            rs.sqrt(),
            target
        ),
    })
}

/// Parameter swept by a continuation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    H,
    Eps,
    Tau,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "h" => Ok(SweepParam::H),
            "eps" => Ok(SweepParam::Eps),
            "tau" => Ok(SweepParam::Tau),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected h, eps or tau)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::H => "h",
            SweepParam::Eps => "eps",
            SweepParam::Tau => "tau",
        }
    }
}

/// Distance between two trajectories sampled on the coarser time grid.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryDistance {
    /// Discrete L2(0,T;H) distances per field.
    pub l2_theta: f64,
    pub l2_phi: f64,
    pub l2_mu: f64,
    /// Combined state distance sqrt(l2_theta^2 + l2_phi^2 + l2_mu^2).
    pub l2_state: f64,
    /// Sup-in-time V* distance of the phase.
    pub linf_vstar_phi: f64,
}

/// Compare two successful trajectories over the same final time; the step
/// counts must be nested (one divides the other).
pub fn trajectory_distance(
    mesh: &Mesh,
    a: &Trajectory,
    b: &Trajectory,
) -> Result<TrajectoryDistance, Error> {
    let (coarse, fine) = if a.n_steps <= b.n_steps { (a, b) } else { (b, a) };
    if fine.n_steps % coarse.n_steps != 0 {
        return Err(Error::Precondition(format!(
            "trajectory grids are not nested ({} vs {} steps)",
            coarse.n_steps, fine.n_steps
        )));
    }
    if coarse.states.len() != coarse.n_steps + 1 || fine.states.len() != fine.n_steps + 1 {
        return Err(Error::Precondition(
            "trajectory distance requires completed runs".to_string(),
        ));
    }
    let stride = fine.n_steps / coarse.n_steps;
    let h = coarse.h;
    let mut acc_theta = 0.0;
    let mut acc_phi = 0.0;
    let mut acc_mu = 0.0;
    let mut sup_vstar = 0.0f64;
    for i in 0..=coarse.n_steps {
        let sa = &coarse.states[i];
        let sb = &fine.states[i * stride];
        let d_theta: Vec<f64> = sa
            .theta
            .iter()
            .zip(sb.theta.iter())
            .map(|(x, y)| x - y)
            .collect();
        let d_phi: Vec<f64> = sa.phi.iter().zip(sb.phi.iter()).map(|(x, y)| x - y).collect();
        let d_mu: Vec<f64> = sa.mu.iter().zip(sb.mu.iter()).map(|(x, y)| x - y).collect();
        sup_vstar = sup_vstar.max(mesh.dual_norm_v(&d_phi));
        if i > 0 {
            acc_theta += h * mesh.mass_norm_sq(&d_theta);
            acc_phi += h * mesh.mass_norm_sq(&d_phi);
            acc_mu += h * mesh.mass_norm_sq(&d_mu);
        }
    }
    Ok(TrajectoryDistance {
        l2_theta: acc_theta.sqrt(),
        l2_phi: acc_phi.sqrt(),
        l2_mu: acc_mu.sqrt(),
        l2_state: (acc_theta + acc_phi + acc_mu).sqrt(),
        linf_vstar_phi: sup_vstar,
    })
}

/// One level of a continuation study.
pub struct SweepLevel {
    pub level: usize,
    /// Value of the swept parameter at this level.
    pub value: f64,
    pub h: f64,
    pub n_steps: usize,
    pub outcome: Result<(Trajectory, diagnostics::BoundReport), String>,
    /// Distance to the previous successful level.
    pub diff_from_prev: Option<TrajectoryDistance>,
}

/// Continuation driver: runs a halving schedule of `param` starting from the
/// base configuration.
///
/// For `h` the step count doubles per level. For `eps` and `tau` every level
/// runs on one common time grid, refined by powers of two until the step
/// guard of the most restrictive (last) level is satisfied; differences
/// between levels then isolate the swept parameter.
pub fn continuation(
    params: &PhysParams,
    data: &BoundaryAndData,
    mesh: &Mesh,
    t_final: f64,
    n_steps: usize,
    param: SweepParam,
    levels: usize,
) -> Result<Vec<SweepLevel>, Error> {
    if levels < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least 2 levels, got {levels}"
        )));
    }
    let base_value = match param {
        SweepParam::H => t_final / n_steps as f64,
        SweepParam::Eps => params.eps,
        SweepParam::Tau => params.tau,
    };
    let level_params = |j: usize| -> PhysParams {
        let mut p = params.clone();
        match param {
            SweepParam::H => {}
            SweepParam::Eps => p.eps = base_value / 2f64.powi(j as i32),
            SweepParam::Tau => p.tau = base_value / 2f64.powi(j as i32),
        }
        p
    };

    // common grid for eps/tau sweeps: power-of-two refinement of the base
    // grid satisfying the guard of the last (tightest) level
    let common_steps = if param == SweepParam::H {
        n_steps
    } else {
        let tightest = step_guard(&level_params(levels - 1))?;
        let mut n = n_steps;
        while t_final / n as f64 > STEP_SAFETY * tightest.h0 {
            n = n
                .checked_mul(2)
                .ok_or_else(|| Error::Config("sweep grid refinement overflowed".to_string()))?;
        }
        n
    };

    let mut rows: Vec<SweepLevel> = Vec::with_capacity(levels);
    let mut prev_ok: Option<usize> = None;
    for j in 0..levels {
        let p = level_params(j);
        let (n_j, value) = match param {
            SweepParam::H => (
                n_steps * (1usize << j),
                t_final / (n_steps * (1usize << j)) as f64,
            ),
            SweepParam::Eps => (common_steps, p.eps),
            SweepParam::Tau => (common_steps, p.tau),
        };
        let h_j = t_final / n_j as f64;
        let outcome = (|| -> Result<(Trajectory, diagnostics::BoundReport), String> {
            let scheme = Scheme::new(&p, data, mesh).map_err(|e| e.to_string())?;
            let out = scheme.run(t_final, n_j).map_err(|e| e.to_string())?;
            if let Some(f) = out.failure {
                return Err(format!("step {} failed: {}", f.step, f.message));
            }
            let bounds =
                diagnostics::bound_tracker(mesh, &p, &out.trajectory).map_err(|e| e.to_string())?;
            Ok((out.trajectory, bounds))
        })();
        let diff_from_prev = match (&outcome, prev_ok) {
            (Ok((traj, _)), Some(prev_idx)) => match &rows[prev_idx].outcome {
                Ok((prev_t, _)) => Some(trajectory_distance(mesh, prev_t, traj)?),
                Err(_) => None,
            },
            _ => None,
        };
        if outcome.is_ok() {
            prev_ok = Some(j);
        }
        rows.push(SweepLevel {
            level: j,
            value,
            h: h_j,
            n_steps: n_j,
            outcome,
            diff_from_prev,
        });
    }
    Ok(rows)
}
