//! Independent brute-force verification.
//!
//! * [`dense_step_solve`] assembles the coupled step system (temperature and
//!   phase together, potential eliminated through its update formula) with a
//!   dense analytic Jacobian and solves it by damped Newton on tiny meshes.
//!   Uniqueness of the step solution below the guard means the result must
//!   match the contraction fixed point of the stepper.
//! * [`prox_bruteforce`] minimizes the Moreau objective by grid search plus
//!   golden-section refinement, cross-checking the resolvent solvers.
//! * [`fd_check`] compares analytic derivatives against central differences.
//!
//! Randomized cases use a small deterministic generator so frozen expected
//! values and reports are bit-stable across runs and platforms.

use crate::graphs::{self, betahat, GraphSpec};
use crate::mesh::Mesh;
use crate::stepper::{BoundaryAndData, PhysParams, State};
use crate::Error;

/// SplitMix64: tiny deterministic generator for reproducible test cases.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let x = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * x
    }
}

/// Resolvent by brute force: grid search of
/// `s -> |r - s|^2 / (2 eps) + betahat(s)` over the effective domain with
/// step 1e-3, then golden-section refinement of the bracketing interval down
/// to width 1e-10, then a sign bisection of the closed-form optimality
/// condition around the located point (value-based minimization alone cannot
/// localize the minimizer below sqrt(machine eps) of the objective scale).
pub fn prox_bruteforce(g: GraphSpec, eps: f64, r: f64) -> f64 {
    let objective = |s: f64| -> f64 {
        match betahat(g, s) {
            graphs::Extended::Finite(v) => (r - s) * (r - s) / (2.0 * eps) + v,
            graphs::Extended::PosInf => f64::INFINITY,
        }
    };
    // the minimizer lies between 0 and r, intersected with the domain
    let (mut lo, mut hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
    let (dlo, dhi) = g.domain_interior();
    lo = lo.max(dlo.max(-1.0 - 1e-9));
    hi = hi.min(dhi.min(1.0 + 1e-9));
    if matches!(g.kind, graphs::GraphKind::Regular) {
        lo = if r >= 0.0 { 0.0 } else { r };
        hi = if r >= 0.0 { r } else { 0.0 };
    }
    if hi - lo <= 0.0 {
        return lo;
    }

    let steps = ((hi - lo) / 1e-3).ceil() as usize;
    let mut best = (objective(lo), lo);
    for i in 0..=steps {
        let s = lo + (hi - lo) * i as f64 / steps as f64;
        let v = objective(s);
        if v < best.0 {
            best = (v, s);
        }
    }
    let width = (hi - lo) / steps as f64;
    let mut a = (best.1 - width).max(lo);
    let mut b = (best.1 + width).min(hi);

    // golden-section refinement
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let located = 0.5 * (a + b);

    // Optimality-condition bisection: the objective derivative
    // (s - r)/eps + betahat'(s) is strictly increasing; bisect its sign over
    // a small window around the located point, clamped to the domain.
    // Written from the closed-form derivatives, so it shares nothing with
    // the resolvent solvers.
    let slope = |s: f64| -> f64 {
        let pot = match g.kind {
            graphs::GraphKind::Regular => s * s * s,
            graphs::GraphKind::Logarithmic => ((1.0 + s) / (1.0 - s)).ln(),
            graphs::GraphKind::Indicator => 0.0,
        };
        (s - r) / eps + pot
    };
    let (dom_lo, dom_hi) = match g.kind {
        graphs::GraphKind::Regular => (f64::NEG_INFINITY, f64::INFINITY),
        graphs::GraphKind::Logarithmic => (-1.0 + 1e-15, 1.0 - 1e-15),
        graphs::GraphKind::Indicator => (-1.0, 1.0),
    };
    let mut pa = (located - 1e-6).max(dom_lo);
    let mut pb = (located + 1e-6).min(dom_hi);
    if slope(pa) >= 0.0 {
        return pa;
    }
    if slope(pb) <= 0.0 {
        return pb;
    }
    for _ in 0..80 {
        let mid = 0.5 * (pa + pb);
        if slope(mid) > 0.0 {
            pb = mid;
        } else {
            pa = mid;
        }
    }
    0.5 * (pa + pb)
}

/// Max relative error of the central difference of `f` against `fprime`
/// over the sample points.
pub fn fd_check<F, G>(f: F, fprime: G, points: &[f64], step: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut worst = 0.0f64;
    for &x in points {
        let fd = (f(x + step) - f(x - step)) / (2.0 * step);
        let exact = fprime(x);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    worst
}

/// Dense LU solve with partial pivoting; `a` is consumed.
#[allow(clippy::needless_range_loop)]
pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

fn dense_m_plus_k(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.n_nodes();
    let inv = 1.0 / mesh.dx();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = mesh.lumped_mass()[i] + mesh.stiffness_diag(i);
        if i + 1 < n {
            a[i][i + 1] = -inv;
            a[i + 1][i] = -inv;
        }
    }
    a
}

/// Dense Green matrix `G = (M + K)^{-1} M`, column by column.
fn dense_green(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.n_nodes();
    let mut g = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = mesh.lumped_mass()[j];
        let col = dense_solve(dense_m_plus_k(mesh), e);
        for i in 0..n {
            g[i][j] = col[i];
        }
    }
    g
}

fn dense_stiffness(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.n_nodes();
    let inv = 1.0 / mesh.dx();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = mesh.stiffness_diag(i);
        if i + 1 < n {
            k[i][i + 1] = -inv;
            k[i + 1][i] = -inv;
        }
    }
    k
}

/// Random admissible single-step problem on a 3-node mesh, for randomized
/// oracle comparisons. The parameter ranges keep the step guard moderate
/// (h0 ~ 1e-3) so the `1/h` factor in the potential update does not swamp
/// the comparison with solver floors.
pub fn random_step_case(
    graph: crate::graphs::GraphKind,
    rng: &mut SplitMix64,
) -> (PhysParams, BoundaryAndData, Mesh, State, f64) {
    use crate::stepper::{step_guard, Source, TimeFunction, STEP_SAFETY};
    let theta_b = rng.uniform(0.1, 0.6);
    let p = PhysParams {
        c_s: rng.uniform(0.5, 2.0),
        eta: rng.uniform(0.5, 2.0),
        gamma: rng.uniform(0.5, 2.0),
        tau: rng.uniform(0.1, 0.4),
        eps: rng.uniform(0.2, 0.9),
        graph: GraphSpec::new(graph),
        latent: crate::graphs::LatentHeat::default(),
        theta_a: rng.uniform(0.05, theta_b),
        theta_b,
    };
    let mesh = Mesh::new(2, 1.0, 1.0, 1.0).expect("3-node mesh");
    let n = mesh.n_nodes();
    let reg = p.reg_log();
    let theta: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 2.0)).collect();
    let phi: Vec<f64> = (0..n).map(|_| rng.uniform(-0.9, 0.9)).collect();
    let mu: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let u: Vec<f64> = theta
        .iter()
        .map(|t| reg.eval(*t).expect("regularized log defined everywhere"))
        .collect();
    let data = BoundaryAndData {
        theta_gamma: [
            TimeFunction::Constant(rng.uniform(0.5, 2.0)),
            TimeFunction::Constant(rng.uniform(0.5, 2.0)),
        ],
        source: Source {
            time: TimeFunction::Constant(rng.uniform(-0.5, 0.5)),
            spatial_mode: 1,
        },
        theta0: theta.clone(),
        phi0: phi.clone(),
        mu0: mu.clone(),
        theta_min: 0.1,
        theta_max: 4.0,
    };
    let state = State {
        index: 0,
        theta,
        phi,
        mu,
        u,
    };
    let guard = step_guard(&p).expect("positive tau");
    let h = rng.uniform(0.2, 1.0) * STEP_SAFETY * guard.h0;
    (p, data, mesh, state, h)
}

/// One coupled step problem for the dense oracle. Node count is capped so
/// the dense solves stay trivially robust.
pub struct DenseStepProblem<'a> {
    pub params: &'a PhysParams,
    pub data: &'a BoundaryAndData,
    pub mesh: &'a Mesh,
    pub state: &'a State,
    pub window: (f64, f64),
}

/// Telemetry of the dense solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub damping_events: usize,
}

/// Solution of the dense coupled step: `(theta, phi, mu)` plus stats.
pub type DenseStepSolution = (Vec<f64>, Vec<f64>, Vec<f64>, DenseSolveStats);

/// Solve the coupled step system by damped Newton on the stacked unknown
/// `(theta, phi)`, then rebuild `mu` from its dense update formula.
pub fn dense_step_solve(problem: &DenseStepProblem) -> Result<DenseStepSolution, Error> {
    let mesh = problem.mesh;
    let p = problem.params;
    let data = problem.data;
    let state = problem.state;
    let n = mesh.n_nodes();
    if n > 9 {
        return Err(Error::Precondition(format!(
            "dense oracle is limited to 9 nodes, got {n}"
        )));
    }
    let (t0, t1) = problem.window;
    let h = t1 - t0;
    let mass = mesh.lumped_mass();
    let reg = p.reg_log();
    let green = dense_green(mesh);
    let stiff = dense_stiffness(mesh);

    let f_avg = data.source.average_nodal(mesh, t0, t1);
    let tg0 = data.theta_gamma[0].interval_average(t0, t1);
    let tg1 = data.theta_gamma[1].interval_average(t0, t1);
    let lam_p: Vec<f64> = state
        .phi
        .iter()
        .map(|x| p.latent.trunc_prime(p.eps, *x))
        .collect();

    // fixed right-hand contributions
    let mut rhs1 = vec![0.0; n];
    for i in 0..n {
        rhs1[i] = h * mass[i] * f_avg[i] + p.c_s * mass[i] * state.u[i];
    }
    rhs1[0] += h * mesh.alpha0() * tg0;
    rhs1[n - 1] += h * mesh.alpha1() * tg1;
    let g_mu: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| green[i][j] * state.mu[j]).sum())
        .collect();
    let g_phi_old: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| green[i][j] * state.phi[j]).sum())
        .collect();
    let mut rhs2 = vec![0.0; n];
    for i in 0..n {
        rhs2[i] = mass[i] * (p.tau * state.phi[i] + h * g_mu[i] + g_phi_old[i]);
    }
    let scale = rhs1
        .iter()
        .chain(rhs2.iter())
        .fold(1.0f64, |a, b| a.max(b.abs()));

    // residual of the stacked system z = (theta, phi)
    let eval = |z: &[f64]| -> Result<Vec<f64>, Error> {
        let theta = &z[..n];
        let phi = &z[n..];
        let mut res = vec![0.0; 2 * n];
        let g_phi: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| green[i][j] * phi[j]).sum())
            .collect();
        for i in 0..n {
            let k_theta: f64 = (0..n).map(|j| stiff[i][j] * theta[j]).sum();
            res[i] = p.c_s * mass[i] * reg.eval(theta[i])?
                + p.eta * h * k_theta
                + h * mesh.robin_diag(i) * theta[i]
                - rhs1[i]
                - mass[i] * lam_p[i] * (state.phi[i] - phi[i]);
            let k_phi: f64 = (0..n).map(|j| stiff[i][j] * phi[j]).sum();
            res[n + i] = p.tau * mass[i] * phi[i]
                + mass[i] * g_phi[i]
                + p.gamma * h * k_phi
                + h * mass[i] * graphs::yosida(p.graph, p.eps, phi[i])?
                + h * mass[i] * p.sigma_prime(phi[i])
                - rhs2[i]
                - h * mass[i] * lam_p[i] * theta[i];
        }
        Ok(res)
    };
    let max_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    let mut z: Vec<f64> = state.theta.iter().chain(state.phi.iter()).cloned().collect();
    let mut stats = DenseSolveStats::default();
    let mut res = eval(&z)?;
    let mut worst = max_norm(&res);
    let target = 1e-13 * scale;
    let mut converged = worst <= target;
    for iter in 0..80 {
        if converged {
            stats.iterations = iter;
            break;
        }
        // analytic Jacobian
        let theta = &z[..n];
        let phi = &z[n..];
        let mut jac = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                jac[i][j] = p.eta * h * stiff[i][j];
                jac[n + i][n + j] = mass[i] * green[i][j] + p.gamma * h * stiff[i][j];
            }
            let (_, dln) = reg.eval_with_deriv(theta[i])?;
            jac[i][i] += p.c_s * mass[i] * dln + h * mesh.robin_diag(i);
            jac[i][n + i] = mass[i] * lam_p[i];
            jac[n + i][i] = -h * mass[i] * lam_p[i];
            let (_, dbeta) = graphs::yosida_with_deriv(p.graph, p.eps, phi[i])?;
            jac[n + i][n + i] +=
                p.tau * mass[i] + h * mass[i] * dbeta + h * mass[i] * p.sigma_second();
        }
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = dense_solve(jac, neg);

        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
            let tres = eval(&trial)?;
            let tworst = max_norm(&tres);
            if tworst <= (1.0 - 1e-4 * t) * worst || tworst <= target {
                z = trial;
                res = tres;
                worst = tworst;
                break;
            }
            t *= 0.5;
            stats.damping_events += 1;
            if t < 2f64.powi(-40) {
                return Err(Error::SolveFailed {
                    context: "dense oracle",
                    detail: format!("line search stalled at residual {worst:.3e}"),
                });
            }
        }
        converged = worst <= target;
        stats.iterations = iter + 1;
    }
    stats.residual = worst;
    if !converged {
        return Err(Error::SolveFailed {
            context: "dense oracle",
            detail: format!("residual {worst:.3e} after {} iterations", stats.iterations),
        });
    }

    let theta: Vec<f64> = z[..n].to_vec();
    let phi: Vec<f64> = z[n..].to_vec();
    // mu from the dense update formula
    let mu: Vec<f64> = (0..n)
        .map(|i| {
            let g_old: f64 = (0..n).map(|j| green[i][j] * state.mu[j]).sum();
            let g_diff: f64 = (0..n)
                .map(|j| green[i][j] * (state.phi[j] - phi[j]))
                .sum();
            g_old + g_diff / h
        })
        .collect();
    Ok((theta, phi, mu, stats))
}
