//! Python bindings: the scalar graph operations, the 1D mesh with its Green
//! operators and dual norms, the step guard, and a config-driven run.
//!
//! Build with `cargo build -p entroflow-py --release` and import the
//! produced `libentroflow_py.so` as `entroflow_py` (see
//! `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use entroflow::config::RunConfig;
use entroflow::diagnostics;
use entroflow::graphs::{self, Extended, GraphKind, GraphSpec, LatentHeat, RegularizedLog};
use entroflow::stepper::{self, PhysParams as CorePhysParams, Scheme};

fn graph_from_name(name: &str) -> PyResult<GraphSpec> {
    match name {
        "regular" => Ok(GraphSpec::new(GraphKind::Regular)),
        "logarithmic" => Ok(GraphSpec::new(GraphKind::Logarithmic)),
        "indicator" => Ok(GraphSpec::new(GraphKind::Indicator)),
        other => Err(PyValueError::new_err(format!(
            "unknown graph '{other}' (expected regular, logarithmic or indicator)"
        ))),
    }
}

fn err(e: entroflow::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Resolvent (proximal map) of the selected monotone graph.
#[pyfunction]
fn prox(graph: &str, eps: f64, r: f64) -> PyResult<f64> {
    graphs::prox(graph_from_name(graph)?, eps, r).map_err(err)
}

/// Yosida approximation `(r - prox(r)) / eps`.
#[pyfunction]
fn yosida(graph: &str, eps: f64, r: f64) -> PyResult<f64> {
    graphs::yosida(graph_from_name(graph)?, eps, r).map_err(err)
}

/// Moreau envelope of the potential.
#[pyfunction]
fn moreau(graph: &str, eps: f64, r: f64) -> PyResult<f64> {
    graphs::moreau(graph_from_name(graph)?, eps, r).map_err(err)
}

/// Convex potential; returns `math.inf` outside the effective domain.
#[pyfunction]
fn betahat(graph: &str, r: f64) -> PyResult<f64> {
    Ok(match graphs::betahat(graph_from_name(graph)?, r) {
        Extended::Finite(v) => v,
        Extended::PosInf => f64::INFINITY,
    })
}

/// Positive resolvent of the logarithm: the root of `rho + eps ln rho = r`.
#[pyfunction]
fn rho(eps: f64, r: f64) -> PyResult<f64> {
    RegularizedLog::new(eps).rho(r).map_err(err)
}

/// Yosida approximation of the logarithm, `ln rho_eps(r)`.
#[pyfunction]
fn ln_eps(eps: f64, r: f64) -> PyResult<f64> {
    RegularizedLog::new(eps).ln_eps(r).map_err(err)
}

/// Regularized logarithm `eps r + ln_eps(r)`.
#[pyfunction]
fn ln_reg(eps: f64, r: f64) -> PyResult<f64> {
    RegularizedLog::new(eps).eval(r).map_err(err)
}

/// Derivative of the regularized logarithm (always >= eps).
#[pyfunction]
fn ln_reg_prime(eps: f64, r: f64) -> PyResult<f64> {
    RegularizedLog::new(eps).deriv(r).map_err(err)
}

/// Truncated latent heat `lambda_eps` for `lambda(r) = a1 r + a2 r^2`.
#[pyfunction]
fn lambda_trunc(a1: f64, a2: f64, eps: f64, r: f64) -> f64 {
    LatentHeat::new(a1, a2).trunc(eps, r)
}

/// Derivative of the truncated latent heat.
#[pyfunction]
fn lambda_trunc_prime(a1: f64, a2: f64, eps: f64, r: f64) -> f64 {
    LatentHeat::new(a1, a2).trunc_prime(eps, r)
}

/// Scalar coefficients of the model.
#[pyclass(name = "PhysParams", skip_from_py_object)]
#[derive(Clone)]
struct PyPhysParams {
    inner: CorePhysParams,
}

#[pymethods]
impl PyPhysParams {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        c_s: f64,
        eta: f64,
        gamma: f64,
        tau: f64,
        eps: f64,
        graph: &str,
        a1: f64,
        a2: f64,
        theta_a: f64,
        theta_b: f64,
    ) -> PyResult<Self> {
        let inner = CorePhysParams {
            c_s,
            eta,
            gamma,
            tau,
            eps,
            graph: graph_from_name(graph)?,
            latent: LatentHeat::new(a1, a2),
            theta_a,
            theta_b,
        };
        inner.validate().map_err(err)?;
        Ok(PyPhysParams { inner })
    }

    /// Maximal admissible step size of the scheme.
    fn step_guard(&self) -> PyResult<f64> {
        Ok(stepper::step_guard(&self.inner).map_err(err)?.h0)
    }

    /// Contraction factor of the per-step fixed point at step size `h`.
    fn contraction_factor(&self, h: f64) -> f64 {
        stepper::contraction_bound(&self.inner, h)
    }

    /// `sup |lambda_eps'|` at the configured regularization.
    fn lambda_prime_sup(&self) -> f64 {
        self.inner.lambda_prime_sup()
    }
}

/// Uniform 1D P1 mesh with lumped mass, Green operators and dual norms.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: entroflow::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(n_cells: usize, length: f64, alpha0: f64, alpha1: f64) -> PyResult<Self> {
        Ok(PyMesh {
            inner: entroflow::Mesh::new(n_cells, length, alpha0, alpha1).map_err(err)?,
        })
    }

    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    fn lumped_mass(&self) -> Vec<f64> {
        self.inner.lumped_mass().to_vec()
    }

    /// Solve `(M + K) x = M g` (discrete `(1 - Lap)^{-1}`).
    fn neumann_green(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&g)?;
        Ok(self.inner.neumann_green(&g))
    }

    /// Solve `K w = M v` on the zero-mean complement.
    fn zero_mean_green(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&v)?;
        self.inner.zero_mean_green(&v).map_err(err)
    }

    fn dual_norm_v0(&self, v: Vec<f64>) -> PyResult<f64> {
        self.check_len(&v)?;
        self.inner.dual_norm_v0(&v).map_err(err)
    }

    fn dual_norm_v(&self, v: Vec<f64>) -> PyResult<f64> {
        self.check_len(&v)?;
        Ok(self.inner.dual_norm_v(&v))
    }

    fn mass_norm(&self, v: Vec<f64>) -> PyResult<f64> {
        self.check_len(&v)?;
        Ok(self.inner.mass_norm(&v))
    }

    fn grad_norm_sq(&self, v: Vec<f64>) -> PyResult<f64> {
        self.check_len(&v)?;
        Ok(self.inner.grad_norm_sq(&v))
    }
}

impl PyMesh {
    fn check_len(&self, v: &[f64]) -> PyResult<()> {
        if v.len() != self.inner.n_nodes() {
            return Err(PyValueError::new_err(format!(
                "expected {} nodal values, got {}",
                self.inner.n_nodes(),
                v.len()
            )));
        }
        Ok(())
    }
}

/// Result of a config-driven run.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    #[pyo3(get)]
    ok: bool,
    #[pyo3(get)]
    failure: Option<String>,
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    conserved: Vec<f64>,
    #[pyo3(get)]
    energy: Vec<f64>,
    #[pyo3(get)]
    min_theta: f64,
    #[pyo3(get)]
    max_scheme_residual: f64,
    #[pyo3(get)]
    theta_final: Vec<f64>,
    #[pyo3(get)]
    phi_final: Vec<f64>,
    #[pyo3(get)]
    mu_final: Vec<f64>,
}

/// Parse a configuration (the flat `key = value` text format) and run it.
#[pyfunction]
fn run_config(text: &str) -> PyResult<PyRunResult> {
    let config = RunConfig::parse_str(text).map_err(err)?;
    let (mesh, params, data) = config.build().map_err(err)?;
    let scheme = Scheme::new(&params, &data, &mesh).map_err(err)?;
    let outcome = scheme.run(config.t_final, config.n_steps).map_err(err)?;
    let traj = &outcome.trajectory;
    let initial = &traj.states[0];
    let mut conserved = vec![diagnostics::conserved_total(
        &mesh,
        &initial.phi,
        &initial.mu,
        traj.h,
    )];
    let mut energy = vec![
        diagnostics::energy(&mesh, &params, &initial.phi, &initial.mu, traj.h).map_err(err)?,
    ];
    let mut min_theta = initial.theta.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_residual = 0.0f64;
    for report in &traj.reports {
        conserved.push(report.conserved);
        energy.push(report.energy);
        min_theta = min_theta.min(report.min_theta);
        max_residual = max_residual.max(report.scheme_residual);
    }
    let last = traj.states.last().unwrap();
    Ok(PyRunResult {
        ok: outcome.failure.is_none(),
        failure: outcome.failure.as_ref().map(|f| f.message.clone()),
        times: traj.times(),
        conserved,
        energy,
        min_theta,
        max_scheme_residual: max_residual,
        theta_final: last.theta.clone(),
        phi_final: last.phi.clone(),
        mu_final: last.mu.clone(),
    })
}

/// Configuration text of a built-in preset
/// (`stationary_<graph>`, `smooth_<graph>`, `contraction_<graph>`,
/// `sweep_<graph>`, `sweep_tau_<graph>`).
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    let (kind, graph_name) = name
        .rsplit_once('_')
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset '{name}'")))?;
    let graph = match graph_name {
        "regular" => GraphKind::Regular,
        "logarithmic" => GraphKind::Logarithmic,
        "indicator" => GraphKind::Indicator,
        _ => return Err(PyValueError::new_err(format!("unknown preset '{name}'"))),
    };
    let config = match kind {
        "stationary" => entroflow::presets::stationary(graph),
        "smooth" => entroflow::presets::smooth(graph),
        "contraction" => entroflow::presets::contraction(graph),
        "sweep" => entroflow::presets::sweep_base(graph),
        "sweep_tau" => entroflow::presets::sweep_tau_base(graph),
        _ => return Err(PyValueError::new_err(format!("unknown preset '{name}'"))),
    };
    Ok(config.to_config_text())
}

#[pymodule]
fn entroflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(prox, m)?)?;
    m.add_function(wrap_pyfunction!(yosida, m)?)?;
    m.add_function(wrap_pyfunction!(moreau, m)?)?;
    m.add_function(wrap_pyfunction!(betahat, m)?)?;
    m.add_function(wrap_pyfunction!(rho, m)?)?;
    m.add_function(wrap_pyfunction!(ln_eps, m)?)?;
    m.add_function(wrap_pyfunction!(ln_reg, m)?)?;
    m.add_function(wrap_pyfunction!(ln_reg_prime, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_trunc, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_trunc_prime, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_class::<PyPhysParams>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRunResult>()?;
    Ok(())
}
