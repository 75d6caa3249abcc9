//! Solver library for a conserved phase-separation system: an entropy balance
//! written in the logarithm of the absolute temperature, coupled to viscous
//! Cahn-Hilliard dynamics with a singular potential in the phase equation.
//!
//! The continuous model on a 1D interval, for temperature `theta`, order
//! parameter `phi` and chemical potential `mu`, is
//!
//! ```text
//!   d/dt ( c_s ln theta + lambda(phi) ) - eta Lap theta = f
//!   d/dt phi - Lap mu = 0
//!   mu = tau d/dt phi - gamma Lap phi + beta(phi) + sigma'(phi) - lambda'(phi) theta
//! ```
//!
//! with a Robin condition for `theta` and no-flux conditions for `mu` and
//! `phi`. `beta` is a maximal monotone graph (cubic, logarithmic or obstacle
//! type), replaced by its Yosida regularization `beta_eps`; `ln` is replaced
//! by the regularized operator `Ln_eps(r) = eps*r + ln_eps(r)`.
//!
//! The implicit Euler step is solved per time level by the fixed point
//! `S = B ∘ A`, where `A` is the temperature elliptic solve and `B` the phase
//! elliptic solve; `S` is a contraction with factor
//! `2 sup|lambda_eps'|^2 h / (c_s eps tau)` once the step size `h` is below
//! the guard computed by [`stepper::step_guard`].
//!
//! Module map:
//!
//! * [`graphs`] — monotone graphs, resolvents, Yosida approximations, Moreau
//!   envelopes, the regularized logarithm family and the truncated latent heat.
//! * [`mesh`] — P1 finite elements with lumped mass on a uniform 1D grid,
//!   Green operators and the discrete dual norms.
//! * [`stepper`] — the per-step solves, the contraction fixed point, the time
//!   loop and continuation drivers.
//! * [`diagnostics`] — conserved quantities, energy records, per-step
//!   inequality slacks and the a-priori bound tracker.
//! * [`oracle`] — independent dense verification (coupled Newton on tiny
//!   meshes, brute-force proximal minimization, finite differences).
//! * [`config`] / [`presets`] / [`output`] / [`cli`] — batch front end.

// Validation uses negated comparisons (`!(x > 0.0)`) so NaN inputs are
// rejected alongside out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod graphs;
pub mod mesh;
pub mod oracle;
pub mod output;
pub mod presets;
pub mod stepper;

mod rootfind;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An inner scalar root-find exhausted its iteration cap. Inputs to the
    /// resolvent solvers are always admissible, so this signals a tolerance
    /// or bracketing bug rather than bad data.
    #[error("{context}: root find failed after {iterations} iterations (residual {residual:.3e})")]
    RootFind {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A documented precondition of an operation was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Configuration rejected before any computation.
    #[error("config error: {0}")]
    Config(String),

    /// A nonlinear solve inside one time step did not converge.
    #[error("step solve failed ({context}): {detail}")]
    SolveFailed {
        context: &'static str,
        detail: String,
    },

    /// A time step failed after exhausting the retry protocol.
    #[error("step {step} failed after {retries} retries: {reason}")]
    StepFailed {
        step: usize,
        retries: u32,
        reason: String,
    },

    /// A proven property of the scheme was violated at runtime; this flags an
    /// implementation bug, not bad data.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub use graphs::{GraphKind, GraphSpec, LatentHeat, RegularizedLog};
pub use mesh::Mesh;
