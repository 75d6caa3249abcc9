//! Maximal monotone graphs and their regularizations.
//!
//! Three canonical convex potentials `betahat` are supported, with
//! subdifferential graph `beta = d(betahat)`:
//!
//! * `Regular`: betahat(r) = r^4/4, with beta(r) = r^3
//! * `Logarithmic`: betahat(r) = (1+r)ln(1+r) + (1-r)ln(1-r) on (-1,1),
//!   2 ln 2 at +-1, +inf outside; beta(r) = ln((1+r)/(1-r))
//! * `Indicator`: betahat = indicator of [-1,1]; beta is the normal cone
//!
//! For each graph the module provides the resolvent (proximal map)
//! `J_eps = (I + eps beta)^{-1}`, the Yosida approximation
//! `beta_eps(r) = (r - J_eps(r))/eps`, and the Moreau envelope
//! `betahat_eps(r) = |r - J_eps(r)|^2/(2 eps) + betahat(J_eps(r))`.
//!
//! The regularized logarithm family lives in [`RegularizedLog`]: the
//! resolvent `rho_eps(r)` is the unique positive root of
//! `rho + eps ln rho = r`, `ln_eps(r) = ln rho_eps(r)` is the Yosida
//! approximation of `ln`, and `Ln_eps(r) = eps r + ln_eps(r)` is strictly
//! increasing with `Ln_eps'(r) >= eps`.

use crate::rootfind::solve_increasing;
use crate::Error;

const TWO_LN_2: f64 = 2.0 * std::f64::consts::LN_2;

/// Which canonical potential a [`GraphSpec`] selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Regular,
    Logarithmic,
    Indicator,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [
        GraphKind::Regular,
        GraphKind::Logarithmic,
        GraphKind::Indicator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Regular => "regular",
            GraphKind::Logarithmic => "logarithmic",
            GraphKind::Indicator => "indicator",
        }
    }
}

/// A maximal monotone graph choice. The three canonical potentials are
/// fixed-form, so no extra parameters are carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphSpec {
    pub kind: GraphKind,
}

impl GraphSpec {
    pub fn new(kind: GraphKind) -> Self {
        GraphSpec { kind }
    }

    /// Interior of the effective domain of the graph, as an open interval.
    pub fn domain_interior(self) -> (f64, f64) {
        match self.kind {
            GraphKind::Regular => (f64::NEG_INFINITY, f64::INFINITY),
            GraphKind::Logarithmic | GraphKind::Indicator => (-1.0, 1.0),
        }
    }
}

/// Extended real value of a convex potential: finite or +inf. The infinite
/// state is an explicit variant, never a floating `f64::INFINITY` flowing
/// through arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    PosInf,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInf => None,
        }
    }

    /// Finite value, panicking on +inf.
    pub fn unwrap_finite(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::PosInf => panic!("extended value is +inf"),
        }
    }
}

/// Convex potential `betahat` for the given graph.
pub fn betahat(g: GraphSpec, r: f64) -> Extended {
    match g.kind {
        GraphKind::Regular => Extended::Finite(0.25 * r * r * r * r),
        GraphKind::Logarithmic => {
            if r.abs() < 1.0 {
                // ln_1p keeps relative accuracy near r = 0, where the
                // potential behaves like r^2
                let plus = (1.0 + r) * r.ln_1p();
                let minus = (1.0 - r) * (-r).ln_1p();
                Extended::Finite(plus + minus)
            } else if r.abs() == 1.0 {
                Extended::Finite(TWO_LN_2)
            } else {
                Extended::PosInf
            }
        }
        GraphKind::Indicator => {
            if r.abs() <= 1.0 {
                Extended::Finite(0.0)
            } else {
                Extended::PosInf
            }
        }
    }
}

/// Resolvent `J_eps(r)`: the unique `s` with `s + eps*beta(s)` containing `r`.
///
/// The regular graph solves `s + eps s^3 = r` by bracketed safeguarded Newton
/// (the bracket `[0, r]` or `[r, 0]` is exact). The logarithmic graph is
/// solved in the variable `t = atanh(s)`, where the equation becomes
/// `tanh(t) + 2 eps t = r`, so iterates stay strictly inside `(-1, 1)`. The
/// indicator graph clamps.
pub fn prox(g: GraphSpec, eps: f64, r: f64) -> Result<f64, Error> {
    debug_assert!(eps > 0.0);
    match g.kind {
        GraphKind::Indicator => Ok(r.clamp(-1.0, 1.0)),
        GraphKind::Regular => {
            let f = |s: f64| (s + eps * s * s * s - r, 1.0 + 3.0 * eps * s * s);
            let (lo, hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
            let tol = 1e-13_f64.max(4.0 * f64::EPSILON * r.abs());
            solve_increasing(lo, hi, r / (1.0 + eps), f, tol, 100, "regular resolvent")
        }
        GraphKind::Logarithmic => {
            // ln((1+tanh t)/(1-tanh t)) = 2t
            let f = |t: f64| {
                let c = t.cosh();
                (t.tanh() + 2.0 * eps * t - r, 1.0 / (c * c) + 2.0 * eps)
            };
            let half = 0.5 * r / eps;
            let (lo, hi) = if r >= 0.0 { (0.0, half) } else { (half, 0.0) };
            let tol = 1e-13_f64.max(4.0 * f64::EPSILON * r.abs());
            let t = solve_increasing(
                lo,
                hi,
                r / (1.0 + 2.0 * eps),
                f,
                tol,
                100,
                "logarithmic resolvent",
            )?;
            Ok(t.tanh())
        }
    }
}

/// Yosida approximation `beta_eps(r) = (r - J_eps(r)) / eps`. Monotone
/// nondecreasing and Lipschitz with constant `1/eps`.
pub fn yosida(g: GraphSpec, eps: f64, r: f64) -> Result<f64, Error> {
    let j = prox(g, eps, r)?;
    Ok((r - j) / eps)
}

/// `beta_eps(r)` together with its a.e. derivative, for Newton Jacobians.
///
/// At the indicator kinks `|r| = 1` the subgradient value 0 is used; any
/// choice in `[0, 1/eps]` keeps the Jacobian positive semidefinite.
pub fn yosida_with_deriv(g: GraphSpec, eps: f64, r: f64) -> Result<(f64, f64), Error> {
    match g.kind {
        GraphKind::Indicator => {
            let value = if r > 1.0 {
                (r - 1.0) / eps
            } else if r < -1.0 {
                (r + 1.0) / eps
            } else {
                0.0
            };
            let deriv = if r.abs() > 1.0 { 1.0 / eps } else { 0.0 };
            Ok((value, deriv))
        }
        GraphKind::Regular => {
            let j = prox(g, eps, r)?;
            // implicit differentiation of j + eps j^3 = r
            let jp = 1.0 / (1.0 + 3.0 * eps * j * j);
            Ok(((r - j) / eps, 3.0 * j * j * jp))
        }
        GraphKind::Logarithmic => {
            let j = prox(g, eps, r)?;
            // beta_eps'(r) = 2 / (1 - j^2 + 2 eps)
            Ok(((r - j) / eps, 2.0 / ((1.0 - j * j) + 2.0 * eps)))
        }
    }
}

/// Moreau envelope `betahat_eps(r) = |r - J|^2/(2 eps) + betahat(J)` with
/// `J = J_eps(r)`. Satisfies `0 <= betahat_eps(r) <= betahat(r)` and its
/// derivative is `beta_eps`.
pub fn moreau(g: GraphSpec, eps: f64, r: f64) -> Result<f64, Error> {
    let j = prox(g, eps, r)?;
    let d = r - j;
    // J lands in the effective domain, so betahat(J) is finite.
    let at_j = betahat(g, j).unwrap_finite();
    Ok(d * d / (2.0 * eps) + at_j)
}

/// The regularized logarithm family at a fixed `eps` in `(0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedLog {
    eps: f64,
}

impl RegularizedLog {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0, "regularization parameter must be positive");
        RegularizedLog { eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Solve `e^x + eps x = r` for `x = ln rho`. Running Newton in `x`
    /// keeps `rho = e^x` positive by construction. The bracket is exact:
    /// for `r >= 1` take `[0, ln r]`, otherwise `[(r-1)/eps, r/eps]`.
    fn solve_log(&self, r: f64) -> Result<f64, Error> {
        let eps = self.eps;
        let f = |x: f64| {
            let e = x.exp();
            (e + eps * x - r, e + eps)
        };
        let (lo, hi) = if r >= 1.0 {
            (0.0, r.ln())
        } else {
            ((r - 1.0) / eps, r / eps)
        };
        let x0 = if r > 0.0 { r.ln().clamp(lo, hi) } else { lo };
        let tol = 1e-13_f64.max(4.0 * f64::EPSILON * r.abs());
        solve_increasing(lo, hi, x0, f, tol, 100, "log resolvent")
    }

    /// Resolvent `rho_eps(r)`: the unique positive root of
    /// `rho + eps ln rho = r`. For very negative `r/eps` the mathematical
    /// value underflows to 0.0; pair with [`Self::ln_eps`] when the
    /// logarithm itself is needed.
    pub fn rho(&self, r: f64) -> Result<f64, Error> {
        Ok(self.solve_log(r)?.exp())
    }

    /// Yosida approximation of `ln`: `ln_eps(r) = ln rho_eps(r)
    /// = (r - rho_eps(r))/eps`.
    pub fn ln_eps(&self, r: f64) -> Result<f64, Error> {
        self.solve_log(r)
    }

    /// `Ln_eps(r) = eps r + ln_eps(r)`, strictly increasing.
    pub fn eval(&self, r: f64) -> Result<f64, Error> {
        Ok(self.eps * r + self.solve_log(r)?)
    }

    /// `Ln_eps'(r) = eps + 1/(rho_eps(r) + eps) >= eps`, by implicit
    /// differentiation of the resolvent equation.
    pub fn deriv(&self, r: f64) -> Result<f64, Error> {
        let rho = self.solve_log(r)?.exp();
        Ok(self.eps + 1.0 / (rho + self.eps))
    }

    /// `(Ln_eps(r), Ln_eps'(r))` from a single resolvent solve.
    pub fn eval_with_deriv(&self, r: f64) -> Result<(f64, f64), Error> {
        let x = self.solve_log(r)?;
        let rho = x.exp();
        Ok((self.eps * r + x, self.eps + 1.0 / (rho + self.eps)))
    }
}

/// Latent-heat function `lambda(r) = a1 r + a2 r^2` and its C^1 truncation:
/// `lambda` itself on `[-1/eps, 1/eps]`, extended affinely with slope
/// `lambda'(+-1/eps)` outside, so `lambda_eps'` is the clamp of `lambda'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentHeat {
    pub a1: f64,
    pub a2: f64,
}

impl Default for LatentHeat {
    /// The phase-change choice `lambda(r) = r - r^2`.
    fn default() -> Self {
        LatentHeat { a1: 1.0, a2: -1.0 }
    }
}

impl LatentHeat {
    pub fn new(a1: f64, a2: f64) -> Self {
        LatentHeat { a1, a2 }
    }

    pub fn lambda(&self, r: f64) -> f64 {
        self.a1 * r + self.a2 * r * r
    }

    pub fn lambda_prime(&self, r: f64) -> f64 {
        self.a1 + 2.0 * self.a2 * r
    }

    /// `sup |lambda''| = 2 |a2|`.
    pub fn lambda_second_sup(&self) -> f64 {
        2.0 * self.a2.abs()
    }

    /// Truncated `lambda_eps(r)`.
    pub fn trunc(&self, eps: f64, r: f64) -> f64 {
        debug_assert!(eps > 0.0);
        let cut = 1.0 / eps;
        if r > cut {
            self.lambda(cut) + self.lambda_prime(cut) * (r - cut)
        } else if r < -cut {
            self.lambda(-cut) + self.lambda_prime(-cut) * (r + cut)
        } else {
            self.lambda(r)
        }
    }

    /// `lambda_eps'(r)`: the derivative of `lambda` with argument clamped to
    /// `[-1/eps, 1/eps]`.
    pub fn trunc_prime(&self, eps: f64, r: f64) -> f64 {
        debug_assert!(eps > 0.0);
        self.lambda_prime(r.clamp(-1.0 / eps, 1.0 / eps))
    }

    /// `sup |lambda_eps'|`, attained at one of the truncation points since
    /// `lambda'` is affine.
    pub fn trunc_prime_sup(&self, eps: f64) -> f64 {
        let cut = 1.0 / eps;
        self.lambda_prime(cut).abs().max(self.lambda_prime(-cut).abs())
    }

    /// `|lambda(0)| + |lambda'(0)| + sup |lambda''|`; the same quantity for
    /// the truncation is bounded by this, uniformly in `eps`.
    pub fn m_lambda(&self) -> f64 {
        self.lambda(0.0).abs() + self.lambda_prime(0.0).abs() + self.lambda_second_sup()
    }
}
