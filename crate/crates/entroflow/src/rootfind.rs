//! Safeguarded scalar Newton for strictly increasing functions.

use crate::Error;

/// Solve `f(x) = 0` for a strictly increasing `f` on the bracket `[lo, hi]`,
/// where `f(lo) <= 0 <= f(hi)`. `f` returns `(value, derivative)`.
///
/// Newton steps are taken whenever they stay inside the current bracket,
/// otherwise the step falls back to bisection, so convergence is global.
/// Stops when `|f(x)| <= tol`; errs after `cap` iterations.
pub(crate) fn solve_increasing<F>(
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    f: F,
    tol: f64,
    cap: usize,
    context: &'static str,
) -> Result<f64, Error>
where
    F: Fn(f64) -> (f64, f64),
{
    debug_assert!(lo <= hi);
    let mut x = x0.clamp(lo, hi);
    let mut value = f64::NAN;
    for iteration in 0..cap {
        let (v, d) = f(x);
        value = v;
        if v.abs() <= tol {
            return Ok(x);
        }
        if v > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = if d > 0.0 { x - v / d } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || !(next.is_finite()) {
            // The bracket has collapsed to floating-point resolution; the
            // residual is as small as evaluation noise permits.
            return Err(Error::RootFind {
                context,
                iterations: iteration + 1,
                residual: v,
            });
        }
        x = next;
    }
    Err(Error::RootFind {
        context,
        iterations: cap,
        residual: value,
    })
}
