//! Principal branch of the Lambert W function on the non-negative reals.
//!
//! `W₀(x)` is the unique `w ≥ 0` with `w·eʷ = x`. Solved by Halley iteration,
//! which converges cubically from the starting guesses below for every
//! `x ≥ 0` we care about.

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 64;
const RESIDUAL_TOL: f64 = 1e-12;

/// Evaluates `W₀(x)` for finite `x ≥ 0`.
///
/// The result satisfies `|w·eʷ − x| ≤ 1e-12·max(x, 1)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "lambert_w0 requires a finite non-negative argument, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    // residual is tracked relative to x so that w·eʷ never overflows
    let ln_x = x.ln();
    let tol = RESIDUAL_TOL * x.max(1.0) / x;
    let mut w = if x >= std::f64::consts::E {
        x.ln_1p()
    } else {
        x / (1.0 + x)
    };

    let relative_residual = |w: f64| w * (w - ln_x).exp() - 1.0;
    for _ in 0..MAX_ITERATIONS {
        let scaled_ew = (w - ln_x).exp();
        let r = w * scaled_ew - 1.0;
        if r.abs() <= tol {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let step = r / (scaled_ew * wp1 - (w + 2.0) * r / (2.0 * wp1));
        let next = w - step;
        if next == w {
            break;
        }
        w = next.max(0.0);
    }

    let residual = relative_residual(w);
    if residual.abs() <= tol {
        Ok(w)
    } else {
        Err(Error::Internal(format!(
            "lambert_w0({x}) did not converge within {MAX_ITERATIONS} iterations (relative residual {residual:e})"
        )))
    }
}

/// Evaluates `W₀(eʸ)` without forming `eʸ`, for arguments too large for `f64`.
///
/// Solves `w + ln w = y` by Halley iteration. Falls back to [`lambert_w0`]
/// when `eʸ` is representable.
pub fn lambert_w0_exp(y: f64) -> Result<f64> {
    if y.is_nan() || y == f64::INFINITY {
        return Err(Error::domain(format!("lambert_w0_exp requires finite y, got {y}")));
    }
    if y < 700.0 {
        return lambert_w0(y.exp());
    }

    // g(w) = w + ln w − y, g' = 1 + 1/w, g'' = −1/w²
    let mut w = y - y.ln();
    for _ in 0..MAX_ITERATIONS {
        let g = w + w.ln() - y;
        if g.abs() <= 4.0 * f64::EPSILON * y {
            return Ok(w);
        }
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let next = w - 2.0 * g * g1 / (2.0 * g1 * g1 - g * g2);
        if next == w {
            return Ok(w);
        }
        w = next;
    }
    Err(Error::Internal(format!(
        "lambert_w0_exp({y}) did not converge within {MAX_ITERATIONS} iterations"
    )))
}
