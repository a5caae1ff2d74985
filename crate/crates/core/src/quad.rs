//! Adaptive quadrature used by the hazard integrals.
//!
//! A classic adaptive Simpson rule with Richardson acceptance: an interval is
//! accepted when halving it changes the Simpson estimate by at most 15× the
//! absolute tolerance, otherwise both halves recurse with the same budget.
//! Keeping the budget constant (rather than halving it per level) lets
//! integrands with step discontinuities converge in O(log(jump/tol)) depth —
//! the subinterval straddling the step shrinks geometrically while its
//! acceptance bar stays put. Integrands are fallible so that table-domain
//! violations and similar evaluation errors surface instead of being
//! integrated over.

use thiserror::Error;

use crate::model::ModelError;

/// Tolerance and recursion-depth budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Absolute tolerance per smooth piece.
    pub abs_tol: f64,
    /// Maximum bisection depth before giving up.
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            max_depth: 40,
        }
    }
}

/// Quadrature failure: either the integrand itself failed, or the tolerance
/// could not be met within the depth budget.
#[derive(Debug, Error)]
pub enum QuadError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integrand returned a non-finite value at {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("quadrature tolerance {tol:e} not met on [{lo}, {hi}] after reaching depth {depth}")]
    ToleranceNotMet {
        lo: f64,
        hi: f64,
        tol: f64,
        depth: u32,
    },
}

fn eval<F>(f: &F, x: f64) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, ModelError>,
{
    let y = f(x)?;
    if y.is_finite() {
        Ok(y)
    } else {
        Err(QuadError::NonFiniteIntegrand { at: x })
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

/// ∫_a^b f(x) dx to absolute tolerance `cfg.abs_tol`. Orientation follows the
/// endpoints: a reversed interval yields the negated integral.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, ModelError>,
{
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return Ok(-adaptive_simpson(f, b, a, cfg)?);
    }
    let m = 0.5 * (a + b);
    let fa = eval(&f, a)?;
    let fm = eval(&f, m)?;
    let fb = eval(&f, b)?;
    let whole = simpson(fa, fm, fb, b - a);
    refine(&f, a, b, fa, fm, fb, whole, cfg.abs_tol, cfg.max_depth, cfg)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    cfg: &QuadratureConfig,
) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, ModelError>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadError::ToleranceNotMet {
            lo: a,
            hi: b,
            tol,
            depth: cfg.max_depth,
        });
    }
    let l = refine(f, a, m, fa, flm, fm, left, tol, depth - 1, cfg)?;
    let r = refine(f, m, b, fm, frm, fb, right, tol, depth - 1, cfg)?;
    Ok(l + r)
}
