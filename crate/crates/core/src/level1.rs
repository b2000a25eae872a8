//! First level of lifting: closed forms in `(alpha, nu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{norm_pdf, norm_sf};
use crate::model::{stopwatch, Diagnostics, EvalResult, Residual};
use crate::roots::brent;

/// Initial `nu` search bracket.
pub const NU_BRACKET: (f64, f64) = (1e-6, 5.0);
const NU_BRACKET_MAX: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level1Point {
    pub alpha: f64,
    pub nu: f64,
}

impl Level1Point {
    pub fn psi(&self) -> Result<f64> {
        psi1(self.alpha, self.nu)
    }

    pub fn gammas(&self) -> Result<(f64, f64)> {
        gamma1(self.alpha, self.nu)
    }

    pub fn eval(&self) -> Result<EvalResult> {
        let elapsed = stopwatch();
        let psi = psi1(self.alpha, self.nu)?;
        let d = dpsi1_dnu(self.alpha, self.nu)?;
        Ok(EvalResult {
            psi,
            grad: vec![Residual { name: "nu", value: d }],
            diagnostics: Diagnostics { nodes: vec![], wall_time: elapsed(), fallback: vec![] },
        })
    }
}

/// `fbar2(nu) = E[u^2 + phi_bar_z(u)] - 1` in closed form.
pub fn fbar2(nu: f64) -> f64 {
    let a = (2.0 * nu).sqrt();
    let tail = norm_sf(a);
    let fx = -(a * norm_pdf(a) + tail);
    let f21 = -0.5 - 0.5 * nu;
    let f22 = fx + nu * tail;
    let f23 = -nu * (0.5 - tail);
    f21 + f22 + f23
}

/// `d fbar2 / d nu = 2 Q(sqrt(2 nu)) - 1`; the terms through `a` cancel.
pub fn dfbar2_dnu(nu: f64) -> f64 {
    2.0 * norm_sf((2.0 * nu).sqrt()) - 1.0
}

fn radicand(alpha: f64, nu: f64) -> f64 {
    alpha * (1.0 + fbar2(nu)) - nu * (2.0 - alpha)
}

fn checked_radicand(alpha: f64, nu: f64) -> Result<f64> {
    if !(nu >= 0.0) {
        return Err(Error::OutOfDomain { what: "nu", value: nu });
    }
    let r = radicand(alpha, nu);
    if r < 0.0 || !r.is_finite() {
        return Err(Error::OutOfDomain { what: "level-1 radicand", value: r });
    }
    Ok(r)
}

/// `psi1 = -1 + sqrt(alpha (1 + fbar2) - nu (2 - alpha))`.
pub fn psi1(alpha: f64, nu: f64) -> Result<f64> {
    Ok(-1.0 + checked_radicand(alpha, nu)?.sqrt())
}

/// Derivative of the radicand in `nu`: `2 (alpha Q(sqrt(2 nu)) - 1)`.
pub fn dradicand_dnu(alpha: f64, nu: f64) -> f64 {
    alpha * dfbar2_dnu(nu) + (alpha - 2.0)
}

/// `d psi1 / d nu`.
pub fn dpsi1_dnu(alpha: f64, nu: f64) -> Result<f64> {
    let r = checked_radicand(alpha, nu)?;
    if r == 0.0 {
        return Err(Error::OutOfDomain { what: "level-1 radicand", value: r });
    }
    Ok(dradicand_dnu(alpha, nu) / (2.0 * r.sqrt()))
}

/// `d psi1 / d alpha` at fixed `nu`.
pub fn dpsi1_dalpha(alpha: f64, nu: f64) -> Result<f64> {
    let r = checked_radicand(alpha, nu)?;
    Ok((1.0 + fbar2(nu) + nu) / (2.0 * r.sqrt()))
}

/// Stationary `nu`: the root of `Q(sqrt(2 nu)) = 1 / alpha`.
///
/// The radicand derivative is positive at `nu = 0` exactly when `alpha > 2`
/// and strictly decreasing in `nu`, so a root exists only for `alpha > 2`.
pub fn solve_nu1(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let g = |nu: f64| Ok(dradicand_dnu(alpha, nu));
    let (lo, mut hi) = NU_BRACKET;
    let g_lo = dradicand_dnu(alpha, lo);
    let mut g_hi = dradicand_dnu(alpha, hi);
    while g_lo.signum() == g_hi.signum() {
        if hi >= NU_BRACKET_MAX || g_lo <= 0.0 {
            return Err(Error::Bracket { lo, hi, f_lo: g_lo, f_hi: g_hi });
        }
        hi *= 4.0;
        g_hi = dradicand_dnu(alpha, hi);
    }
    Ok(brent(g, lo, hi, 1e-15, 0.0, 200)?.x)
}

/// Closed-form saddle values `(gamma_q, gamma_p) = (1/2, sqrt(radicand)/2)`.
pub fn gamma1(alpha: f64, nu: f64) -> Result<(f64, f64)> {
    Ok((0.5, 0.5 * checked_radicand(alpha, nu)?.sqrt()))
}
