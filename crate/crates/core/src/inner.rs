//! The inner Gaussian expectation shared by the second and third levels,
//!
//! ```text
//! fhat(A, B, C, nu) = E_t exp(-C (ubar^2 + phi_bar_z(ubar, nu))),  ubar = A t + B,
//!                   = e^{C nu} Phi(D) + e^{-C nu} Q(F) + e^{C nu} I1(A, B, C, D, F),
//! D = -B / A,  F = (sqrt(2 nu) - B) / A.
//! ```
//!
//! Only `log fhat` is ever formed, as `C nu + ln S` with
//! `S = Phi(D) + e^{-2 C nu} Q(F) + I1`. Moving `D` or `F` leaves `S`
//! unchanged to first order (the boundary terms of `I1` cancel the density
//! terms), so the partials of `S` are the direct ones.

use crate::error::{Error, Result};
use crate::gaussian::{norm_cdf, norm_sf, GaussianQuadratic};

/// `log fhat` and its partials in `A`, `B`, `C`, `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFhat {
    pub value: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
    pub d_nu: f64,
}

/// The bundle `(A, B, C, D, F)` for given `(A, B, C, nu)`.
pub fn quadratic(a: f64, b: f64, c: f64, nu: f64) -> GaussianQuadratic {
    let d = -b / a;
    let f = ((2.0 * nu).sqrt() - b) / a;
    GaussianQuadratic { a, b, c, d, f }
}

fn check(a: f64, c: f64, nu: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(Error::OutOfDomain { what: "sqrt(1 - p2)", value: a });
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::OutOfDomain { what: "C", value: c });
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::OutOfDomain { what: "nu", value: nu });
    }
    Ok(())
}

fn log_from_sum(s: f64, c: f64, nu: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonFinite { what: "fhat", at: c, value: s });
    }
    Ok(c * nu + s.ln())
}

/// `log fhat` only.
pub fn log_fhat(a: f64, b: f64, c: f64, nu: f64) -> Result<f64> {
    check(a, c, nu)?;
    let g = quadratic(a, b, c, nu);
    let damp = (-2.0 * c * nu).exp();
    let s = norm_cdf(g.d) + damp * norm_sf(g.f) + g.value();
    log_from_sum(s, c, nu)
}

/// `log fhat` with its partials.
pub fn log_fhat_partials(a: f64, b: f64, c: f64, nu: f64) -> Result<LogFhat> {
    check(a, c, nu)?;
    let g = quadratic(a, b, c, nu);
    let ip = g.partials();
    let damp = (-2.0 * c * nu).exp();
    let tail = damp * norm_sf(g.f);
    let s = norm_cdf(g.d) + tail + ip.value;
    let value = log_from_sum(s, c, nu)?;
    Ok(LogFhat {
        value,
        d_a: ip.d_a / s,
        d_b: ip.d_b / s,
        d_c: nu + (ip.d_c - 2.0 * nu * tail) / s,
        d_nu: c - 2.0 * c * tail / s,
    })
}
