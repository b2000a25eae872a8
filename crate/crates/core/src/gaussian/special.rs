//! Error functions and standard-normal helpers.
//!
//! `erf`/`erfc` are the fdlibm rational approximations (via `libm`), accurate
//! to about one ulp. `erfcx` is the scaled complementary error function
//! `exp(x^2) * erfc(x)`, which stays finite far into the right tail where
//! `erfc` itself underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1 / sqrt(pi)`
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
/// `1 / sqrt(2 pi)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this argument `erfcx` switches from `exp(x^2) erfc(x)` to the
/// Laplace continued fraction.
const ERFCX_CF_THRESHOLD: f64 = 12.0;
/// Depth of the backward-evaluated continued fraction; at x >= 12 forty
/// levels are far below one ulp.
const ERFCX_CF_DEPTH: usize = 40;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function. Total: returns 2 at `-inf` and 0 at `+inf`.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
///
/// For large negative `x` the result overflows to `+inf` like `2 exp(x^2)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < ERFCX_CF_THRESHOLD {
        return (x * x).exp() * erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut t = x;
    for k in (1..=ERFCX_CF_DEPTH).rev() {
        t = x + (k as f64 * 0.5) / t;
    }
    FRAC_1_SQRT_PI / t
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `P(U <= x)`.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail, `P(U > x)`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `2/sqrt(pi) * exp(-z^2)`, the derivative of `erf`.
#[inline]
pub(crate) fn erf_prime(z: f64) -> f64 {
    2.0 / PI.sqrt() * (-z * z).exp()
}
