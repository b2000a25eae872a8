//! The truncated Gaussian integral of a quadratic exponential,
//!
//! ```text
//! I1(A, B, C, D, F) = int_D^F n(t) exp(-C (A t + B)^2) dt
//!                   = exp(-B^2 C / s) (erf(z_F) - erf(z_D)) / (2 sqrt(s)),
//! s   = 2 A^2 C + 1,
//! z_t = (s t + 2 A B C) / sqrt(2 s),
//! ```
//!
//! where `n` is the standard normal density. The derivative machinery follows
//! the `L1..L6` factorization `I1 = L1 (L2 - L3) / L4` with
//! `L4 = 2 sqrt(s)`, `L1 = exp(-4 B^2 C / L4^2)`, `L5 = sqrt(2)(2AC(AF+B)+F)`,
//! `L6 = sqrt(2)(2AC(AD+B)+D)`, `L2 = erf(L5/L4)`, `L3 = erf(L6/L4)`.

use serde::{Deserialize, Serialize};

use super::special::{erf, erf_prime, erfcx};
use crate::error::{Error, Result};

/// Parameter bundle `[A, B, C, D, F]` of `I1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub f: f64,
}

/// A tangent direction in `(A, B, C, D, F)` space.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadraticTangent {
    pub da: f64,
    pub db: f64,
    pub dc: f64,
    pub dd: f64,
    pub df: f64,
}

/// `I1` together with its five partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct I1Partials {
    pub value: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
    pub d_d: f64,
    pub d_f: f64,
}

impl I1Partials {
    pub fn directional(&self, t: &QuadraticTangent) -> f64 {
        self.d_a * t.da + self.d_b * t.db + self.d_c * t.dc + self.d_d * t.dd + self.d_f * t.df
    }
}

impl GaussianQuadratic {
    pub fn new(a: f64, b: f64, c: f64, d: f64, f: f64) -> Self {
        GaussianQuadratic { a, b, c, d, f }
    }

    pub fn check(&self) -> Result<()> {
        let fields = [self.a, self.b, self.c, self.d, self.f];
        if fields.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("I1 parameter is NaN".into()));
        }
        if self.c < 0.0 {
            return Err(Error::InvalidInput(format!("I1 requires C >= 0, got {}", self.c)));
        }
        if self.d > self.f {
            return Err(Error::InvalidInput(format!("I1 requires D <= F, got D = {} > F = {}", self.d, self.f)));
        }
        Ok(())
    }

    fn s(&self) -> f64 {
        2.0 * self.a * self.a * self.c + 1.0
    }

    fn z(&self, t: f64, s: f64) -> f64 {
        (s * t + 2.0 * self.a * self.b * self.c) / (2.0 * s).sqrt()
    }

    /// `t^2/2 + C (A t + B)^2`, equal to `B^2 C / s + z_t^2`.
    fn exponent_at(&self, t: f64) -> f64 {
        let r = self.a * t + self.b;
        0.5 * t * t + self.c * r * r
    }

    /// Unchecked evaluation. Same-sign arguments go through `erfcx` so the
    /// difference of two tails never cancels.
    pub(crate) fn value(&self) -> f64 {
        if self.d == self.f {
            return 0.0;
        }
        let s = self.s();
        let zf = self.z(self.f, s);
        let zd = self.z(self.d, s);
        let denom = 2.0 * s.sqrt();
        if zd >= 0.0 {
            // erf(zf) - erf(zd) = erfc(zd) - erfc(zf)
            let hi = if self.d.is_finite() { erfcx(zd) * (-self.exponent_at(self.d)).exp() } else { 0.0 };
            let lo = if self.f.is_finite() { erfcx(zf) * (-self.exponent_at(self.f)).exp() } else { 0.0 };
            (hi - lo) / denom
        } else if zf <= 0.0 {
            // erf(zf) - erf(zd) = erfc(-zf) - erfc(-zd)
            let hi = if self.f.is_finite() { erfcx(-zf) * (-self.exponent_at(self.f)).exp() } else { 0.0 };
            let lo = if self.d.is_finite() { erfcx(-zd) * (-self.exponent_at(self.d)).exp() } else { 0.0 };
            (hi - lo) / denom
        } else {
            (-self.b * self.b * self.c / s).exp() * (erf(zf) - erf(zd)) / denom
        }
    }

    /// Value and all five partials through the `L1..L6` chain rule.
    pub fn partials(&self) -> I1Partials {
        let value = self.value();
        let basis = [
            QuadraticTangent { da: 1.0, ..Default::default() },
            QuadraticTangent { db: 1.0, ..Default::default() },
            QuadraticTangent { dc: 1.0, ..Default::default() },
            QuadraticTangent { dd: 1.0, ..Default::default() },
            QuadraticTangent { df: 1.0, ..Default::default() },
        ];
        let mut d = [0.0; 5];
        for (slot, dir) in d.iter_mut().zip(basis.iter()) {
            *slot = self.directional_derivative(value, dir);
        }
        I1Partials { value, d_a: d[0], d_b: d[1], d_c: d[2], d_d: d[3], d_f: d[4] }
    }

    fn directional_derivative(&self, value: f64, t: &QuadraticTangent) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        let s = self.s();
        let l4 = 2.0 * s.sqrt();
        let ds = 4.0 * a * c * t.da + 2.0 * a * a * t.dc;
        let dl4 = ds / s.sqrt();
        // dL1 / L1
        let dlog_l1 = -(2.0 * b * c * t.db + b * b * t.dc) / s + b * b * c * ds / (s * s);
        let sq2 = std::f64::consts::SQRT_2;
        let dinner = |x: f64, dx: f64| {
            // d/dtheta of (2AC(Ax+B) + x) = s x + 2ABC
            ds * x + s * dx + 2.0 * (t.da * b * c + a * t.db * c + a * b * t.dc)
        };
        // d erf(L_k / L4) * L1 / L4, combined in one exponent so that
        // exp(-B^2 C / s) exp(-z^2) = exp(-(t^2/2 + C(At+B)^2)) never underflows early.
        let edge = |x: f64, dx: f64| -> f64 {
            if !x.is_finite() {
                return 0.0;
            }
            let lk = sq2 * (s * x + 2.0 * a * b * c);
            let dlk = sq2 * dinner(x, dx);
            let z = lk / l4;
            let dz = dlk / l4 - lk * dl4 / (l4 * l4);
            // L1 * erf'(z) = 2/sqrt(pi) exp(-(B^2 C/s + z^2))
            let weight = 2.0 / std::f64::consts::PI.sqrt() * (-self.exponent_at(x)).exp();
            debug_assert!(weight.is_finite() && erf_prime(z).is_finite());
            weight * dz / l4
        };
        let d_edges = if self.d == self.f && t.dd == t.df { 0.0 } else { edge(self.f, t.df) - edge(self.d, t.dd) };
        value * (dlog_l1 - dl4 / l4) + d_edges
    }
}

/// Checked `I1`: rejects invalid bundles and reports non-finite results.
pub fn i1(g: &GaussianQuadratic) -> Result<f64> {
    g.check()?;
    let v = g.value();
    if !v.is_finite() {
        return Err(Error::NonFinite { what: "I1", at: g.c, value: v });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::special::{norm_cdf, norm_pdf};
    use super::*;

    #[test]
    fn zero_curvature_reduces_to_cdf_difference() {
        for &(a, b) in &[(0.0, 0.0), (1.3, -0.4), (2.0, 5.0)] {
            let g = GaussianQuadratic::new(a, b, 0.0, -0.7, 1.1);
            let expect = norm_cdf(1.1) - norm_cdf(-0.7);
            assert!((i1(&g).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_interval_is_zero() {
        let g = GaussianQuadratic::new(0.5, 0.3, 1.2, 0.4, 0.4);
        assert_eq!(i1(&g).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid_bundles() {
        assert!(i1(&GaussianQuadratic::new(1.0, 0.0, -0.1, 0.0, 1.0)).is_err());
        assert!(i1(&GaussianQuadratic::new(1.0, 0.0, 0.1, 1.0, 0.0)).is_err());
    }

    #[test]
    fn boundary_partials_are_the_integrand() {
        let g = GaussianQuadratic::new(0.5, 0.3, 1.2, -1.0, 2.0);
        let p = g.partials();
        let integrand = |t: f64| norm_pdf(t) * (-g.c * (g.a * t + g.b).powi(2)).exp();
        assert!((p.d_f - integrand(g.f)).abs() < 1e-14);
        assert!((p.d_d + integrand(g.d)).abs() < 1e-14);
    }

    #[test]
    fn partials_match_central_differences() {
        let g = GaussianQuadratic::new(0.7, -0.4, 2.3, -1.2, 0.9);
        let p = g.partials();
        let h = 1e-6;
        let fd = |f: &dyn Fn(f64) -> GaussianQuadratic| (f(h).value() - f(-h).value()) / (2.0 * h);
        let checks = [
            (p.d_a, fd(&|e| GaussianQuadratic { a: g.a + e, ..g })),
            (p.d_b, fd(&|e| GaussianQuadratic { b: g.b + e, ..g })),
            (p.d_c, fd(&|e| GaussianQuadratic { c: g.c + e, ..g })),
            (p.d_d, fd(&|e| GaussianQuadratic { d: g.d + e, ..g })),
            (p.d_f, fd(&|e| GaussianQuadratic { f: g.f + e, ..g })),
        ];
        for (analytic, numeric) in checks {
            assert!((analytic - numeric).abs() < 1e-8, "{analytic} vs {numeric}");
        }
    }

    #[test]
    fn tails_do_not_cancel() {
        // Both edges deep in the right tail.
        let g = GaussianQuadratic::new(0.2, 0.1, 0.5, 9.0, 10.0);
        let v = i1(&g).unwrap();
        assert!(v > 0.0 && v < 1e-17);
        let g = GaussianQuadratic::new(0.2, 0.1, 0.5, -10.0, -9.0);
        assert!(i1(&g).unwrap() > 0.0);
    }
}
