//! Third level of lifting.
//!
//! ```text
//! psi3 = (1 - p2 q2) c2 / 2 + (p2 q2 - p3 q3) c3 / 2 - gamma_q
//!      + log(G1 / (2 gamma_q)) / (2 c2) + log(G2 / G1) / (2 c3) - q3 / (2 G2)
//!      + gamma_p - nu (2 - alpha) / (4 gamma_p)
//!      - (alpha / c3) E_{u4} log E_{u3} fhat^{c3 / c2},
//! G1 = 2 gamma_q - c2 (1 - q2),  G2 = G1 - c3 (q2 - q3),
//! fhat = fhat(sqrt(1 - p2), u3 sqrt(p2 - p3) + u4 sqrt(p3), c2 / (4 gamma_p), nu).
//! ```
//!
//! The first log divides by `G1`, which keeps the collapse to the second
//! level exact. `B` uses `sqrt(p3)`, and the `nu` term carries `4 gamma_p` as
//! on the other levels.

use crate::error::{Error, Result};
use crate::gaussian::{cached_rule, GaussianQuadratic, QuadRule};
use crate::inner::{log_fhat, log_fhat_partials, quadratic};
use crate::level2::{check_positive, named};
use crate::model::{
    stopwatch, validate, AuxParams, Diagnostics, EvalPoint, EvalResult, LiftingParams, QuadConfig, P_UPPER_LIMIT,
};

pub const RESIDUALS: [&str; 9] = ["c2", "c3", "p2", "p3", "q2", "q3", "gamma_q", "gamma_p", "nu"];

/// Step of the one-sided differences used where `dB/dp` is singular.
const FALLBACK_STEP: f64 = 1e-6;

/// Inner quantities at one node pair `(u3, u4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level3Inner {
    pub u3: f64,
    pub u4: f64,
    pub abar0: f64,
    pub abar2: f64,
    pub quad: GaussianQuadratic,
    pub fhat: f64,
}

impl Level3Inner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(u3: f64, u4: f64, p2: f64, p3: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<Self> {
        check_p(p2, p3)?;
        check_positive("gamma_p", gamma_p)?;
        let a = (1.0 - p2).sqrt();
        let c = c2 / (4.0 * gamma_p);
        let b = u3 * (p2 - p3).sqrt() + u4 * p3.sqrt();
        let quad = quadratic(a, b, c, nu);
        let fhat = log_fhat(a, b, c, nu)?.exp();
        if !fhat.is_finite() {
            return Err(Error::NonFinite { what: "fhat", at: b, value: fhat });
        }
        Ok(Level3Inner { u3, u4, abar0: quad.d, abar2: quad.f, quad, fhat })
    }
}

/// The exact inner expectation `fhat` at `(u3, u4)`.
#[allow(clippy::too_many_arguments)]
pub fn fhat2_level3(u3: f64, u4: f64, p2: f64, p3: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<f64> {
    Ok(Level3Inner::new(u3, u4, p2, p3, c2, gamma_p, nu)?.fhat)
}

fn check_p(p2: f64, p3: f64) -> Result<()> {
    if !(0.0..=P_UPPER_LIMIT).contains(&p2) {
        return Err(Error::OutOfDomain { what: "p2", value: p2 });
    }
    if !(p3 >= 0.0) {
        return Err(Error::OutOfDomain { what: "p3", value: p3 });
    }
    if p3 > p2 {
        return Err(Error::Ordering(format!("p3 = {p3} exceeds p2 = {p2}")));
    }
    Ok(())
}

/// Third-level parameters, unpacked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level3Vars {
    pub alpha: f64,
    pub p2: f64,
    pub p3: f64,
    pub q2: f64,
    pub q3: f64,
    pub c2: f64,
    pub c3: f64,
    pub aux: AuxParams,
}

impl Level3Vars {
    pub fn from_point(point: &EvalPoint) -> Result<Self> {
        if let Err(v) = validate(point) {
            let msg = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidInput(msg));
        }
        if point.lifting.r != 3 {
            return Err(Error::InvalidInput(format!("expected r = 3, got {}", point.lifting.r)));
        }
        let l = &point.lifting;
        Ok(Level3Vars {
            alpha: point.alpha,
            p2: l.p[0],
            p3: l.p[1],
            q2: l.q[0],
            q3: l.q[1],
            c2: l.c[0],
            c3: l.c[1],
            aux: point.aux,
        })
    }

    pub fn to_point(&self) -> EvalPoint {
        EvalPoint {
            alpha: self.alpha,
            lifting: LiftingParams::level3(self.p2, self.p3, self.q2, self.q3, self.c2, self.c3),
            aux: self.aux,
        }
    }
}

/// Sphere-side terms; partials in residual order, perceptron slots zero.
fn sphere(v: &Level3Vars) -> Result<(f64, [f64; 9])> {
    let (p2, p3, q2, q3, c2, c3) = (v.p2, v.p3, v.q2, v.q3, v.c2, v.c3);
    let gq = v.aux.gamma_q;
    if q3 > q2 || q3 < 0.0 {
        return Err(Error::Ordering(format!("need 0 <= q3 <= q2, got q2 = {q2}, q3 = {q3}")));
    }
    let g1 = 2.0 * gq - c2 * (1.0 - q2);
    if !(g1 > 0.0) {
        return Err(Error::OutOfDomain { what: "2 gamma_q - c2 (1 - q2)", value: g1 });
    }
    let g2 = g1 - c3 * (q2 - q3);
    if !(g2 > 0.0) {
        return Err(Error::OutOfDomain { what: "G1 - c3 (q2 - q3)", value: g2 });
    }
    let l1 = (g1 / (2.0 * gq)).ln();
    let l2 = (g2 / g1).ln();
    let value = 0.5 * (1.0 - p2 * q2) * c2 + 0.5 * (p2 * q2 - p3 * q3) * c3 - gq + l1 / (2.0 * c2) + l2 / (2.0 * c3)
        - q3 / (2.0 * g2);
    // (explicit, dG1, dG2 - dG1, d gamma_q indicator, d q3 indicator)
    let rows: [(f64, f64, f64, f64, f64); 9] = [
        (0.5 * (1.0 - p2 * q2) - l1 / (2.0 * c2 * c2), -(1.0 - q2), 0.0, 0.0, 0.0),
        (0.5 * (p2 * q2 - p3 * q3) - l2 / (2.0 * c3 * c3), 0.0, -(q2 - q3), 0.0, 0.0),
        (0.5 * q2 * (c3 - c2), 0.0, 0.0, 0.0, 0.0),
        (-0.5 * q3 * c3, 0.0, 0.0, 0.0, 0.0),
        (0.5 * p2 * (c3 - c2), c2, -c3, 0.0, 0.0),
        (-0.5 * p3 * c3, 0.0, c3, 0.0, 1.0),
        (-1.0, 2.0, 0.0, 1.0, 0.0),
        (0.0, 0.0, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0, 0.0),
    ];
    let mut grad = [0.0; 9];
    for (slot, &(explicit, dg1, dg21, ind_gq, ind_q3)) in grad.iter_mut().zip(rows.iter()) {
        let dg2 = dg1 + dg21;
        *slot = explicit
            + (dg1 / g1 - ind_gq / gq) / (2.0 * c2)
            + (dg2 / g2 - dg1 / g1) / (2.0 * c3)
            + q3 * dg2 / (2.0 * g2 * g2)
            - ind_q3 / (2.0 * g2);
    }
    Ok((value, grad))
}

struct Perceptron {
    value: f64,
    /// `E_{u4} log E_{u3} fhat^kappa`
    outer_log: f64,
    /// Partials in residual order; sphere slots zero.
    grad: [f64; 9],
    /// Whether the `p2` / `p3` partials still need a fallback.
    singular_p: bool,
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn perceptron(v: &Level3Vars, inner: &QuadRule, outer: &QuadRule, with_grad: bool) -> Result<Perceptron> {
    let AuxParams { gamma_p: gp, nu, .. } = v.aux;
    check_p(v.p2, v.p3)?;
    check_positive("c2", v.c2)?;
    check_positive("c3", v.c3)?;
    check_positive("gamma_p", gp)?;
    let (alpha, c2, c3) = (v.alpha, v.c2, v.c3);
    let a = (1.0 - v.p2).sqrt();
    let s23 = (v.p2 - v.p3).sqrt();
    let s3 = v.p3.sqrt();
    let c = c2 / (4.0 * gp);
    let kappa = c3 / c2;
    let n = inner.len();
    let mut lw = vec![0.0; n];
    let mut parts = Vec::with_capacity(if with_grad { n } else { 0 });
    let (mut e, mut x_lf, mut x_c, mut x_nu, mut x_p2, mut x_p3) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let singular_p = s23 == 0.0 || s3 == 0.0;
    for (u4, w4) in outer.iter() {
        parts.clear();
        for (k, (u3, w3)) in inner.iter().enumerate() {
            let b = u3 * s23 + u4 * s3;
            let lf = if with_grad {
                let l = log_fhat_partials(a, b, c, nu)?;
                parts.push((u3, l));
                l.value
            } else {
                log_fhat(a, b, c, nu)?
            };
            lw[k] = w3.ln() + kappa * lf;
        }
        let log_m = log_sum_exp(&lw);
        if !log_m.is_finite() {
            return Err(Error::NonFinite { what: "inner power mean", at: u4, value: log_m });
        }
        e += w4 * log_m;
        if with_grad {
            for (k, (u3, l)) in parts.iter().enumerate() {
                let om = w4 * (lw[k] - log_m).exp();
                x_lf += om * l.value;
                x_c += om * l.d_c;
                x_nu += om * l.d_nu;
                if !singular_p {
                    x_p2 += om * (-l.d_a / (2.0 * a) + l.d_b * u3 / (2.0 * s23));
                    x_p3 += om * l.d_b * (-u3 / (2.0 * s23) + u4 / (2.0 * s3));
                }
            }
        }
    }
    let value = gp - nu * (2.0 - alpha) / (4.0 * gp) - alpha / c3 * e;
    let mut grad = [0.0; 9];
    if with_grad {
        grad[0] = alpha / (c2 * c2) * x_lf - alpha / c2 * x_c / (4.0 * gp);
        grad[1] = alpha / (c3 * c3) * e - alpha / c3 * x_lf / c2;
        grad[2] = -alpha / c2 * x_p2;
        grad[3] = -alpha / c2 * x_p3;
        grad[7] = 1.0 + nu * (2.0 - alpha) / (4.0 * gp * gp) + alpha * x_c / (4.0 * gp * gp);
        grad[8] = -(2.0 - alpha) / (4.0 * gp) - alpha / c2 * x_nu;
    }
    Ok(Perceptron { value, outer_log: e, grad, singular_p })
}

/// Value, residual-ordered partials, `d psi / d alpha`, and the names of
/// partials obtained by one-sided differences.
pub(crate) fn eval3(
    v: &Level3Vars,
    inner: &QuadRule,
    outer: &QuadRule,
    with_grad: bool,
) -> Result<(f64, [f64; 9], f64, Vec<&'static str>)> {
    check_positive("gamma_q", v.aux.gamma_q)?;
    let (s, sg) = sphere(v)?;
    let p = perceptron(v, inner, outer, with_grad)?;
    let psi = s + p.value;
    let mut grad = [0.0; 9];
    let mut fallback = Vec::new();
    if with_grad {
        for k in 0..9 {
            grad[k] = sg[k] + p.grad[k];
        }
        if p.singular_p {
            grad[2] = one_sided(v, inner, outer, psi, 2)?;
            grad[3] = one_sided(v, inner, outer, psi, 3)?;
            fallback.extend(["p2", "p3"]);
        }
    }
    let dalpha = v.aux.nu / (4.0 * v.aux.gamma_p) - p.outer_log / v.c3;
    Ok((psi, grad, dalpha, fallback))
}

/// Second-order one-sided difference in `p2` (`k = 2`) or `p3` (`k = 3`),
/// stepping into the ordered region.
fn one_sided(v: &Level3Vars, inner: &QuadRule, outer: &QuadRule, psi0: f64, k: usize) -> Result<f64> {
    let dir = match k {
        2 => {
            if v.p2 + 2.0 * FALLBACK_STEP <= P_UPPER_LIMIT {
                1.0
            } else {
                -1.0
            }
        }
        _ => {
            if v.p3 + 2.0 * FALLBACK_STEP <= v.p2 {
                1.0
            } else {
                -1.0
            }
        }
    };
    let at = |t: f64| -> Result<f64> {
        let mut w = *v;
        if k == 2 {
            w.p2 += t;
        } else {
            w.p3 += t;
        }
        Ok(sphere(&w)?.0 + perceptron(&w, inner, outer, false)?.value)
    };
    let h = dir * FALLBACK_STEP;
    let f1 = at(h)?;
    let f2 = at(2.0 * h)?;
    Ok((-3.0 * psi0 + 4.0 * f1 - f2) / (2.0 * h))
}

fn rules(cfg: &QuadConfig) -> Result<(std::sync::Arc<QuadRule>, std::sync::Arc<QuadRule>)> {
    Ok((cached_rule(cfg.nodes_inner)?, cached_rule(cfg.nodes_outer)?))
}

/// Third-level free energy with its analytic residuals.
pub fn psi3_full(point: &EvalPoint, cfg: &QuadConfig) -> Result<EvalResult> {
    let elapsed = stopwatch();
    let v = Level3Vars::from_point(point)?;
    let (inner, outer) = rules(cfg)?;
    let (psi, grad, _, fallback) = eval3(&v, &inner, &outer, true)?;
    Ok(EvalResult {
        psi,
        grad: named(&RESIDUALS, &grad),
        diagnostics: Diagnostics { nodes: vec![cfg.nodes_inner, cfg.nodes_outer], wall_time: elapsed(), fallback },
    })
}

/// `psi3` only.
pub fn psi3_value(point: &EvalPoint, cfg: &QuadConfig) -> Result<f64> {
    let v = Level3Vars::from_point(point)?;
    let (inner, outer) = rules(cfg)?;
    psi3_value_with_rules(&v, &inner, &outer)
}

/// `psi3` with caller-supplied rules over `u3` and `u4`.
pub fn psi3_value_with_rules(v: &Level3Vars, inner: &QuadRule, outer: &QuadRule) -> Result<f64> {
    Ok(eval3(v, inner, outer, false)?.0)
}

/// The nine residuals `(c2, c3, p2, p3, q2, q3, gamma_q, gamma_p, nu)`.
pub fn grad_psi3(point: &EvalPoint, cfg: &QuadConfig) -> Result<[f64; 9]> {
    let v = Level3Vars::from_point(point)?;
    let (inner, outer) = rules(cfg)?;
    Ok(eval3(&v, &inner, &outer, true)?.1)
}

/// Closed-form `(gamma_q, c2, c3, gamma_p)` implied by `(p2, p3, q2, q3)`.
pub fn closed_form_r3(p2: f64, p3: f64, q2: f64, q3: f64) -> Result<(f64, f64, f64, f64)> {
    if !(p3 > 0.0 && q3 > 0.0 && p2 < 1.0 && q2 < 1.0) {
        return Err(Error::Singular(format!(
            "closed form needs 0 < p3, q3 and p2, q2 < 1; got ({p2}, {p3}, {q2}, {q3})"
        )));
    }
    let dp = p2 - p3;
    let dq = q2 - q3;
    if !(dp > 0.0 && dq > 0.0) {
        return Err(Error::Singular(format!("coincident entries: p2 - p3 = {dp}, q2 - q3 = {dq}")));
    }
    let r = (q3 / p3).sqrt();
    let gamma_q = 0.5 * (1.0 - q2) / (1.0 - p2) * dp / dq * r;
    let c2 = dp / dq * r / (1.0 - p2) - dq / dp / r / (1.0 - q2);
    let c3 = 1.0 / (dp * r) - r / dq;
    Ok((gamma_q, c2, c3, 0.25 / gamma_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level2;

    fn known_point() -> EvalPoint {
        EvalPoint {
            alpha: 6.7004,
            lifting: LiftingParams::level3(0.9766, 0.7411, 0.4279, 0.1672, 14.2862, 7.1182),
            aux: AuxParams { gamma_q: 5.2521, gamma_p: 0.0476, nu: 0.0357 },
        }
    }

    #[test]
    fn table_3_point_is_near_zero() {
        let r = psi3_full(&known_point(), &QuadConfig::default()).unwrap();
        assert!(r.psi.abs() < 5e-3, "{}", r.psi);
        assert!(r.diagnostics.fallback.is_empty());
    }

    #[test]
    fn collapses_to_level_two() {
        // Same outer rule on both levels, so the collapse is exact.
        let cfg = QuadConfig { nodes_single: 48, nodes_outer: 48, ..QuadConfig::default() };
        let l2 = EvalPoint {
            alpha: 6.7157,
            lifting: LiftingParams::level2(0.7772, 0.1914, 8.4313),
            aux: AuxParams { gamma_q: 3.6568, gamma_p: 0.0684, nu: 0.0533 },
        };
        let mut l3 = l2.clone();
        l3.lifting = LiftingParams::level3(0.7772, 0.7772, 0.1914, 0.1914, 8.4313, 3.3);
        let a = level2::psi2_full(&l2, &cfg).unwrap();
        let b = psi3_full(&l3, &cfg).unwrap();
        assert!((a.psi - b.psi).abs() < 1e-10, "{} vs {}", a.psi, b.psi);
        assert!((a.residual("c2").unwrap() - b.residual("c2").unwrap()).abs() < 1e-8);
        assert!(b.residual("c3").unwrap().abs() < 1e-10);
        assert_eq!(b.diagnostics.fallback, vec!["p2", "p3"]);
    }

    #[test]
    fn closed_form_at_table_point() {
        let (gq, c2, c3, gp) = closed_form_r3(0.9766, 0.7411, 0.4279, 0.1672).unwrap();
        assert!((gq / 5.2521 - 1.0).abs() < 5e-3);
        assert!((c2 / 14.2862 - 1.0).abs() < 5e-3);
        assert!((c3 / 7.1182 - 1.0).abs() < 5e-3);
        assert_eq!(4.0 * gq * gp, 1.0);
        assert!(closed_form_r3(0.5, 0.5, 0.3, 0.1).is_err());
    }

    #[test]
    fn ordering_is_enforced() {
        let mut pt = known_point();
        pt.lifting.p = vec![0.5, 0.7];
        assert!(psi3_full(&pt, &QuadConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let cfg = QuadConfig { nodes_inner: 24, nodes_outer: 24, ..QuadConfig::default() };
        let mut off = known_point();
        off.lifting = LiftingParams::level3(0.8, 0.5, 0.4, 0.2, 5.0, 3.0);
        off.aux = AuxParams { gamma_q: 3.0, gamma_p: 0.1, nu: 0.2 };
        for pt in [known_point(), off] {
            let g = grad_psi3(&pt, &cfg).unwrap();
            let h = 1e-5;
            for k in 0..9 {
                let shifted = |e: f64| {
                    let mut v = Level3Vars::from_point(&pt).unwrap();
                    match k {
                        0 => v.c2 += e,
                        1 => v.c3 += e,
                        2 => v.p2 += e,
                        3 => v.p3 += e,
                        4 => v.q2 += e,
                        5 => v.q3 += e,
                        6 => v.aux.gamma_q += e,
                        7 => v.aux.gamma_p += e,
                        _ => v.aux.nu += e,
                    }
                    psi3_value(&v.to_point(), &cfg).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                assert!((g[k] - fd).abs() < 1e-6 * g[k].abs().max(1.0), "k={k} {} vs {fd}", g[k]);
            }
        }
    }
}
