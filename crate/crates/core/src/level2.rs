//! Second level of lifting, partial (`p2 = q2 = 0`) and full.
//!
//! ```text
//! psi2 = (1 - p2 q2) c2 / 2 - gamma_q + log(G / (2 gamma_q)) / (2 c2) - q2 / (2 G)
//!      + gamma_p - nu (2 - alpha) / (4 gamma_p) - (alpha / c2) E_u log fhat,
//! G = 2 gamma_q - c2 (1 - q2),
//! fhat = fhat(A = sqrt(1 - p2), B = u sqrt(p2), C = c2 / (4 gamma_p), nu).
//! ```

use crate::error::{Error, Result};
use crate::gaussian::{cached_rule, GaussianQuadratic, QuadRule};
use crate::inner::{log_fhat, log_fhat_partials, quadratic};
use crate::model::{
    stopwatch, validate, AuxParams, Diagnostics, EvalPoint, EvalResult, LiftingParams, QuadConfig, Residual,
    P_UPPER_LIMIT,
};

pub const RESIDUALS: [&str; 6] = ["c2", "p2", "q2", "gamma_q", "gamma_p", "nu"];
pub const PARTIAL_RESIDUALS: [&str; 3] = ["c2", "gamma_p", "nu"];

/// Step for the second `B`-difference used at `p2 = 0`.
const CURVATURE_STEP: f64 = 1e-4;

/// Inner quantities at one outer node `u3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level2Inner {
    pub u3: f64,
    pub abar0: f64,
    pub abar2: f64,
    pub quad: GaussianQuadratic,
    pub fhat: f64,
}

impl Level2Inner {
    pub fn new(u3: f64, p2: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<Self> {
        check_p2(p2)?;
        check_positive("gamma_p", gamma_p)?;
        let a = (1.0 - p2).sqrt();
        let c = c2 / (4.0 * gamma_p);
        let quad = quadratic(a, u3 * p2.sqrt(), c, nu);
        let fhat = log_fhat(a, quad.b, c, nu)?.exp();
        if !fhat.is_finite() {
            return Err(Error::NonFinite { what: "fhat", at: u3, value: fhat });
        }
        Ok(Level2Inner { u3, abar0: quad.d, abar2: quad.f, quad, fhat })
    }
}

/// The exact inner expectation `fhat` at outer node `u3`.
pub fn fhat2_level2(u3: f64, p2: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<f64> {
    Ok(Level2Inner::new(u3, p2, c2, gamma_p, nu)?.fhat)
}

fn check_p2(p2: f64) -> Result<()> {
    if !(0.0..=P_UPPER_LIMIT).contains(&p2) {
        return Err(Error::OutOfDomain { what: "p2", value: p2 });
    }
    Ok(())
}

pub(crate) fn check_positive(what: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::OutOfDomain { what, value: v });
    }
    Ok(())
}

/// Sphere-side terms and their partials `(c2, p2, q2, gamma_q)`.
fn sphere(c2: f64, p2: f64, q2: f64, gq: f64) -> Result<(f64, [f64; 4])> {
    let g = 2.0 * gq - c2 * (1.0 - q2);
    if !(g > 0.0) {
        return Err(Error::OutOfDomain { what: "2 gamma_q - c2 (1 - q2)", value: g });
    }
    let lg = (g / (2.0 * gq)).ln();
    let value = 0.5 * (1.0 - p2 * q2) * c2 - gq + lg / (2.0 * c2) - q2 / (2.0 * g);
    let d_c2 =
        0.5 * (1.0 - p2 * q2) - lg / (2.0 * c2 * c2) - (1.0 - q2) / (2.0 * c2 * g) - q2 * (1.0 - q2) / (2.0 * g * g);
    let d_p2 = -0.5 * c2 * q2;
    let d_q2 = c2 * (-0.5 * p2 + q2 / (2.0 * g * g));
    let d_gq = -1.0 + (1.0 - q2) / (2.0 * gq * g) + q2 / (g * g);
    Ok((value, [d_c2, d_p2, d_q2, d_gq]))
}

/// Perceptron-side terms.
struct Perceptron {
    value: f64,
    /// `E_u log fhat`
    mean_log: f64,
    /// Partials `(c2, p2, gamma_p, nu)`.
    grad: [f64; 4],
}

fn perceptron(alpha: f64, p2: f64, c2: f64, gp: f64, nu: f64, rule: &QuadRule, with_grad: bool) -> Result<Perceptron> {
    check_p2(p2)?;
    let a = (1.0 - p2).sqrt();
    let sp = p2.sqrt();
    let c = c2 / (4.0 * gp);
    let base = gp - nu * (2.0 - alpha) / (4.0 * gp);
    // At p2 = 0 the integrand does not depend on u.
    let single;
    let rule = if p2 == 0.0 {
        single = QuadRule::point_mass();
        &single
    } else {
        rule
    };
    if !with_grad {
        let mut mean_log = 0.0;
        for (u, w) in rule.iter() {
            mean_log += w * log_fhat(a, u * sp, c, nu)?;
        }
        return Ok(Perceptron { value: base - alpha / c2 * mean_log, mean_log, grad: [f64::NAN; 4] });
    }
    let (mut mean_log, mut e_c, mut e_nu, mut e_p) = (0.0, 0.0, 0.0, 0.0);
    for (u, w) in rule.iter() {
        let l = log_fhat_partials(a, u * sp, c, nu)?;
        mean_log += w * l.value;
        e_c += w * l.d_c;
        e_nu += w * l.d_nu;
        if p2 > 0.0 {
            e_p += w * (-l.d_a / (2.0 * a) + l.d_b * u / (2.0 * sp));
        }
    }
    if p2 == 0.0 {
        // E[l(A, u sqrt(p))] = l + p l_BB / 2 + O(p^2)
        let h = CURVATURE_STEP;
        let l0 = log_fhat_partials(a, 0.0, c, nu)?;
        let lbb = (log_fhat_partials(a, h, c, nu)?.d_b - log_fhat_partials(a, -h, c, nu)?.d_b) / (2.0 * h);
        e_p = -l0.d_a / (2.0 * a) + 0.5 * lbb;
    }
    let value = base - alpha / c2 * mean_log;
    let grad = [
        alpha / (c2 * c2) * mean_log - alpha / c2 * e_c / (4.0 * gp),
        -alpha / c2 * e_p,
        1.0 + nu * (2.0 - alpha) / (4.0 * gp * gp) + alpha * e_c / (4.0 * gp * gp),
        -(2.0 - alpha) / (4.0 * gp) - alpha / c2 * e_nu,
    ];
    Ok(Perceptron { value, mean_log, grad })
}

/// Closed-form `gamma_q` of the partial level.
pub fn gamma_q_partial(c2: f64) -> f64 {
    (c2 + (c2 * c2 + 4.0).sqrt()) / 4.0
}

/// `ftilde2 = fhat` at `p2 = 0`: `e^{Cnu}/2 + e^{-Cnu} Q(a) + e^{Cnu} (Phi(a s) - 1/2) / s`,
/// `s = sqrt(1 + 2C)`, `a = sqrt(2 nu)`.
pub fn ftilde2(c2: f64, gamma_p: f64, nu: f64) -> Result<f64> {
    fhat2_level2(0.0, 0.0, c2, gamma_p, nu)
}

fn check_partial(c2: f64, gamma_p: f64, nu: f64) -> Result<()> {
    check_positive("c2", c2)?;
    check_positive("gamma_p", gamma_p)?;
    if !(nu >= 0.0) {
        return Err(Error::OutOfDomain { what: "nu", value: nu });
    }
    Ok(())
}

/// Partial second level with `gamma_q` eliminated in closed form.
pub fn psi2_partial(alpha: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<f64> {
    check_partial(c2, gamma_p, nu)?;
    let gq = gamma_q_partial(c2);
    let (s, _) = sphere(c2, 0.0, 0.0, gq)?;
    let single = QuadRule::point_mass();
    Ok(s + perceptron(alpha, 0.0, c2, gamma_p, nu, &single, false)?.value)
}

/// Gradient of [`psi2_partial`] in `(c2, gamma_p, nu)`. The `gamma_q`
/// dependence drops out because `gamma_q` is stationary.
pub fn grad_psi2_partial(alpha: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<[f64; 3]> {
    Ok(eval_partial_parts(alpha, c2, gamma_p, nu)?.1)
}

fn eval_partial_parts(alpha: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<(f64, [f64; 3], f64)> {
    check_partial(c2, gamma_p, nu)?;
    let gq = gamma_q_partial(c2);
    let (s, sg) = sphere(c2, 0.0, 0.0, gq)?;
    let single = QuadRule::point_mass();
    let p = perceptron(alpha, 0.0, c2, gamma_p, nu, &single, true)?;
    Ok((s + p.value, [sg[0] + p.grad[0], p.grad[2], p.grad[3]], p.mean_log))
}

/// Value and named residuals of the partial level.
pub fn eval_partial(alpha: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<EvalResult> {
    let elapsed = stopwatch();
    let (psi, g, _) = eval_partial_parts(alpha, c2, gamma_p, nu)?;
    Ok(EvalResult {
        psi,
        grad: named(&PARTIAL_RESIDUALS, &g),
        diagnostics: Diagnostics { nodes: vec![], wall_time: elapsed(), fallback: vec![] },
    })
}

/// `d psi2_partial / d alpha` at fixed parameters.
pub fn dpsi2_partial_dalpha(alpha: f64, c2: f64, gamma_p: f64, nu: f64) -> Result<f64> {
    let (_, _, mean_log) = eval_partial_parts(alpha, c2, gamma_p, nu)?;
    Ok(nu / (4.0 * gamma_p) - mean_log / c2)
}

pub(crate) fn named(names: &[&'static str], values: &[f64]) -> Vec<Residual> {
    names.iter().zip(values).map(|(&name, &value)| Residual { name, value }).collect()
}

/// Full second-level parameters, unpacked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level2Vars {
    pub alpha: f64,
    pub p2: f64,
    pub q2: f64,
    pub c2: f64,
    pub aux: AuxParams,
}

impl Level2Vars {
    pub fn from_point(point: &EvalPoint) -> Result<Self> {
        if let Err(v) = validate(point) {
            let msg = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidInput(msg));
        }
        if point.lifting.r != 2 {
            return Err(Error::InvalidInput(format!("expected r = 2, got {}", point.lifting.r)));
        }
        Ok(Level2Vars {
            alpha: point.alpha,
            p2: point.lifting.p[0],
            q2: point.lifting.q[0],
            c2: point.lifting.c[0],
            aux: point.aux,
        })
    }

    pub fn to_point(&self) -> EvalPoint {
        EvalPoint { alpha: self.alpha, lifting: LiftingParams::level2(self.p2, self.q2, self.c2), aux: self.aux }
    }
}

/// Value and the six partials `(c2, p2, q2, gamma_q, gamma_p, nu)`, plus
/// `d psi / d alpha`.
pub(crate) fn eval2(v: &Level2Vars, rule: &QuadRule, with_grad: bool) -> Result<(f64, [f64; 6], f64)> {
    let AuxParams { gamma_q, gamma_p, nu } = v.aux;
    check_positive("c2", v.c2)?;
    check_positive("gamma_q", gamma_q)?;
    check_positive("gamma_p", gamma_p)?;
    let (s, sg) = sphere(v.c2, v.p2, v.q2, gamma_q)?;
    let p = perceptron(v.alpha, v.p2, v.c2, gamma_p, nu, rule, with_grad)?;
    let grad = [sg[0] + p.grad[0], sg[1] + p.grad[1], sg[2], sg[3], p.grad[2], p.grad[3]];
    Ok((s + p.value, grad, nu / (4.0 * gamma_p) - p.mean_log / v.c2))
}

/// Full second-level free energy with its analytic residuals.
pub fn psi2_full(point: &EvalPoint, cfg: &QuadConfig) -> Result<EvalResult> {
    let elapsed = stopwatch();
    let v = Level2Vars::from_point(point)?;
    let rule = cached_rule(cfg.nodes_single)?;
    let (psi, grad, _) = eval2(&v, &rule, true)?;
    Ok(EvalResult {
        psi,
        grad: named(&RESIDUALS, &grad),
        diagnostics: Diagnostics { nodes: vec![cfg.nodes_single], wall_time: elapsed(), fallback: vec![] },
    })
}

/// `psi2` only, skipping the derivative work.
pub fn psi2_value(point: &EvalPoint, cfg: &QuadConfig) -> Result<f64> {
    let v = Level2Vars::from_point(point)?;
    psi2_value_with_rule(&v, &*cached_rule(cfg.nodes_single)?)
}

/// `psi2` with a caller-supplied outer rule (for example a Monte Carlo sample).
pub fn psi2_value_with_rule(v: &Level2Vars, rule: &QuadRule) -> Result<f64> {
    Ok(eval2(v, rule, false)?.0)
}

/// The analytic residuals `(c2, p2, q2, gamma_q, gamma_p, nu)`.
pub fn grad_psi2(point: &EvalPoint, cfg: &QuadConfig) -> Result<[f64; 6]> {
    let v = Level2Vars::from_point(point)?;
    Ok(eval2(&v, &*cached_rule(cfg.nodes_single)?, true)?.1)
}

/// Closed-form `(gamma_q, c2, gamma_p)` implied by `(p2, q2)` at a stationary point.
pub fn closed_form_r2(p2: f64, q2: f64) -> Result<(f64, f64, f64)> {
    if !(q2 > 0.0) || !(p2 < 1.0) || !(q2 <= p2) {
        return Err(Error::Singular(format!("closed form needs 0 < q2 <= p2 < 1, got p2 = {p2}, q2 = {q2}")));
    }
    let ratio = (p2 / q2).sqrt();
    let gamma_q = 0.5 * (1.0 - q2) / (1.0 - p2) * ratio;
    let c2 = ratio / (1.0 - p2) - 1.0 / ((1.0 - q2) * ratio);
    Ok((gamma_q, c2, 0.25 / gamma_q))
}
