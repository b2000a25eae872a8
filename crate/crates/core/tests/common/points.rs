//! Random valid parameter points for the level evaluators.
#![allow(dead_code)]

use injcap::model::{AuxParams, EvalPoint, LiftingParams};

use super::Draws;

pub fn level2(d: &mut Draws) -> EvalPoint {
    let p2 = d.range(0.3, 0.9);
    let q2 = d.range(0.05, 0.5);
    let c2 = d.range(2.0, 10.0);
    let gamma_q = 0.5 * c2 * (1.0 - q2) + d.range(0.3, 2.0);
    EvalPoint {
        alpha: d.range(5.0, 8.0),
        lifting: LiftingParams::level2(p2, q2, c2),
        aux: AuxParams { gamma_q, gamma_p: d.range(0.04, 0.3), nu: d.range(0.02, 0.3) },
    }
}

pub fn level3(d: &mut Draws) -> EvalPoint {
    let p2 = d.range(0.6, 0.95);
    let p3 = d.range(0.2, p2 - 0.1);
    let q2 = d.range(0.2, 0.5);
    let q3 = d.range(0.05, q2 - 0.1);
    let c2 = d.range(4.0, 15.0);
    let c3 = d.range(2.0, c2);
    let gamma_q = 0.5 * (c2 * (1.0 - q2) + c3 * (q2 - q3)) + d.range(0.3, 2.0);
    EvalPoint {
        alpha: d.range(5.0, 8.0),
        lifting: LiftingParams::level3(p2, p3, q2, q3, c2, c3),
        aux: AuxParams { gamma_q, gamma_p: d.range(0.04, 0.2), nu: d.range(0.02, 0.1) },
    }
}

/// Flat coordinates in residual order.
pub fn flat2(p: &EvalPoint) -> Vec<f64> {
    let l = &p.lifting;
    vec![l.c[0], l.p[0], l.q[0], p.aux.gamma_q, p.aux.gamma_p, p.aux.nu]
}

pub fn unflat2(alpha: f64, x: &[f64]) -> EvalPoint {
    EvalPoint {
        alpha,
        lifting: LiftingParams::level2(x[1], x[2], x[0]),
        aux: AuxParams { gamma_q: x[3], gamma_p: x[4], nu: x[5] },
    }
}

pub fn flat3(p: &EvalPoint) -> Vec<f64> {
    let l = &p.lifting;
    vec![l.c[0], l.c[1], l.p[0], l.p[1], l.q[0], l.q[1], p.aux.gamma_q, p.aux.gamma_p, p.aux.nu]
}

pub fn unflat3(alpha: f64, x: &[f64]) -> EvalPoint {
    EvalPoint {
        alpha,
        lifting: LiftingParams::level3(x[2], x[3], x[4], x[5], x[0], x[1]),
        aux: AuxParams { gamma_q: x[6], gamma_p: x[7], nu: x[8] },
    }
}
