//! Published reference values of the stationary points at capacity.
#![allow(dead_code)]

use injcap::model::{AuxParams, EvalPoint, LiftingParams};

pub const ALPHA1: f64 = 7.6477;
pub const NU1: f64 = 0.6304;

pub const ALPHA2P: f64 = 7.4486;
/// `(gamma_q, gamma_p, nu, c2)`
pub const PARTIAL: [f64; 4] = [0.9412, 0.2656, 0.2785, 1.3513];

pub const ALPHA2: f64 = 6.7157;
/// `(gamma_q, gamma_p, nu, p2, q2, c2)`
pub const LEVEL2: [f64; 6] = [3.6568, 0.0684, 0.0533, 0.7772, 0.1914, 8.4313];

pub const ALPHA3: f64 = 6.7004;
/// `(gamma_q, gamma_p, nu, p2, p3, q2, q3, c2, c3)`
pub const LEVEL3: [f64; 9] = [5.2521, 0.0476, 0.0357, 0.9766, 0.7411, 0.4279, 0.1672, 14.2862, 7.1182];

pub fn level2_point() -> EvalPoint {
    let [gq, gp, nu, p2, q2, c2] = LEVEL2;
    EvalPoint {
        alpha: ALPHA2,
        lifting: LiftingParams::level2(p2, q2, c2),
        aux: AuxParams { gamma_q: gq, gamma_p: gp, nu },
    }
}

pub fn level3_point() -> EvalPoint {
    let [gq, gp, nu, p2, p3, q2, q3, c2, c3] = LEVEL3;
    EvalPoint {
        alpha: ALPHA3,
        lifting: LiftingParams::level3(p2, p3, q2, q3, c2, c3),
        aux: AuxParams { gamma_q: gq, gamma_p: gp, nu },
    }
}

/// Parameters of a solved point in the order of [`LEVEL3`] (absent entries are zero).
pub fn params(p: &EvalPoint) -> [f64; 9] {
    let l = &p.lifting;
    [
        p.aux.gamma_q,
        p.aux.gamma_p,
        p.aux.nu,
        l.p_at(2),
        l.p_at(3),
        l.q_at(2),
        l.q_at(3),
        l.c.first().copied().unwrap_or(0.0),
        l.c.get(1).copied().unwrap_or(0.0),
    ]
}
