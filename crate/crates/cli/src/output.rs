//! Output records. Every float is rounded to 10 significant digits so that
//! identical invocations produce identical bytes.

use std::io::Write;

use injcap::model::{EvalPoint, Level, QuadConfig};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

fn opt(x: Option<f64>) -> Option<f64> {
    x.map(sig)
}

/// Human-readable form of `sig(x)`: plain decimals for moderate magnitudes,
/// exponent notation otherwise.
pub fn num(x: f64) -> String {
    let v = sig(x);
    if v == 0.0 || !v.is_finite() || (1e-4..1e10).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn show(x: Option<f64>) -> String {
    x.map_or_else(|| "null".into(), num)
}

/// Lifting and auxiliary parameters; entries a level does not have are `None`.
#[derive(Debug, Clone, Serialize)]
pub struct Params {
    pub p2: Option<f64>,
    pub p3: Option<f64>,
    pub q2: Option<f64>,
    pub q3: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub gamma_q: Option<f64>,
    pub gamma_p: Option<f64>,
    pub nu: Option<f64>,
}

impl Params {
    pub fn from_point(p: &EvalPoint) -> Params {
        let l = &p.lifting;
        Params {
            p2: opt(l.p.first().copied()),
            p3: opt(l.p.get(1).copied()),
            q2: opt(l.q.first().copied()),
            q3: opt(l.q.get(1).copied()),
            c2: opt(l.c.first().copied()),
            c3: opt(l.c.get(1).copied()),
            gamma_q: Some(sig(p.aux.gamma_q)),
            gamma_p: Some(sig(p.aux.gamma_p)),
            nu: Some(sig(p.aux.nu)),
        }
    }

    pub fn named(&self) -> [(&'static str, Option<f64>); 9] {
        [
            ("p2", self.p2),
            ("p3", self.p3),
            ("q2", self.q2),
            ("q3", self.q3),
            ("c2", self.c2),
            ("c3", self.c3),
            ("gamma_q", self.gamma_q),
            ("gamma_p", self.gamma_p),
            ("nu", self.nu),
        ]
    }
}

#[derive(Debug, Serialize)]
pub struct Quad {
    pub nodes_single: usize,
    pub nodes_inner: usize,
    pub nodes_outer: usize,
    pub psi_tol: f64,
    pub grad_tol: f64,
    pub alpha_bracket: [f64; 2],
    pub max_iters: usize,
    pub damping: f64,
}

impl From<&QuadConfig> for Quad {
    fn from(c: &QuadConfig) -> Quad {
        Quad {
            nodes_single: c.nodes_single,
            nodes_inner: c.nodes_inner,
            nodes_outer: c.nodes_outer,
            psi_tol: c.psi_tol,
            grad_tol: c.grad_tol,
            alpha_bracket: [c.alpha_bracket.0, c.alpha_bracket.1],
            max_iters: c.max_iters,
            damping: c.damping,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CapacityRecord {
    pub level: String,
    pub alpha_star: f64,
    pub params: Params,
    pub psi_residual: f64,
    pub grad_residual_norm: f64,
    pub quad: Quad,
    pub seed: Option<u64>,
    pub version: &'static str,
}

#[derive(Serialize)]
struct CapacityCsvRow<'a> {
    level: &'a str,
    alpha_star: f64,
    p2: Option<f64>,
    p3: Option<f64>,
    q2: Option<f64>,
    q3: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    gamma_q: Option<f64>,
    gamma_p: Option<f64>,
    nu: Option<f64>,
    psi_residual: f64,
    grad_residual_norm: f64,
    seed: Option<u64>,
    version: &'a str,
}

impl CapacityRecord {
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let p = &self.params;
        let mut w = csv::Writer::from_writer(out);
        w.serialize(CapacityCsvRow {
            level: &self.level,
            alpha_star: self.alpha_star,
            p2: p.p2,
            p3: p.p3,
            q2: p.q2,
            q3: p.q3,
            c2: p.c2,
            c3: p.c3,
            gamma_q: p.gamma_q,
            gamma_p: p.gamma_p,
            nu: p.nu,
            psi_residual: self.psi_residual,
            grad_residual_norm: self.grad_residual_norm,
            seed: self.seed,
            version: self.version,
        })?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct EvaluateRecord {
    pub level: String,
    pub alpha: f64,
    pub params: Params,
    pub psi: f64,
    pub residuals: Vec<NamedValue>,
    pub residual_norm: f64,
    pub fallback: Vec<String>,
    pub quad: Quad,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub psi: Option<f64>,
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepRecord {
    pub level: String,
    pub rows: Vec<SweepRow>,
    pub quad: Quad,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct EmpiricalRow {
    pub alpha: f64,
    pub trials: usize,
    pub positive_fraction: f64,
    pub median_xi: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct EmpiricalRecord {
    pub method: &'static str,
    pub n: usize,
    pub threshold: f64,
    pub restarts: usize,
    pub iters: usize,
    pub rows: Vec<EmpiricalRow>,
    pub nondecreasing: bool,
    pub seed: u64,
    pub version: &'static str,
}

pub fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn level_name(level: Level) -> &'static str {
    match level {
        Level::R1 => "1-sfl",
        Level::R2Partial => "2-spl",
        Level::R2Full => "2-sfl",
        Level::R3 => "3-sfl",
    }
}
