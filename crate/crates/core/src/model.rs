//! Parameter records shared by all lifting levels, the coefficient maps
//! `b_k`, `c_k`, and the per-coordinate inner minimizer `phi_bar_z`.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `p2` values this close to one make `sqrt(1 - p2)` denominators blow up.
pub const P_UPPER_LIMIT: f64 = 1.0 - 1e-10;

/// Returns a closure reporting the time since the call. Reads zero on wasm,
/// where `Instant` is unavailable.
#[cfg(not(target_arch = "wasm32"))]
pub(crate) fn stopwatch() -> impl Fn() -> Duration {
    let start = std::time::Instant::now();
    move || start.elapsed()
}

#[cfg(target_arch = "wasm32")]
pub(crate) fn stopwatch() -> impl Fn() -> Duration {
    || Duration::ZERO
}

/// Which lifted free energy is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    /// First level (plain duality), closed form.
    R1,
    /// Second level with `p2 = q2 = 0` and free `c2`.
    R2Partial,
    /// Full second level.
    R2Full,
    /// Third level.
    R3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::R1, Level::R2Partial, Level::R2Full, Level::R3];

    /// Short tag used on the command line and in output: `1`, `2p`, `2`, `3`.
    pub fn tag(self) -> &'static str {
        match self {
            Level::R1 => "1",
            Level::R2Partial => "2p",
            Level::R2Full => "2",
            Level::R3 => "3",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.tag() == tag)
    }

    /// Lifting depth `r`.
    pub fn depth(self) -> usize {
        match self {
            Level::R1 => 1,
            Level::R2Partial | Level::R2Full => 2,
            Level::R3 => 3,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// The free entries of the lifting sequences. Boundary values
/// (`p_1 = q_1 = 1`, `p_{r+1} = q_{r+1} = 0`) are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftingParams {
    pub r: usize,
    /// `[p2, .., p_r]`
    pub p: Vec<f64>,
    /// `[q2, .., q_r]`
    pub q: Vec<f64>,
    /// `[c2, .., c_r]`; empty at `r = 1` where `c2 -> 0`.
    pub c: Vec<f64>,
}

impl LiftingParams {
    pub fn level1() -> Self {
        LiftingParams { r: 1, p: vec![], q: vec![], c: vec![] }
    }

    /// Partial second level: `p2 = q2 = 0`.
    pub fn partial(c2: f64) -> Self {
        LiftingParams { r: 2, p: vec![0.0], q: vec![0.0], c: vec![c2] }
    }

    pub fn level2(p2: f64, q2: f64, c2: f64) -> Self {
        LiftingParams { r: 2, p: vec![p2], q: vec![q2], c: vec![c2] }
    }

    pub fn level3(p2: f64, p3: f64, q2: f64, q3: f64, c2: f64, c3: f64) -> Self {
        LiftingParams { r: 3, p: vec![p2, p3], q: vec![q2, q3], c: vec![c2, c3] }
    }

    /// `p_k` with boundary conventions, `k` in `1..=r+1`.
    pub fn p_at(&self, k: usize) -> f64 {
        boundary_entry(&self.p, self.r, k)
    }

    pub fn q_at(&self, k: usize) -> f64 {
        boundary_entry(&self.q, self.r, k)
    }
}

fn boundary_entry(free: &[f64], r: usize, k: usize) -> f64 {
    if k <= 1 {
        1.0
    } else if k > r {
        0.0
    } else {
        free[k - 2]
    }
}

/// Saddle variables of the square-root tricks and the cardinality multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxParams {
    pub gamma_q: f64,
    pub gamma_p: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub alpha: f64,
    pub lifting: LiftingParams,
    pub aux: AuxParams,
}

/// One named stationarity residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Node counts of the quadrature rules used, outermost last.
    pub nodes: Vec<usize>,
    #[serde(skip)]
    pub wall_time: Duration,
    /// Residuals computed by one-sided differences instead of analytically.
    pub fallback: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub psi: f64,
    pub grad: Vec<Residual>,
    pub diagnostics: Diagnostics,
}

impl EvalResult {
    pub fn residual_norm(&self) -> f64 {
        self.grad.iter().map(|r| r.value * r.value).sum::<f64>().sqrt()
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.grad.iter().find(|r| r.name == name).map(|r| r.value)
    }

    pub fn grad_values(&self) -> Vec<f64> {
        self.grad.iter().map(|r| r.value).collect()
    }
}

/// Quadrature resolution and solver tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Nodes for the single outer expectation of the second level.
    pub nodes_single: usize,
    /// Nodes over `u3` in the nested third-level expectation.
    pub nodes_inner: usize,
    /// Nodes over `u4` in the nested third-level expectation.
    pub nodes_outer: usize,
    pub psi_tol: f64,
    pub grad_tol: f64,
    pub alpha_bracket: (f64, f64),
    pub max_iters: usize,
    pub damping: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            nodes_single: 64,
            nodes_inner: 64,
            nodes_outer: 64,
            psi_tol: 1e-9,
            grad_tol: 1e-8,
            alpha_bracket: (5.0, 10.0),
            max_iters: 100,
            damping: 0.5,
        }
    }
}

impl QuadConfig {
    /// Named presets: `fast`, `default`, `fine`.
    pub fn profile(name: &str) -> Option<QuadConfig> {
        let base = QuadConfig::default();
        match name {
            "default" => Some(base),
            "fast" => Some(QuadConfig { nodes_single: 32, nodes_inner: 32, nodes_outer: 32, ..base }),
            "fine" => Some(QuadConfig { nodes_single: 128, nodes_inner: 128, nodes_outer: 128, ..base }),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let nodes = [self.nodes_single, self.nodes_inner, self.nodes_outer];
        if nodes.iter().any(|&n| n == 0 || n > crate::gaussian::MAX_NODES) {
            return Err(Error::InvalidInput(format!("node counts out of range: {nodes:?}")));
        }
        if !(self.psi_tol > 0.0 && self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.alpha_bracket.0 < self.alpha_bracket.1) {
            return Err(Error::InvalidInput(format!("empty alpha bracket {:?}", self.alpha_bracket)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// `b_k = sqrt(p_{k-1} - p_k)` and `c_k = sqrt(q_{k-1} - q_k)` for `k = 2..=r+1`.
pub fn coeffs_bc(lifting: &LiftingParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = lifting.r;
    let mut b = Vec::with_capacity(r);
    let mut c = Vec::with_capacity(r);
    for k in 2..=r + 1 {
        let dp = lifting.p_at(k - 1) - lifting.p_at(k);
        let dq = lifting.q_at(k - 1) - lifting.q_at(k);
        if dp < 0.0 {
            return Err(Error::Ordering(format!("p_{} < p_{}", k - 1, k)));
        }
        if dq < 0.0 {
            return Err(Error::Ordering(format!("q_{} < q_{}", k - 1, k)));
        }
        b.push(dp.sqrt());
        c.push(dq.sqrt());
    }
    Ok((b, c))
}

/// `min_z (z^2 - 2 u z) + nu sign(z)` with `sign(0) = -1`:
/// `-u^2 - nu` for `u <= 0`, `-nu` on `[0, sqrt(2 nu)]`, `-u^2 + nu` beyond.
#[inline]
pub fn phi_bar_z(u: f64, nu: f64) -> f64 {
    if u <= 0.0 {
        -u * u - nu
    } else if u * u <= 2.0 * nu {
        -nu
    } else {
        -u * u + nu
    }
}

/// One failed invariant of an [`EvalPoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Reports every violated invariant of `point`.
pub fn validate(point: &EvalPoint) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| out.push(Violation { field: field.to_string(), message });
    if !(point.alpha > 0.0) || !point.alpha.is_finite() {
        bad("alpha", format!("must be positive and finite, got {}", point.alpha));
    }
    let l = &point.lifting;
    if !(1..=3).contains(&l.r) {
        bad("r", format!("lifting level must be 1, 2 or 3, got {}", l.r));
    } else {
        let free = l.r - 1;
        for (name, seq) in [("p", &l.p), ("q", &l.q), ("c", &l.c)] {
            if seq.len() != free {
                bad(name, format!("expected {free} free entries, got {}", seq.len()));
            }
        }
    }
    for (name, seq) in [("p", &l.p), ("q", &l.q)] {
        let mut prev = 1.0;
        for (i, &v) in seq.iter().enumerate() {
            let field = format!("{name}{}", i + 2);
            if !(0.0..=1.0).contains(&v) {
                bad(&field, format!("must lie in [0, 1], got {v}"));
            } else if v > prev {
                bad(&field, format!("ordering violated: {v} exceeds preceding entry {prev}"));
            }
            prev = v;
        }
    }
    if let Some(&p2) = l.p.first() {
        if p2 > P_UPPER_LIMIT && p2 <= 1.0 {
            bad("p2", format!("too close to 1 ({p2}); sqrt(1 - p2) denominators are singular"));
        }
    }
    for (i, &v) in l.c.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            bad(&format!("c{}", i + 2), format!("must be positive, got {v}"));
        }
    }
    let aux = &point.aux;
    if !(aux.gamma_q > 0.0) {
        bad("gamma_q", format!("must be positive, got {}", aux.gamma_q));
    }
    if !(aux.gamma_p > 0.0) {
        bad("gamma_p", format!("must be positive, got {}", aux.gamma_p));
    }
    if !(aux.nu >= 0.0) || !aux.nu.is_finite() {
        bad("nu", format!("must be nonnegative, got {}", aux.nu));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
