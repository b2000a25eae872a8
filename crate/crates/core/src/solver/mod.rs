//! Stationary points of the lifted free energies and the capacity root.

mod fd;
mod newton;

use std::sync::Arc;

use serde::Serialize;

pub use fd::{fd_gradient, FdGradient};
pub use newton::TraceEntry;

use crate::error::{Error, Result};
use crate::gaussian::{cached_rule, QuadRule};
use crate::level1;
use crate::level2::{self, Level2Vars};
use crate::level3::{self, Level3Vars};
use crate::model::{AuxParams, EvalPoint, EvalResult, Level, LiftingParams, QuadConfig};
use newton::Options;

/// Minimum gap `p2 - p3`, `q2 - q3` for a third-level solution to count as
/// distinct from the collapsed second-level one.
const COLLAPSE_GAP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub level: Level,
    pub point: EvalPoint,
    pub psi: f64,
    /// Norm of the full residual vector of the level.
    pub residual_norm: f64,
    /// `d psi / d alpha` at the stationary point (envelope derivative).
    pub dpsi_dalpha: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketStep {
    pub alpha: f64,
    pub psi: f64,
    /// Largest `alpha` seen with `psi < 0`.
    pub lo: Option<f64>,
    /// Smallest `alpha` seen with `psi > 0`.
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub level: Level,
    pub alpha_star: f64,
    pub point: EvalPoint,
    pub psi_residual: f64,
    pub grad_residual_norm: f64,
    pub bracket_history: Vec<BracketStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub report: std::result::Result<SolveReport, String>,
}

/// Evaluates `psi` and the full residual vector of `level` at `point`.
///
/// For [`Level::R2Partial`] `gamma_q` is taken from its closed form and the
/// lifting entries `p2`, `q2` must be zero.
pub fn evaluate(level: Level, point: &EvalPoint, cfg: &QuadConfig) -> Result<EvalResult> {
    cfg.check()?;
    match level {
        Level::R1 => level1::Level1Point { alpha: point.alpha, nu: point.aux.nu }.eval(),
        Level::R2Partial => {
            let l = &point.lifting;
            if l.r != 2 || l.p.first() != Some(&0.0) || l.q.first() != Some(&0.0) {
                return Err(Error::InvalidInput("partial level needs r = 2 with p2 = q2 = 0".into()));
            }
            level2::eval_partial(point.alpha, l.c[0], point.aux.gamma_p, point.aux.nu)
        }
        Level::R2Full => level2::psi2_full(point, cfg),
        Level::R3 => level3::psi3_full(point, cfg),
    }
}

fn newton_opts(cfg: &QuadConfig) -> Options {
    Options { tol: cfg.grad_tol, max_iters: cfg.max_iters, damping: cfg.damping }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Finds a stationary point of `level` at `alpha`.
///
/// `init` is used as the first starting point when it has the right shape;
/// otherwise (and on failure) a fixed grid of starts derived from it or from
/// the level below is tried in order. Non-convergence is reported through
/// `converged = false` with the best point found.
pub fn solve_stationary(level: Level, alpha: f64, init: Option<&EvalPoint>, cfg: &QuadConfig) -> Result<SolveReport> {
    cfg.check()?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    match level {
        Level::R1 => solve_r1(alpha, cfg),
        Level::R2Partial => solve_r2p(alpha, init, cfg),
        Level::R2Full => solve_r2(alpha, init, cfg),
        Level::R3 => solve_r3(alpha, init, cfg),
    }
}

fn solve_r1(alpha: f64, cfg: &QuadConfig) -> Result<SolveReport> {
    let nu = level1::solve_nu1(alpha)?;
    let (gamma_q, gamma_p) = level1::gamma1(alpha, nu)?;
    let psi = level1::psi1(alpha, nu)?;
    let res = level1::dpsi1_dnu(alpha, nu)?;
    Ok(SolveReport {
        level: Level::R1,
        point: EvalPoint { alpha, lifting: LiftingParams::level1(), aux: AuxParams { gamma_q, gamma_p, nu } },
        psi,
        residual_norm: res.abs(),
        dpsi_dalpha: level1::dpsi1_dalpha(alpha, nu)?,
        iterations: 1,
        converged: res.abs() < cfg.grad_tol,
        trace: None,
    })
}

/// Keeps the best of several attempts: converged beats unconverged, then
/// smaller residual.
fn better(a: Option<SolveReport>, b: SolveReport) -> Option<SolveReport> {
    match a {
        None => Some(b),
        Some(a) => {
            if (b.converged && !a.converged) || (b.converged == a.converged && b.residual_norm < a.residual_norm) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

fn finish(best: Option<SolveReport>, alpha: f64) -> Result<SolveReport> {
    best.ok_or_else(|| Error::InvalidInput(format!("no starting point evaluable at alpha = {alpha}")))
}

fn solve_r2p(alpha: f64, init: Option<&EvalPoint>, cfg: &QuadConfig) -> Result<SolveReport> {
    let mut seeds = Vec::new();
    if let Some(p) = init.filter(|p| p.lifting.r == 2 && p.lifting.p[0] == 0.0 && p.lifting.c[0] > 0.0) {
        seeds.push([p.lifting.c[0], p.aux.gamma_p, p.aux.nu]);
    }
    for c2 in [1.0, 2.0, 0.5] {
        for gp in [0.3, 0.5] {
            for nu in [0.3, 0.6] {
                seeds.push([c2, gp, nu]);
            }
        }
    }
    let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(level2::grad_psi2_partial(alpha, x[0], x[1], x[2])?.to_vec()) };
    let mut best = None;
    for s in seeds {
        let Ok(out) = newton::solve(f, &s, newton_opts(cfg)) else { continue };
        let (c2, gamma_p, nu) = (out.x[0], out.x[1], out.x[2]);
        let point = EvalPoint {
            alpha,
            lifting: LiftingParams::partial(c2),
            aux: AuxParams { gamma_q: level2::gamma_q_partial(c2), gamma_p, nu },
        };
        let report = SolveReport {
            level: Level::R2Partial,
            psi: level2::psi2_partial(alpha, c2, gamma_p, nu)?,
            dpsi_dalpha: level2::dpsi2_partial_dalpha(alpha, c2, gamma_p, nu)?,
            point,
            residual_norm: out.norm,
            iterations: out.iterations,
            converged: out.converged,
            trace: Some(out.trace),
        };
        let done = report.converged;
        best = better(best, report);
        if done {
            break;
        }
    }
    finish(best, alpha)
}

fn vars2(alpha: f64, x: &[f64; 6]) -> Level2Vars {
    Level2Vars { alpha, c2: x[0], p2: x[1], q2: x[2], aux: AuxParams { gamma_q: x[3], gamma_p: x[4], nu: x[5] } }
}

/// Full second-level variables `(c2, p2, q2, gamma_q, gamma_p, nu)` from the
/// reduced ones `(p2, q2, gamma_p, nu)`.
fn expand2(x: &[f64]) -> Result<[f64; 6]> {
    let (gq, c2, _) = level2::closed_form_r2(x[0], x[1])?;
    if !(c2 > 0.0) {
        return Err(Error::OutOfDomain { what: "c2", value: c2 });
    }
    Ok([c2, x[0], x[1], gq, x[2], x[3]])
}

fn report2(
    alpha: f64,
    full: [f64; 6],
    rule: &QuadRule,
    iterations: usize,
    trace: Vec<TraceEntry>,
    cfg: &QuadConfig,
) -> Result<SolveReport> {
    let v = vars2(alpha, &full);
    let (psi, grad, dpsi_dalpha) = level2::eval2(&v, rule, true)?;
    let residual_norm = norm(&grad);
    Ok(SolveReport {
        level: Level::R2Full,
        point: v.to_point(),
        psi,
        residual_norm,
        dpsi_dalpha,
        iterations,
        converged: residual_norm < cfg.grad_tol,
        trace: Some(trace),
    })
}

fn solve_r2(alpha: f64, init: Option<&EvalPoint>, cfg: &QuadConfig) -> Result<SolveReport> {
    let rule = cached_rule(cfg.nodes_single)?;
    let mut seeds: Vec<[f64; 4]> = Vec::new();
    let mut base_nu = 0.05;
    if let Some(p) = init {
        base_nu = p.aux.nu.min(0.2);
        if p.lifting.r == 2 && p.lifting.p[0] > p.lifting.q[0] && p.lifting.q[0] > 0.0 {
            seeds.push([p.lifting.p[0], p.lifting.q[0], p.aux.gamma_p, p.aux.nu]);
        }
    }
    for p2 in [0.75, 0.6, 0.85] {
        for q2 in [0.2, 0.3, 0.1] {
            if let Ok((gq, _, _)) = level2::closed_form_r2(p2, q2) {
                seeds.push([p2, q2, 0.25 / gq, base_nu]);
            }
        }
    }
    let reduced = |x: &[f64]| -> Result<Vec<f64>> {
        let full = expand2(x)?;
        let (_, g, _) = level2::eval2(&vars2(alpha, &full), &rule, true)?;
        Ok(vec![g[0], g[1], g[4], g[5]])
    };
    let full_res = |x: &[f64]| -> Result<Vec<f64>> {
        let full: [f64; 6] = x.try_into().expect("six variables");
        Ok(level2::eval2(&vars2(alpha, &full), &rule, true)?.1.to_vec())
    };
    let mut best = None;
    for s in seeds {
        let Ok(out) = newton::solve(reduced, &s, newton_opts(cfg)) else { continue };
        let Ok(full) = expand2(&out.x) else { continue };
        let mut iterations = out.iterations;
        let mut trace = out.trace;
        let mut report = report2(alpha, full, &rule, iterations, trace.clone(), cfg)?;
        if out.converged && !report.converged {
            if let Ok(polish) = newton::solve(full_res, &full, newton_opts(cfg)) {
                iterations += polish.iterations;
                trace.extend(polish.trace);
                let x: [f64; 6] = polish.x.as_slice().try_into().expect("six variables");
                if let Ok(r) = report2(alpha, x, &rule, iterations, trace, cfg) {
                    report = r;
                }
            }
        }
        let done = report.converged;
        best = better(best, report);
        if done {
            break;
        }
    }
    finish(best, alpha)
}

fn vars3(alpha: f64, x: &[f64; 9]) -> Level3Vars {
    Level3Vars {
        alpha,
        c2: x[0],
        c3: x[1],
        p2: x[2],
        p3: x[3],
        q2: x[4],
        q3: x[5],
        aux: AuxParams { gamma_q: x[6], gamma_p: x[7], nu: x[8] },
    }
}

/// Full third-level variables in residual order from the reduced ones
/// `(p2, p3, q2, q3, gamma_p, nu)`.
fn expand3(x: &[f64]) -> Result<[f64; 9]> {
    let (gq, c2, c3, _) = level3::closed_form_r3(x[0], x[1], x[2], x[3])?;
    if !(c2 > 0.0 && c3 > 0.0) {
        return Err(Error::OutOfDomain { what: "c2, c3", value: c2.min(c3) });
    }
    Ok([c2, c3, x[0], x[1], x[2], x[3], gq, x[4], x[5]])
}

type Rules = (Arc<QuadRule>, Arc<QuadRule>);

fn report3(
    alpha: f64,
    full: [f64; 9],
    rules: &Rules,
    iterations: usize,
    trace: Vec<TraceEntry>,
    cfg: &QuadConfig,
) -> Result<SolveReport> {
    let v = vars3(alpha, &full);
    let (psi, grad, dpsi_dalpha, _) = level3::eval3(&v, &rules.0, &rules.1, true)?;
    let residual_norm = norm(&grad);
    let distinct = v.p2 - v.p3 > COLLAPSE_GAP && v.q2 - v.q3 > COLLAPSE_GAP;
    Ok(SolveReport {
        level: Level::R3,
        point: v.to_point(),
        psi,
        residual_norm,
        dpsi_dalpha,
        iterations,
        converged: residual_norm < cfg.grad_tol && distinct,
        trace: Some(trace),
    })
}

fn solve_r3(alpha: f64, init: Option<&EvalPoint>, cfg: &QuadConfig) -> Result<SolveReport> {
    let rules: Rules = (cached_rule(cfg.nodes_inner)?, cached_rule(cfg.nodes_outer)?);
    let mut seeds: Vec<[f64; 6]> = Vec::new();
    // (p, q, nu) of the second-level solution the grid is built around
    let mut base = None;
    if let Some(p) = init {
        let l = &p.lifting;
        if l.r == 3 && l.p[0] - l.p[1] > COLLAPSE_GAP && l.q[0] - l.q[1] > COLLAPSE_GAP {
            seeds.push([l.p[0], l.p[1], l.q[0], l.q[1], p.aux.gamma_p, p.aux.nu]);
        }
        if l.r >= 2 && l.p[0] > 0.0 {
            base = Some((l.p[l.r - 2], l.q[l.r - 2], p.aux.nu));
        }
    }
    let (bp, bq, bnu) = match base {
        Some(b) => b,
        None => {
            let r2 = solve_r2(alpha, init.filter(|p| p.lifting.r == 2), cfg)?;
            let l = &r2.point.lifting;
            (l.p[0], l.q[0], r2.point.aux.nu)
        }
    };
    for p2 in [0.95, 0.98, 0.9] {
        for q2 in [0.4, 0.3, 0.5] {
            let (p3, q3) = (bp.min(p2 - 0.05), bq.min(q2 - 0.05));
            if let Ok((gq, _, _, _)) = level3::closed_form_r3(p2, p3, q2, q3) {
                seeds.push([p2, p3, q2, q3, 0.25 / gq, 0.7 * bnu]);
            }
        }
    }
    let reduced = |x: &[f64]| -> Result<Vec<f64>> {
        let full = expand3(x)?;
        let (_, g, _, _) = level3::eval3(&vars3(alpha, &full), &rules.0, &rules.1, true)?;
        Ok(vec![g[0], g[1], g[2], g[3], g[7], g[8]])
    };
    let full_res = |x: &[f64]| -> Result<Vec<f64>> {
        let full: [f64; 9] = x.try_into().expect("nine variables");
        Ok(level3::eval3(&vars3(alpha, &full), &rules.0, &rules.1, true)?.1.to_vec())
    };
    let mut best = None;
    for s in seeds {
        let Ok(out) = newton::solve(reduced, &s, newton_opts(cfg)) else { continue };
        let Ok(full) = expand3(&out.x) else { continue };
        let mut iterations = out.iterations;
        let mut trace = out.trace;
        let mut report = report3(alpha, full, &rules, iterations, trace.clone(), cfg)?;
        if out.converged && !report.converged {
            if let Ok(polish) = newton::solve(full_res, &full, newton_opts(cfg)) {
                iterations += polish.iterations;
                trace.extend(polish.trace);
                let x: [f64; 9] = polish.x.as_slice().try_into().expect("nine variables");
                if let Ok(r) = report3(alpha, x, &rules, iterations, trace, cfg) {
                    report = r;
                }
            }
        }
        let done = report.converged;
        best = better(best, report);
        if done {
            break;
        }
    }
    finish(best, alpha)
}

/// Seed `alpha` and warm start for the capacity search of `level`.
fn capacity_seed(level: Level, cfg: &QuadConfig) -> Result<(f64, Option<EvalPoint>)> {
    let (lo, hi) = cfg.alpha_bracket;
    let below = match level {
        Level::R1 => return Ok((0.5 * (lo + hi), None)),
        Level::R2Partial => Level::R1,
        Level::R2Full => Level::R2Partial,
        Level::R3 => Level::R2Full,
    };
    match capacity(below, cfg) {
        Ok(r) => Ok((r.alpha_star, Some(r.point))),
        Err(_) => Ok((0.5 * (lo + hi), None)),
    }
}

/// Capacity `alpha*` of `level`: the root of `alpha -> psi(alpha, stationary point)`.
///
/// Safeguarded Newton on `alpha` using the envelope derivative, falling back
/// to bisection once a sign change is bracketed. Each trial re-solves
/// stationarity warm-started from the previous solution.
pub fn capacity(level: Level, cfg: &QuadConfig) -> Result<CapacityResult> {
    cfg.check()?;
    let (blo, bhi) = cfg.alpha_bracket;
    let (seed, mut warm) = capacity_seed(level, cfg)?;
    let mut alpha = seed.clamp(blo, bhi);
    let mut history = Vec::new();
    let (mut lo, mut hi): (Option<(f64, f64)>, Option<(f64, f64)>) = (None, None);
    for _ in 0..cfg.max_iters {
        let rep = solve_stationary(level, alpha, warm.as_ref(), cfg)?;
        if !rep.converged {
            return Err(Error::NotConverged { iterations: rep.iterations, residual: rep.residual_norm });
        }
        let psi = rep.psi;
        if psi < 0.0 {
            lo = Some((alpha, psi));
        } else {
            hi = Some((alpha, psi));
        }
        history.push(BracketStep { alpha, psi, lo: lo.map(|v| v.0), hi: hi.map(|v| v.0) });
        if psi.abs() < cfg.psi_tol {
            return Ok(CapacityResult {
                level,
                alpha_star: alpha,
                psi_residual: psi,
                grad_residual_norm: rep.residual_norm,
                point: rep.point,
                bracket_history: history,
            });
        }
        let newton = alpha - psi / rep.dpsi_dalpha;
        let next = match (lo, hi) {
            (Some((a, _)), Some((b, _))) => {
                if newton > a && newton < b && rep.dpsi_dalpha > 0.0 {
                    newton
                } else {
                    0.5 * (a + b)
                }
            }
            _ => {
                let step = if rep.dpsi_dalpha > 0.0 && newton.is_finite() {
                    (newton - alpha).clamp(-1.0, 1.0)
                } else if psi < 0.0 {
                    0.5
                } else {
                    -0.5
                };
                let edge = if psi < 0.0 { bhi } else { blo };
                if alpha == edge {
                    let other = if psi < 0.0 { blo } else { bhi };
                    let f_other = solve_stationary(level, other, None, cfg).map(|r| r.psi).unwrap_or(f64::NAN);
                    let (f_lo, f_hi) = if psi < 0.0 { (f_other, psi) } else { (psi, f_other) };
                    return Err(Error::Bracket { lo: blo, hi: bhi, f_lo, f_hi });
                }
                (alpha + step).clamp(blo, bhi)
            }
        };
        if let (Some((a, _)), Some((b, _))) = (lo, hi) {
            if (b - a).abs() < 1e-14 * alpha {
                return Err(Error::NotConverged { iterations: history.len(), residual: psi.abs() });
            }
        }
        warm = Some(EvalPoint { alpha: next, ..rep.point });
        alpha = next;
    }
    Err(Error::NotConverged { iterations: history.len(), residual: history.last().map_or(f64::NAN, |s| s.psi.abs()) })
}

/// Solves stationarity along `alphas`, each solve warm-started from the last
/// success. Failures are recorded and the sweep continues.
pub fn sweep(level: Level, alphas: &[f64], cfg: &QuadConfig) -> Result<Vec<SweepEntry>> {
    cfg.check()?;
    if alphas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidInput("sweep alphas must be sorted ascending".into()));
    }
    let mut warm: Option<EvalPoint> = None;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let report = solve_stationary(level, alpha, warm.as_ref(), cfg);
        if let Ok(r) = &report {
            if r.converged {
                warm = Some(r.point.clone());
            }
        }
        out.push(SweepEntry { alpha, report: report.map_err(|e| e.to_string()) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_stationary() {
        let r = solve_stationary(Level::R1, 7.6477, None, &QuadConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.point.aux.nu - 0.6304).abs() < 5e-4);
        assert_eq!(r.point.aux.gamma_q, 0.5);
    }

    #[test]
    fn partial_level_stationary() {
        let r = solve_stationary(Level::R2Partial, 7.4486, None, &QuadConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.point.lifting.c[0] - 1.3513).abs() < 2e-3);
    }

    #[test]
    fn rejects_unsorted_sweep() {
        assert!(sweep(Level::R1, &[5.0, 4.0], &QuadConfig::default()).is_err());
    }

    #[test]
    fn level_one_capacity() {
        let c = capacity(Level::R1, &QuadConfig::default()).unwrap();
        assert!((c.alpha_star - 7.6477).abs() < 1e-3);
        assert!(c.psi_residual.abs() < 1e-9);
    }

    #[test]
    fn bracket_without_root() {
        let cfg = QuadConfig { alpha_bracket: (3.0, 5.0), ..QuadConfig::default() };
        assert!(matches!(capacity(Level::R1, &cfg), Err(Error::Bracket { .. })));
    }
}
