//! Browser bindings for the demo page in `www/`.
//!
//! Three operations are exposed: the free energy along an alpha grid, the
//! inner minimizer profile for a given `nu`, and the capacity of a level.
//! The plain functions below do the work and are testable off-wasm; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use injcap::level1::fbar2;
use injcap::model::{phi_bar_z, Level, QuadConfig};
use injcap::solver::{capacity, sweep};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn parse_level(tag: &str) -> Result<Level, String> {
    match Level::from_tag(tag) {
        Some(Level::R3) => Err("level 3 takes seconds to minutes per point and is not offered in the browser".into()),
        Some(l) => Ok(l),
        None => Err(format!("unknown level '{tag}'")),
    }
}

/// Demo quadrature: coarser than the library default to keep the page responsive.
fn demo_config() -> QuadConfig {
    QuadConfig::profile("fast").expect("builtin profile")
}

/// `[alpha_0, psi_0, alpha_1, psi_1, ...]` on `steps` evenly spaced points;
/// `psi` is NaN where the stationarity solve failed.
pub fn psi_curve(level: &str, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    let level = parse_level(level)?;
    if !(lo > 0.0 && lo < hi) || !(2..=400).contains(&steps) {
        return Err(format!("need 0 < lo < hi and 2 <= steps <= 400, got ({lo}, {hi}, {steps})"));
    }
    let grid: Vec<f64> = (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect();
    let entries = sweep(level, &grid, &demo_config()).map_err(|e| e.to_string())?;
    Ok(entries
        .iter()
        .flat_map(|e| {
            let psi = match &e.report {
                Ok(r) if r.converged => r.psi,
                _ => f64::NAN,
            };
            [e.alpha, psi]
        })
        .collect())
}

/// `[u_0, phi_0, ...]` for the inner minimizer `phi_bar_z(u; nu)`, followed by
/// `fbar2(nu)` as the last element.
pub fn inner_profile(nu: f64, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, String> {
    if !(nu >= 0.0 && nu.is_finite()) || !(lo < hi) || !(2..=2000).contains(&steps) {
        return Err(format!("need nu >= 0, lo < hi and 2 <= steps <= 2000, got ({nu}, {lo}, {hi}, {steps})"));
    }
    let mut out = Vec::with_capacity(2 * steps + 1);
    for k in 0..steps {
        let u = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
        out.push(u);
        out.push(phi_bar_z(u, nu));
    }
    out.push(fbar2(nu));
    Ok(out)
}

#[derive(Serialize)]
struct CapacitySummary {
    level: &'static str,
    alpha_star: f64,
    p: Vec<f64>,
    q: Vec<f64>,
    c: Vec<f64>,
    gamma_q: f64,
    gamma_p: f64,
    nu: f64,
    psi_residual: f64,
    grad_residual_norm: f64,
    steps: usize,
}

/// Capacity of `level` as a JSON object.
pub fn capacity_summary(level: &str) -> Result<String, String> {
    let level = parse_level(level)?;
    let r = capacity(level, &demo_config()).map_err(|e| e.to_string())?;
    let l = &r.point.lifting;
    let s = CapacitySummary {
        level: level.tag(),
        alpha_star: r.alpha_star,
        p: l.p.clone(),
        q: l.q.clone(),
        c: l.c.clone(),
        gamma_q: r.point.aux.gamma_q,
        gamma_p: r.point.aux.gamma_p,
        nu: r.point.aux.nu,
        psi_residual: r.psi_residual,
        grad_residual_norm: r.grad_residual_norm,
        steps: r.bracket_history.len(),
    };
    serde_json::to_string(&s).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = psiCurve)]
pub fn psi_curve_js(level: &str, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    psi_curve(level, lo, hi, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = innerProfile)]
pub fn inner_profile_js(nu: f64, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    inner_profile(nu, lo, hi, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = capacity)]
pub fn capacity_js(level: &str) -> Result<String, JsError> {
    capacity_summary(level).map_err(|e| JsError::new(&e))
}
