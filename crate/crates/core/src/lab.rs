//! Finite-`n` Monte Carlo checks of the sign of the ground-state objective
//!
//! ```text
//! xi = min_{|x| = 1, |z|_0 < n} |A x - z|_2 / sqrt(n)
//! ```
//!
//! where `|z|_0` counts the positive entries of `z`. The minimizer over `x` is
//! a HEURISTIC (alternating support selection with projected descent on the
//! sphere), so every `xi_hat` is an upper estimate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold on `xi_hat` for calling an instance infeasible.
pub const POSITIVE_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub n: usize,
    /// Aspect ratio; the instance has `m = round(alpha n)` rows.
    pub alpha: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Descent steps per restart.
    pub iters: usize,
}

impl InstanceConfig {
    pub fn new(n: usize, alpha: f64, seed: u64) -> Self {
        InstanceConfig { n, alpha, seed, restarts: 10, iters: 400 }
    }

    pub fn m(&self) -> usize {
        (self.alpha * self.n as f64).round() as usize
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("n must be at least 2, got {}", self.n)));
        }
        if !self.alpha.is_finite() || self.m() < self.n {
            return Err(Error::InvalidInput(format!("need m >= n, got alpha = {}", self.alpha)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalResult {
    /// Best `tail_norm(A x) / sqrt(n)` over restarts.
    pub xi_hat: f64,
    pub per_restart: Vec<f64>,
    /// Indicator `xi_hat > threshold` for a single instance; the fraction of
    /// instances in a scan.
    pub positive_fraction: f64,
    /// False when some restart hit the step limit before settling.
    pub converged: bool,
}

/// Seeded `m x n` matrix of iid standard normals, filled row by row.
pub fn sample_instance(cfg: &InstanceConfig) -> Result<DMatrix<f64>> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (m, n) = (cfg.m(), cfg.n);
    let data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(DMatrix::from_row_slice(m, n, &data))
}

/// Indices of the `k` largest positive entries of `v`, lowest index first on ties.
fn top_positive(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `min_{|z|_0 < n} |v - z|_2`: negative entries are matched for free, the
/// `n - 1` largest positive ones are matched, and the remaining positive
/// entries are paid in full.
pub fn tail_norm(v: &[f64], n: usize) -> f64 {
    let keep = top_positive(v, n.saturating_sub(1));
    let mut kept = vec![false; v.len()];
    for i in keep {
        kept[i] = true;
    }
    v.iter().zip(&kept).filter(|(x, k)| **x > 0.0 && !**k).map(|(x, _)| x * x).sum::<f64>().sqrt()
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let nrm = v.norm();
    v / nrm
}

/// Right singular vector of the rows of `a` outside `keep` with the smallest
/// singular value.
fn smallest_right_singular(a: &DMatrix<f64>, keep: &[usize]) -> Option<DVector<f64>> {
    let mut kept = vec![false; a.nrows()];
    for &i in keep {
        kept[i] = true;
    }
    let rows: Vec<usize> = (0..a.nrows()).filter(|&i| !kept[i]).collect();
    let sub = a.select_rows(&rows);
    let svd = sub.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd.singular_values.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1))?;
    Some(vt.row(k).transpose())
}

struct Restart {
    value: f64,
    converged: bool,
}

fn objective(a: &DMatrix<f64>, x: &DVector<f64>, n: usize) -> (f64, DVector<f64>) {
    let v = a * x;
    (tail_norm(v.as_slice(), n), v)
}

/// One restart from `x0`: the support-restricted singular vector start, then
/// projected gradient descent on `tail_norm(A x)^2` over the unit sphere.
fn descend(a: &DMatrix<f64>, x0: DVector<f64>, n: usize, iters: usize) -> Restart {
    let v0 = a * &x0;
    let mut x = x0;
    if let Some(s) = smallest_right_singular(a, &top_positive(v0.as_slice(), n - 1)) {
        for cand in [s.clone(), -s] {
            if objective(a, &cand, n).0 < objective(a, &x, n).0 {
                x = cand;
            }
        }
    }
    let (mut val, mut v) = objective(a, &x, n);
    let mut eta = 1.0 / a.nrows() as f64;
    for _ in 0..iters {
        if val == 0.0 {
            return Restart { value: 0.0, converged: true };
        }
        let keep = top_positive(v.as_slice(), n - 1);
        let mut r = v.map(|t| t.max(0.0));
        for i in keep {
            r[i] = 0.0;
        }
        let g = a.tr_mul(&r);
        let g = &g - &x * x.dot(&g);
        let mut improved = false;
        for _ in 0..30 {
            let trial = unit(&x - &g * eta);
            let (tv, tvec) = objective(a, &trial, n);
            if tv < val {
                let rel = (val - tv) / val;
                x = trial;
                v = tvec;
                val = tv;
                eta *= 1.5;
                improved = rel > 1e-10;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            return Restart { value: val, converged: true };
        }
    }
    Restart { value: val, converged: val == 0.0 }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64 + 1);
    rng
}

/// Heuristic estimate of `xi` for the instance `a` built from `cfg`.
///
/// Restart `k` always draws its start from the same stream, so adding
/// restarts never worsens `xi_hat`.
pub fn min_xi(a: &DMatrix<f64>, cfg: &InstanceConfig) -> Result<EmpiricalResult> {
    cfg.check()?;
    if a.nrows() != cfg.m() || a.ncols() != cfg.n {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, config expects {}x{}",
            a.nrows(),
            a.ncols(),
            cfg.m(),
            cfg.n
        )));
    }
    let scale = (cfg.n as f64).sqrt();
    let mut per_restart = Vec::with_capacity(cfg.restarts);
    let mut converged = true;
    for k in 0..cfg.restarts {
        let mut rng = restart_rng(cfg.seed, k);
        let x0 = unit(DVector::from_fn(cfg.n, |_, _| rng.sample(StandardNormal)));
        let r = descend(a, x0, cfg.n, cfg.iters);
        converged &= r.converged;
        per_restart.push(r.value / scale);
    }
    let xi_hat = per_restart.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EmpiricalResult {
        xi_hat,
        positive_fraction: if xi_hat > POSITIVE_THRESHOLD { 1.0 } else { 0.0 },
        per_restart,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub restarts: usize,
    pub iters: usize,
    pub threshold: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { restarts: 10, iters: 400, threshold: POSITIVE_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub trials: usize,
    pub positive_fraction: f64,
    pub median_xi: f64,
    pub seed: u64,
    pub xi: Vec<f64>,
    /// Instances whose heuristic hit the step limit.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scan {
    pub rows: Vec<ScanRow>,
    /// Whether `positive_fraction` never decreases along the alpha grid.
    pub nondecreasing: bool,
}

/// Instance seed for trial `t` of a scan seeded with `seed` (splitmix64).
pub fn instance_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Fraction of `trials` instances with `xi_hat > threshold` at each alpha.
/// Trial `t` uses the same seed at every alpha.
pub fn transition_scan(n: usize, alphas: &[f64], trials: usize, seed: u64, opts: &ScanOptions) -> Result<Scan> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidInput("empty alpha grid".into()));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut xi = Vec::with_capacity(trials);
        let mut unconverged = 0;
        for t in 0..trials {
            let cfg =
                InstanceConfig { n, alpha, seed: instance_seed(seed, t), restarts: opts.restarts, iters: opts.iters };
            let a = sample_instance(&cfg)?;
            let r = min_xi(&a, &cfg)?;
            unconverged += usize::from(!r.converged);
            xi.push(r.xi_hat);
        }
        let positive = xi.iter().filter(|&&v| v > opts.threshold).count();
        rows.push(ScanRow {
            alpha,
            trials,
            positive_fraction: positive as f64 / trials as f64,
            median_xi: median(&xi),
            seed,
            xi,
            unconverged,
        });
    }
    let nondecreasing = rows.windows(2).all(|w| w[0].positive_fraction <= w[1].positive_fraction);
    Ok(Scan { rows, nondecreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_norm_counts_positive_entries() {
        let v = [3.0, -1.0, 0.5, 2.0];
        assert!((tail_norm(&v, 2) - (0.25f64 + 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(tail_norm(&[0.0; 5], 3), 0.0);
        assert_eq!(tail_norm(&[-1.0, -2.0, -3.0], 1), 0.0);
    }

    #[test]
    fn ties_prefer_lowest_index() {
        assert_eq!(top_positive(&[1.0, 2.0, 2.0, 1.0], 2), vec![1, 2]);
        assert_eq!(top_positive(&[1.0, 1.0, 1.0], 1), vec![0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = InstanceConfig::new(4, 2.0, 7);
        assert_eq!(sample_instance(&cfg).unwrap(), sample_instance(&cfg).unwrap());
        let other = InstanceConfig { seed: 8, ..cfg };
        assert_ne!(sample_instance(&cfg).unwrap(), sample_instance(&other).unwrap());
    }

    #[test]
    fn config_checks() {
        assert!(InstanceConfig::new(1, 3.0, 0).check().is_err());
        assert!(InstanceConfig::new(10, 0.5, 0).check().is_err());
        assert!(InstanceConfig { restarts: 0, ..InstanceConfig::new(10, 2.0, 0) }.check().is_err());
    }

    #[test]
    fn single_trial_scan_is_one_instance() {
        let opts = ScanOptions { restarts: 3, iters: 100, ..ScanOptions::default() };
        let scan = transition_scan(8, &[4.0], 1, 11, &opts).unwrap();
        let cfg = InstanceConfig { n: 8, alpha: 4.0, seed: instance_seed(11, 0), restarts: 3, iters: 100 };
        let r = min_xi(&sample_instance(&cfg).unwrap(), &cfg).unwrap();
        assert_eq!(scan.rows[0].xi, vec![r.xi_hat]);
    }
}
