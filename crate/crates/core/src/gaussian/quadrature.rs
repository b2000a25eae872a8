//! Gauss–Hermite rules normalized for expectations over N(0, 1).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_NODES: usize = 256;

/// `pi^(-1/4)`
const PI_M4: f64 = 0.751_125_544_464_942_5;
const NEWTON_EPS: f64 = 1e-14;
const NEWTON_MAX_ITERS: usize = 100;

/// Nodes and weights with `sum(w_i f(x_i)) ~ E[f(U)]`, `U ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Equal-weight antithetic Monte Carlo sample: `pairs` draws and their
    /// negations, from a ChaCha stream seeded with `seed`.
    pub fn antithetic(pairs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let x: f64 = StandardNormal.sample(&mut rng);
            nodes.push(x);
            nodes.push(-x);
        }
        let w = 1.0 / nodes.len() as f64;
        QuadRule { weights: vec![w; nodes.len()], nodes }
    }

    /// The degenerate one-point rule at the mean.
    pub fn point_mass() -> Self {
        QuadRule { nodes: vec![0.0], weights: vec![1.0] }
    }
}

/// Builds the `n`-point Gauss–Hermite rule for the standard normal.
///
/// Roots of the physicists' Hermite polynomial start from the eigenvalues of
/// the symmetric Jacobi matrix, are polished by Newton's method on the
/// orthonormal three-term recurrence, then mapped through `x = sqrt(2) t`
/// with weights divided by `sqrt(pi)`.
pub fn gauss_hermite(n: usize) -> Result<QuadRule> {
    if n == 0 || n > MAX_NODES {
        return Err(Error::InvalidInput(format!("Gauss-Hermite node count must lie in 1..={MAX_NODES}, got {n}")));
    }
    let jacobi =
        DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    let half = n / 2;
    let mut t = vec![0.0; n];
    let mut w = vec![0.0; n];
    // Polish the nonnegative half and mirror it.
    for i in 0..n.div_ceil(2) {
        let mut z = if n % 2 == 1 && i == half { 0.0 } else { roots[n - 1 - i].abs() };
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, dp) = hermite_orthonormal(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() <= NEWTON_EPS * z.abs().max(1.0) {
                break;
            }
        }
        let (_, dp) = hermite_orthonormal(n, z);
        let wi = 2.0 / (dp * dp);
        t[n - 1 - i] = z;
        t[i] = -z;
        w[n - 1 - i] = wi;
        w[i] = wi;
    }
    if n % 2 == 1 {
        t[half] = 0.0;
    }
    let total: f64 = w.iter().sum();
    let nodes = t.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|v| v / total).collect();
    Ok(QuadRule { nodes, weights })
}

/// Shared, lazily built Gauss–Hermite rules.
pub fn cached_rule(n: usize) -> Result<Arc<QuadRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&n) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(gauss_hermite(n)?);
    cache.lock().unwrap_or_else(|e| e.into_inner()).insert(n, rule.clone());
    Ok(rule)
}

/// Value of the orthonormal Hermite polynomial of degree `n` and its
/// derivative, for the weight `exp(-t^2)`.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI_M4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// `sum_i w_i f(x_i)`, summed left to right in node order.
///
/// A non-finite integrand value aborts with the offending node.
pub fn expect_gaussian<F>(f: F, rule: &QuadRule) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut acc = 0.0;
    for (x, w) in rule.iter() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "integrand", at: x, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}
