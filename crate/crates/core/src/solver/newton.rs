//! Damped Newton (Levenberg–Marquardt) on a square or overdetermined
//! residual system with a forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual_norm: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the Gauss–Newton step taken at the start; `1` is undamped.
    pub damping: f64,
}

const MAX_REJECTIONS: usize = 16;
const BACKTRACKS: usize = 6;
const FD_REL_STEP: f64 = 1e-6;

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn jacobian<F>(f: &mut F, x: &[f64], r: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let m = r.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for k in 0..n {
        let h = FD_REL_STEP * x[k].abs().max(1e-2);
        probe[k] = x[k] + h;
        let plus = f(&probe);
        probe[k] = x[k] - h;
        let minus = f(&probe);
        probe[k] = x[k];
        match (plus, minus) {
            (Ok(a), Ok(b)) => (0..m).for_each(|i| jac[(i, k)] = (a[i] - b[i]) / (2.0 * h)),
            (Ok(a), Err(_)) => (0..m).for_each(|i| jac[(i, k)] = (a[i] - r[i]) / h),
            (Err(_), Ok(b)) => (0..m).for_each(|i| jac[(i, k)] = (r[i] - b[i]) / h),
            (Err(e), Err(_)) => return Err(e),
        }
    }
    Ok(jac)
}

/// Minimizes `|f(x)|` from `x0`. Evaluation errors at trial points count as
/// rejected steps; an error at `x0` itself is returned.
pub(crate) fn solve<F>(mut f: F, x0: &[f64], opts: Options) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut nrm = norm(&r);
    // A Marquardt factor of (1 - d) / d shrinks a diagonal step to d of its length.
    let mut lambda = (1.0 - opts.damping) / opts.damping;
    let mut trace = vec![TraceEntry { iteration: 0, residual_norm: nrm, lambda }];
    let mut iterations = 0;
    while iterations < opts.max_iters && !(nrm < opts.tol) {
        iterations += 1;
        let jac = jacobian(&mut f, &x, &r)?;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        // Gauss–Newton direction with backtracking first; it follows narrow
        // curved valleys that the damped steps crawl along.
        if let Some(dir) = jac.clone().lu().solve(&DVector::from_column_slice(&r)).filter(|_| jac.is_square()) {
            let mut t = 1.0;
            for _ in 0..BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a - t * b).collect();
                if let Ok(rt) = f(&trial) {
                    if norm(&rt) < nrm {
                        x = trial;
                        r = rt;
                        nrm = norm(&r);
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        for _ in 0..if accepted { 0 } else { MAX_REJECTIONS } {
            let mut m = a.clone();
            for k in 0..m.nrows() {
                let d = a[(k, k)].max(1e-300);
                m[(k, k)] += lambda * d;
            }
            let step = match m.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match m.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda = (lambda * 10.0).max(1e-6);
                        continue;
                    }
                },
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match f(&trial) {
                Ok(rt) if norm(&rt) < nrm => {
                    x = trial;
                    r = rt;
                    nrm = norm(&r);
                    lambda /= 3.0;
                    if lambda < 1e-12 {
                        lambda = 0.0;
                    }
                    accepted = true;
                    break;
                }
                _ => lambda = (lambda * 4.0).max(1e-6),
            }
        }
        trace.push(TraceEntry { iteration: iterations, residual_norm: nrm, lambda });
        if !accepted {
            break;
        }
    }
    Ok(Outcome { converged: nrm < opts.tol, x, norm: nrm, iterations, trace })
}
