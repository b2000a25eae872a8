//! Central finite differences with a one-sided fallback at domain edges.

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub grad: Vec<f64>,
    /// Coordinates where a central difference left the domain and a
    /// second-order one-sided difference was used instead.
    pub one_sided: Vec<usize>,
}

/// Central differences of `f` at `x` with absolute step `step`.
///
/// A coordinate whose central stencil fails falls back to a three-point
/// one-sided stencil on whichever side evaluates; if neither does, the
/// error of the forward attempt is returned.
pub fn fd_gradient<F>(f: F, x: &[f64], step: f64) -> Result<FdGradient>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut one_sided = Vec::new();
    let mut probe = x.to_vec();
    let mut at = |k: usize, t: f64| -> Result<f64> {
        probe[k] = x[k] + t;
        let v = f(&probe);
        probe[k] = x[k];
        v
    };
    let mut f0 = None;
    for k in 0..x.len() {
        match (at(k, step), at(k, -step)) {
            (Ok(fp), Ok(fm)) => grad.push((fp - fm) / (2.0 * step)),
            _ => {
                let base = match f0 {
                    Some(v) => v,
                    None => {
                        let v = f(x)?;
                        f0 = Some(v);
                        v
                    }
                };
                let forward = at(k, step).and_then(|f1| Ok((f1, at(k, 2.0 * step)?)));
                let d = match forward {
                    Ok((f1, f2)) => (-3.0 * base + 4.0 * f1 - f2) / (2.0 * step),
                    Err(e) => {
                        let f1 = at(k, -step).map_err(|_| e.clone())?;
                        let f2 = at(k, -2.0 * step).map_err(|_| e)?;
                        (3.0 * base - 4.0 * f1 + f2) / (2.0 * step)
                    }
                };
                grad.push(d);
                one_sided.push(k);
            }
        }
    }
    Ok(FdGradient { grad, one_sided })
}
