//! Conjugate gradients for symmetric positive definite sparse systems.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl Default for CgSettings {
    fn default() -> Self {
        CgSettings {
            rel_tol: 1e-10,
            max_iters: 0,
            preconditioner: Preconditioner::None,
        }
    }
}

impl CgSettings {
    /// Iteration cap; zero means `10 · n`.
    pub fn iteration_cap(&self, n: usize) -> usize {
        if self.max_iters == 0 {
            10 * n.max(1)
        } else {
            self.max_iters
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖` of the returned iterate, recomputed explicitly.
    pub rel_residual: f64,
}

/// Solves `A x = b` in place, starting from the incoming `x`.
///
/// Converged when the true residual satisfies `‖b − Ax‖ ≤ rel_tol·‖b‖`.
/// A zero right-hand side returns `x = 0` immediately.
pub fn cg(a: &CsrMatrix, b: &[f64], x: &mut [f64], settings: &CgSettings) -> Result<CgOutcome> {
    let n = b.len();
    assert_eq!(a.nrows(), n);
    assert_eq!(x.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let target = settings.rel_tol * b_norm;
    let max_iters = settings.iteration_cap(n);
    let inv_diag: Option<Vec<f64>> = match settings.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(a.diagonal().iter().map(|d| 1.0 / d).collect()),
    };
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut r = vec![0.0; n];
    a.mul_vec_into(x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    loop {
        let res = norm(&r);
        if !res.is_finite() {
            return Err(Error::CgBreakdown { iterations });
        }
        if res <= target {
            // Guard against drift of the recursive residual.
            let true_res = residual_norm(a, b, x);
            if true_res <= target {
                return Ok(CgOutcome {
                    iterations,
                    rel_residual: true_res / b_norm,
                });
            }
            a.mul_vec_into(x, &mut r);
            r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if iterations >= max_iters {
            return Err(Error::CgNotConverged {
                iterations,
                residual: res / b_norm,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            if pap.is_finite() {
                return Err(Error::CgNotConverged {
                    iterations,
                    residual: res / b_norm,
                });
            }
            return Err(Error::CgBreakdown { iterations });
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        iterations += 1;
    }
}

pub(crate) fn residual_norm(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    ax.iter()
        .zip(b)
        .map(|(ax, b)| (b - ax) * (b - ax))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
