//! Small dense symmetric solves for the regression steps.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solution of a symmetric positive (semi-)definite system.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Array1<f64>,
    /// Ridge added to the diagonal, when the plain factorization failed.
    pub jitter: Option<f64>,
}

fn cholesky(a: &Array2<f64>, pivot_tol: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > pivot_tol) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

fn substitute(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[[i, k]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[[k, i]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Solves `a x = b` by Cholesky. If a pivot falls below a trace-relative
/// threshold, retries with `λ I` added, starting at λ = 1e−8 · trace / n and
/// growing tenfold per retry.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<SpdSolution> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n || b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "cannot solve a {}x{} system with a right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression system".into()));
    }
    let scale = {
        let t = a.diag().sum() / n as f64;
        if t > 0.0 {
            t
        } else {
            1.0
        }
    };
    let pivot_tol = 1e-13 * scale;
    if let Some(l) = cholesky(a, pivot_tol) {
        return Ok(SpdSolution {
            x: substitute(&l, b),
            jitter: None,
        });
    }
    let mut lambda = 1e-8 * scale;
    for _ in 0..12 {
        let mut shifted = a.clone();
        shifted.diag_mut().mapv_inplace(|d| d + lambda);
        if let Some(l) = cholesky(&shifted, pivot_tol) {
            return Ok(SpdSolution {
                x: substitute(&l, b),
                jitter: Some(lambda),
            });
        }
        lambda *= 10.0;
    }
    Err(Error::NonFinite("regression system is not positive semi-definite".into()))
}
