//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Convergence threshold on the Frobenius norm of the off-diagonal part.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

/// Components with magnitude below this are treated as zero when fixing
/// eigenvector signs.
const SIGN_EPSILON: f64 = 1e-9;

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are ascending; `eigenvectors` holds the matching unit
/// eigenvectors as columns, each with its first nonzero component positive.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j] * a[i * n + j];
            }
        }
    }
    sum.sqrt()
}

pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    let mut a: Vec<f64> = matrix.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= OFF_DIAGONAL_TOLERANCE {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off_norm = off_diagonal_norm(&a, n);
        if off_norm > OFF_DIAGONAL_TOLERANCE {
            return Err(Error::EigenNoConvergence {
                sweeps: MAX_SWEEPS,
                off_norm,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));

    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let sign = (0..n)
            .map(|k| v[k * n + src])
            .find(|x| x.abs() > SIGN_EPSILON)
            .map_or(1.0, f64::signum);
        for k in 0..n {
            eigenvectors[[k, col]] = sign * v[k * n + src];
        }
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}
