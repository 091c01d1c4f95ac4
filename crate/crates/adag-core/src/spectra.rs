//! Covariance spectrum of estimated adjacency matrices across domains.
//!
//! Each d×d estimate is vectorized row-major; the sample covariance of those
//! d² vectors is eigendecomposed with cyclic Jacobi rotations. The dominant
//! eigenvectors, reshaped back to d×d, expose the low-dimensional structure
//! the estimates vary along (for heterogeneous corpora, the shared edges).

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Covariance spectrum over a set of adjacency estimates.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// d²×d² sample covariance of the vectorized estimates.
    pub cov: Matrix,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// All eigenvectors as columns, matching the eigenvalue order.
    pub vectors: Matrix,
    /// Leading eigenvectors reshaped to d×d.
    pub top_vectors: Vec<Matrix>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns.
pub fn jacobi_eigh(sym: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !sym.is_square() {
        return Err(Error::dim(
            "jacobi_eigh",
            format!("{}x{}", sym.rows(), sym.cols()),
            "square",
        ));
    }
    let n = sym.rows();
    let mut a = sym.clone();
    let mut v = Matrix::identity(n);
    let tol = 1e-12 * (1.0 + sym.frobenius_norm());

    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = c * apj - s * aqj;
                    a[(q, j)] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        // Fix the sign so the largest-magnitude entry is positive.
        let mut pivot = 0;
        for i in 1..n {
            if v[(i, src)].abs() > v[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if v[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[(i, src)];
        }
    }
    Ok((eigenvalues, vectors))
}

/// Sample covariance spectrum of ≥ 2 equally sized square estimates,
/// keeping the `top_m` leading eigenvectors.
pub fn spectra(a_hats: &[Matrix], top_m: usize) -> Result<SpectrumReport> {
    if a_hats.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "spectra needs at least 2 matrices, got {}",
            a_hats.len()
        )));
    }
    let d = a_hats[0].rows();
    for m in a_hats {
        if !m.is_square() || m.rows() != d {
            return Err(Error::dim(
                "spectra",
                format!("{}x{}", m.rows(), m.cols()),
                format!("{d}x{d}"),
            ));
        }
    }
    let dim = d * d;
    let count = a_hats.len() as f64;
    let mut mean = vec![0.0; dim];
    for m in a_hats {
        for (acc, &v) in mean.iter_mut().zip(m.data()) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= count;
    }
    let mut cov = Matrix::zeros(dim, dim);
    for m in a_hats {
        let centered: Vec<f64> = m.data().iter().zip(&mean).map(|(&v, &mu)| v - mu).collect();
        for i in 0..dim {
            if centered[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let scale = 1.0 / (count - 1.0);
    for v in cov.data_mut() {
        *v *= scale;
    }

    let (eigenvalues, vectors) = jacobi_eigh(&cov)?;
    let top_vectors = (0..top_m.min(dim))
        .map(|col| Matrix::from_fn(d, d, |i, j| vectors[(i * d + j, col)]))
        .collect();
    Ok(SpectrumReport {
        cov,
        eigenvalues,
        vectors,
        top_vectors,
    })
}
