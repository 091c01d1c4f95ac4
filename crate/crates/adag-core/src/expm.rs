//! Matrix exponential and the smooth acyclicity constraint
//! `h(A) = tr(e^{A∘A}) − d`.
//!
//! The exponential uses scaling-and-squaring: the input is scaled by `2^s`
//! until its max-norm drops below 0.5, a Taylor series of order 18 is summed,
//! and the result is squared `s` times. At the scaled norm the order-18 tail
//! is far below f64 resolution.
//!
//! Entries saturate at ±1e30 during the squaring stage. Below that threshold
//! the result is exact to series accuracy; above it the constraint and its
//! gradient stay finite with the correct sign, so an optimizer that wanders
//! into a wildly infeasible region sees a steep wall instead of Inf/NaN.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAYLOR_ORDER: usize = 18;
const SCALING_THRESHOLD: f64 = 0.5;
const SATURATION: f64 = 1e30;

/// Constraint value and its closed-form gradient with respect to `A`.
#[derive(Debug, Clone)]
pub struct AcyclicityResult {
    /// `tr(e^{A∘A}) − d`, clamped at zero against roundoff. Zero exactly when
    /// the support of `A` is acyclic.
    pub value: f64,
    /// `(e^{A∘A})^T ∘ 2A`.
    pub grad: Matrix,
}

/// Matrix exponential `e^M` by scaling-and-squaring.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim(
            "expm",
            format!("{}x{}", m.rows(), m.cols()),
            "square",
        ));
    }
    let d = m.rows();
    let norm = m.max_abs();
    if !norm.is_finite() {
        return Err(Error::NonFinite("expm input".to_string()));
    }
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm >= SCALING_THRESHOLD {
        scaled_norm /= 2.0;
        squarings += 1;
    }
    let scaled = m.scale(0.5f64.powi(squarings as i32));

    let mut sum = Matrix::identity(d);
    let mut term = Matrix::identity(d);
    for order in 1..=TAYLOR_ORDER {
        term = term.matmul(&scaled)?.scale(1.0 / order as f64);
        sum.add_assign(&term)?;
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum)?;
        for v in sum.data_mut() {
            *v = v.clamp(-SATURATION, SATURATION);
        }
    }
    Ok(sum)
}

/// Trace of `e^M`, together with the full exponential for gradient use.
pub fn expm_trace(m: &Matrix) -> Result<(f64, Matrix)> {
    let e = expm(m)?;
    let tr = e.trace()?;
    Ok((tr, e))
}

/// Smooth acyclicity constraint of a weighted adjacency matrix.
///
/// The gradient is the NOTEARS closed form rather than a differentiation of
/// the squaring recursion; callers inject it into a tape as the upstream
/// adjoint on the node holding `A`.
pub fn acyclicity(a: &Matrix) -> Result<AcyclicityResult> {
    if !a.is_square() {
        return Err(Error::dim(
            "acyclicity",
            format!("{}x{}", a.rows(), a.cols()),
            "square",
        ));
    }
    let d = a.rows();
    let squared = a.hadamard(a)?;
    let (tr, e) = expm_trace(&squared)?;
    let value = (tr - d as f64).max(0.0);
    let grad = Matrix::from_fn(d, d, |i, j| e[(j, i)] * 2.0 * a[(i, j)]);
    Ok(AcyclicityResult { value, grad })
}
