//! Stable softmax `σ`, the negative log-softmax `ρ = -log ∘ σ`, and their
//! Jacobians.
//!
//! Both maps subtract `max(a)` before exponentiating, so any finite input
//! is safe regardless of magnitude.

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

fn check_finite<'a>(a: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if a.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite activation".into()));
    }
    Ok(())
}

fn max_of<'a>(a: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log Σ exp(aᵢ)` computed with max-subtraction.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = max_of(a);
    m + a.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_into(a: &[f64], out: &mut [f64]) {
    let m = max_of(a);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(a) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(a: &Vector) -> Result<Vector> {
    check_finite(a.iter())?;
    let mut y = Vector::zeros(a.len());
    softmax_into(a.as_slice(), y.as_mut_slice());
    Ok(y)
}

/// Columnwise softmax of a `C×N` activation matrix.
pub fn softmax_columns(a: &Matrix) -> Result<Matrix> {
    check_finite(a.iter())?;
    let c = a.nrows();
    let mut y = Matrix::zeros(c, a.ncols());
    for (src, dst) in a
        .as_slice()
        .chunks_exact(c.max(1))
        .zip(y.as_mut_slice().chunks_exact_mut(c.max(1)))
    {
        softmax_into(src, dst);
    }
    Ok(y)
}

/// `ρ(a) = -a + logsumexp(a)·𝟙`, i.e. `-log σ(a)` without forming `log σ`.
pub fn rho(a: &Vector) -> Result<Vector> {
    check_finite(a.iter())?;
    let lse = log_sum_exp(a.as_slice());
    Ok(a.map(|v| lse - v))
}

/// `Dσ = diag(y) - y yᵀ`. Boundary outputs (entries exactly 0 or 1) are
/// accepted.
pub fn d_sigma(y: &Vector) -> Matrix {
    let mut q = -(y * y.transpose());
    for (i, &v) in y.iter().enumerate() {
        q[(i, i)] += v;
    }
    q
}

/// `Dρ = -I + 𝟙 yᵀ`.
pub fn d_rho(y: &Vector) -> Matrix {
    let c = y.len();
    let mut m = Matrix::from_fn(c, c, |_, j| y[j]);
    for i in 0..c {
        m[(i, i)] -= 1.0;
    }
    m
}
