//! Cross-entropy loss and its vectorized gradient `∇L(W) = -(T - Y) Xᵀ`.

use crate::error::{Error, Result};
use crate::model::{Dataset, Weights};
use crate::softmax::{log_sum_exp, softmax_columns};
use crate::Matrix;

/// Activations `A = W X`.
pub fn activations(w: &Weights, data: &Dataset) -> Result<Matrix> {
    data.check_weights(w.as_matrix())?;
    let a = w.as_matrix() * data.x();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("activations overflowed".into()));
    }
    Ok(a)
}

/// Loss from precomputed activations: `Σₙ t⁽ⁿ⁾ᵀ ρ(a⁽ⁿ⁾)`.
///
/// Samples are accumulated in ascending order.
pub(crate) fn loss_from_activations(a: &Matrix, t: &Matrix) -> f64 {
    let c = a.nrows();
    a.as_slice()
        .chunks_exact(c)
        .zip(t.as_slice().chunks_exact(c))
        .map(|(a, t)| {
            let lse = log_sum_exp(a);
            t.iter()
                .zip(a)
                .filter(|(&ti, _)| ti != 0.0)
                .map(|(&ti, &ai)| ti * (lse - ai))
                .sum::<f64>()
        })
        .sum()
}

/// Cross-entropy loss `-Σₙ Σᵢ tᵢ⁽ⁿ⁾ log yᵢ⁽ⁿ⁾`, in nats.
pub fn loss(w: &Weights, data: &Dataset) -> Result<f64> {
    let a = activations(w, data)?;
    Ok(loss_from_activations(&a, data.t()))
}

/// Gradient of the loss with respect to `W` (a `C×D` matrix).
pub fn gradient(w: &Weights, data: &Dataset) -> Result<Matrix> {
    let y = softmax_columns(&activations(w, data)?)?;
    Ok((y - data.t()) * data.x().transpose())
}

/// `(T - Y) Xᵀ`, the uncentered sample covariance of errors and inputs.
/// `W` is a critical point exactly when this vanishes.
pub fn error_covariance(w: &Weights, data: &Dataset) -> Result<Matrix> {
    let y = softmax_columns(&activations(w, data)?)?;
    Ok((data.t() - y) * data.x().transpose())
}

/// Loss, gradient and outputs from a single pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Matrix,
    pub outputs: Matrix,
}

pub fn evaluate(w: &Weights, data: &Dataset) -> Result<Evaluation> {
    let a = activations(w, data)?;
    let outputs = softmax_columns(&a)?;
    let loss = loss_from_activations(&a, data.t());
    let gradient = (&outputs - data.t()) * data.x().transpose();
    Ok(Evaluation {
        loss,
        gradient,
        outputs,
    })
}
