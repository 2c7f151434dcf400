//! The Hessian of the loss as a matrix-free symmetric operator on `C×D`
//! weight space:
//!
//! ```text
//! H(U) = Σₙ Q⁽ⁿ⁾ U x⁽ⁿ⁾ x⁽ⁿ⁾ᵀ,   Q⁽ⁿ⁾ = diag(y⁽ⁿ⁾) - y⁽ⁿ⁾ y⁽ⁿ⁾ᵀ
//! ```
//!
//! Its kernel is `{U : U X = 𝟙 cᵀ}`; on the zero-column-sum subspace it is
//! positive definite whenever `rank X = D`.

use crate::error::{Error, Result};
use crate::loss::activations;
use crate::model::{Dataset, Weights};
use crate::softmax::{d_sigma, softmax_columns};
use crate::{Matrix, Vector};

/// Size guard for [`HessianOperator::dense`].
pub const DENSE_LIMIT: usize = 2048;

/// Per-sample curvature factor `Q = diag(y) - y yᵀ`.
pub fn q_matrix(y: &Vector) -> Matrix {
    d_sigma(y)
}

/// Hessian of the loss anchored at a fixed weight matrix.
///
/// The softmax outputs at the anchor are computed once on construction.
#[derive(Debug, Clone)]
pub struct HessianOperator<'a> {
    x: &'a Matrix,
    y: Matrix,
}

/// Result of a kernel-membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTest {
    pub in_kernel: bool,
    /// `‖U X - 𝟙 cᵀ‖_F` with `c` the column means of `U X`.
    pub residual: f64,
    /// `‖U X‖_F`, the scale the residual is compared against.
    pub scale: f64,
}

impl<'a> HessianOperator<'a> {
    pub fn new(w: &Weights, data: &'a Dataset) -> Result<Self> {
        let y = softmax_columns(&activations(w, data)?)?;
        Ok(Self { x: data.x(), y })
    }

    /// Anchors the operator at explicit softmax outputs (one column per
    /// sample). Boundary probabilities are allowed.
    pub fn from_outputs(x: &'a Matrix, y: Matrix) -> Result<Self> {
        if y.ncols() != x.ncols() {
            return Err(Error::Dimension(format!(
                "outputs have {} columns, inputs {}",
                y.ncols(),
                x.ncols()
            )));
        }
        for (n, col) in y.column_iter().enumerate() {
            if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (col.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "output column {n} is not a probability vector"
                )));
            }
        }
        Ok(Self { x, y })
    }

    pub fn outputs(&self) -> &Matrix {
        &self.y
    }

    pub fn inputs(&self) -> &Matrix {
        self.x
    }

    pub fn classes(&self) -> usize {
        self.y.nrows()
    }

    pub fn features(&self) -> usize {
        self.x.nrows()
    }

    fn check(&self, u: &Matrix) -> Result<()> {
        if u.nrows() != self.classes() || u.ncols() != self.features() {
            return Err(Error::Dimension(format!(
                "direction is {}x{}, operator acts on {}x{}",
                u.nrows(),
                u.ncols(),
                self.classes(),
                self.features()
            )));
        }
        Ok(())
    }

    /// Columns `Q⁽ⁿ⁾ U x⁽ⁿ⁾` stacked into a `C×N` matrix.
    fn curvature_columns(&self, u: &Matrix) -> Matrix {
        let mut v = u * self.x;
        for (mut col, y) in v.column_iter_mut().zip(self.y.column_iter()) {
            let yv = y.dot(&col);
            for (vi, &yi) in col.iter_mut().zip(y.iter()) {
                *vi = yi * (*vi - yv);
            }
        }
        v
    }

    /// `H(U)` in `O(N C D)` without forming any `x xᵀ`.
    pub fn apply(&self, u: &Matrix) -> Result<Matrix> {
        self.check(u)?;
        Ok(self.curvature_columns(u) * self.x.transpose())
    }

    /// `D²L(W)(U, U) = Σₙ (U x⁽ⁿ⁾)ᵀ Q⁽ⁿ⁾ (U x⁽ⁿ⁾)`.
    pub fn quadratic_form(&self, u: &Matrix) -> Result<f64> {
        self.check(u)?;
        let v = u * self.x;
        Ok(v.column_iter()
            .zip(self.y.column_iter())
            .map(|(v, y)| {
                let yv = y.dot(&v);
                // Σ yᵢ (vᵢ - yᵀv)² equals vᵀ Q v and is a sum of non-negative terms
                v.iter().zip(y.iter()).map(|(&vi, &yi)| yi * (vi - yv).powi(2)).sum::<f64>()
            })
            .sum())
    }

    /// Tests the degeneracy condition `U X = 𝟙 cᵀ` relative to `‖U X‖_F`.
    pub fn kernel_test(&self, u: &Matrix, tol: f64) -> Result<KernelTest> {
        self.check(u)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        let ux = u * self.x;
        let scale = ux.norm();
        let residual = ux
            .column_iter()
            .map(|col| {
                let mean = col.mean();
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        Ok(KernelTest {
            in_kernel: residual <= tol * scale,
            residual,
            scale,
        })
    }

    /// Materializes the operator as a `(C·D)×(C·D)` matrix in the basis of
    /// column-major flattened `C×D` matrices.
    pub fn dense(&self) -> Result<Matrix> {
        let (c, d) = (self.classes(), self.features());
        let size = c * d;
        if size > DENSE_LIMIT {
            return Err(Error::TooLarge {
                size,
                limit: DENSE_LIMIT,
            });
        }
        let mut h = Matrix::zeros(size, size);
        let mut basis = Matrix::zeros(c, d);
        for k in 0..size {
            basis[k] = 1.0;
            let col = self.apply(&basis)?;
            h.set_column(k, &Vector::from_column_slice(col.as_slice()));
            basis[k] = 0.0;
        }
        Ok(h)
    }
}

/// Frobenius inner product `tr(Aᵀ B)`.
pub fn frobenius(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}
