//! Datasets, weight matrices and the zero-column-sum representative.


use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Tolerance on the column sums of the target matrix.
pub const TARGET_SUM_TOL: f64 = 1e-12;

/// A training set: inputs `X` (`D×N`, one sample per column) and targets
/// `T` (`C×N`, one probability vector per column).
///
/// Soft labels are accepted; one-hot targets are the special case where
/// every column is a standard basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    t: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, t: Matrix) -> Result<Self> {
        if x.ncols() != t.ncols() {
            return Err(Error::Dimension(format!(
                "inputs have {} samples but targets have {}",
                x.ncols(),
                t.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("dataset must contain at least one sample".into()));
        }
        if t.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {}",
                t.nrows()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite input entry at flat index {pos}"
            )));
        }
        for (n, col) in t.column_iter().enumerate() {
            if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidInput(format!(
                    "target column {n} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > TARGET_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "target column {n} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { x, t })
    }

    /// Builds a dataset from 1-based class labels.
    pub fn from_labels(x: Matrix, labels: &[usize], classes: usize) -> Result<Self> {
        let t = one_hot(labels, classes)?;
        Self::new(x, t)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    /// Feature dimension `D`.
    pub fn features(&self) -> usize {
        self.x.nrows()
    }

    /// Class count `C`.
    pub fn classes(&self) -> usize {
        self.t.nrows()
    }

    /// Sample count `N`.
    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    /// Keeps the first `n` samples.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.samples());
        Self::new(self.x.columns(0, n).into_owned(), self.t.columns(0, n).into_owned())
    }

    /// Returns a copy with a constant-1 feature row appended.
    pub fn with_bias(&self) -> Self {
        Self {
            x: crate::data_io::add_bias_row(&self.x),
            t: self.t.clone(),
        }
    }

    pub(crate) fn check_weights(&self, w: &Matrix) -> Result<()> {
        if w.nrows() != self.classes() || w.ncols() != self.features() {
            return Err(Error::Dimension(format!(
                "weights are {}x{} but the dataset needs {}x{}",
                w.nrows(),
                w.ncols(),
                self.classes(),
                self.features()
            )));
        }
        Ok(())
    }
}

/// A `C×D` weight matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Matrix);

impl Weights {
    pub fn new(w: Matrix) -> Result<Self> {
        if let Some(pos) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite weight at flat index {pos}"
            )));
        }
        Ok(Self(w))
    }

    pub fn zeros(classes: usize, features: usize) -> Self {
        Self(Matrix::zeros(classes, features))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn features(&self) -> usize {
        self.0.ncols()
    }

    /// `W + 𝟙 cᵀ`: adds `shift[j]` to every entry of column `j`.
    pub fn shifted(&self, shift: &Vector) -> Result<Self> {
        if shift.len() != self.features() {
            return Err(Error::Dimension(format!(
                "shift has length {} but weights have {} columns",
                shift.len(),
                self.features()
            )));
        }
        let mut w = self.0.clone();
        for (mut col, &s) in w.column_iter_mut().zip(shift.iter()) {
            col.add_scalar_mut(s);
        }
        Self::new(w)
    }

    /// Largest absolute column sum, i.e. the distance of `𝟙ᵀW` from zero.
    pub fn max_abs_column_sum(&self) -> f64 {
        self.0
            .column_iter()
            .map(|c| c.sum().abs())
            .fold(0.0, f64::max)
    }
}

/// A weight matrix whose columns each sum to zero: the canonical member of
/// its shift-equivalence class `W + 𝟙 cᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredWeights(Matrix);

impl CenteredWeights {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_weights(self) -> Weights {
        Weights(self.0)
    }
}

impl From<CenteredWeights> for Weights {
    fn from(w: CenteredWeights) -> Self {
        w.into_weights()
    }
}

/// Subtracts the mean from every column.
///
/// A column whose sum is already at the rounding level of its entries is
/// left untouched, which makes the map exactly idempotent.
pub fn center_columns(w: &Weights) -> CenteredWeights {
    let mut out = w.0.clone();
    for mut col in out.column_iter_mut() {
        let c = col.len() as f64;
        if sum_is_negligible(col.as_slice()) {
            continue;
        }
        let mean = col.sum() / c;
        col.add_scalar_mut(-mean);
        // second pass absorbs the rounding error of the first mean
        if !sum_is_negligible(col.as_slice()) {
            let residual = col.sum() / c;
            col.add_scalar_mut(-residual);
        }
    }
    CenteredWeights(out)
}

fn sum_is_negligible(col: &[f64]) -> bool {
    let len = col.len() as f64;
    let abs: f64 = col.iter().map(|v| v.abs()).sum();
    let sum: f64 = col.iter().sum();
    sum.abs() <= 4.0 * len * f64::EPSILON * abs
}

/// One-hot encodes 1-based class labels into a `C×N` target matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut t = Matrix::zeros(classes, labels.len());
    for (index, &label) in labels.iter().enumerate() {
        if label == 0 || label > classes {
            return Err(Error::InvalidLabel {
                index,
                label,
                classes,
            });
        }
        t[(label - 1, index)] = 1.0;
    }
    Ok(t)
}
