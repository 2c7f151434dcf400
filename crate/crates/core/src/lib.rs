//! Multi-class logistic regression (a softmax layer trained with
//! cross-entropy) together with the second-order machinery needed to
//! reason about it: a matrix-free Hessian, the exact spectrum of the
//! per-sample curvature factor `diag(y) - y yᵀ`, strict-convexity
//! certification and fixed-step gradient descent rate bounds.
//!
//! Conventions: matrices follow the "columns are samples" layout.
//! `X` is `D×N`, targets `T` and outputs `Y` are `C×N`, and weights `W`
//! are `C×D`, so activations are `A = W X`.

pub mod certify;
pub mod convergence;
pub mod data_io;
pub mod error;
pub mod gradcheck;
pub mod hessian;
pub mod loss;
pub mod model;
pub mod softmax;
pub mod spectrum;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{center_columns, one_hot, CenteredWeights, Dataset, Weights};

/// Dense matrix type used throughout the crate (column-major).
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
