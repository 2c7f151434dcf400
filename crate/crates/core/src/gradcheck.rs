//! Finite-difference checks for the gradient and the Hessian operator.
//!
//! Errors are measured in the max norm relative to the reference:
//! `max |a - b| / max |b|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::hessian::HessianOperator;
use crate::loss::{gradient, loss};
use crate::model::{Dataset, Weights};
use crate::softmax::softmax_columns;
use crate::Matrix;

pub const GRADIENT_STEP: f64 = 1e-5;
pub const HESSIAN_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-5;
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn relative_error(a: &Matrix, reference: &Matrix) -> f64 {
    let scale = reference.amax();
    let diff = (a - reference).amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of the loss with respect to every weight entry.
pub fn numerical_gradient(w: &Weights, data: &Dataset, h: f64) -> Result<Matrix> {
    let base = w.as_matrix();
    let mut fd = Matrix::zeros(base.nrows(), base.ncols());
    for k in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let lp = loss(&Weights::new(plus)?, data)?;
        let lm = loss(&Weights::new(minus)?, data)?;
        fd[k] = (lp - lm) / (2.0 * h);
    }
    Ok(fd)
}

/// Central differences of the gradient along `u`.
pub fn numerical_hessian_apply(w: &Weights, data: &Dataset, u: &Matrix, h: f64) -> Result<Matrix> {
    let gp = gradient(&Weights::new(w.as_matrix() + u * h)?, data)?;
    let gm = gradient(&Weights::new(w.as_matrix() - u * h)?, data)?;
    Ok((gp - gm) / (2.0 * h))
}

/// Sizes for random instances; each is drawn uniformly from `1..=max`
/// (classes from `2..=max`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceSizes {
    pub max_classes: usize,
    pub max_features: usize,
    pub max_samples: usize,
}

impl Default for InstanceSizes {
    fn default() -> Self {
        Self {
            max_classes: 5,
            max_features: 7,
            max_samples: 10,
        }
    }
}

/// A random problem with standard-normal weights and inputs and soft
/// targets.
pub fn random_instance(rng: &mut ChaCha8Rng, c: usize, d: usize, n: usize) -> (Weights, Dataset) {
    let mut normal = |r: usize, cols: usize| Matrix::from_fn(r, cols, |_, _| StandardNormal.sample(&mut *rng));
    let w = normal(c, d);
    let x = normal(d, n);
    let t = softmax_columns(&normal(c, n)).expect("finite draws");
    (
        Weights::new(w).expect("finite draws"),
        Dataset::new(x, t).expect("valid random dataset"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckSummary {
    pub instances: usize,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    /// `max |⟨H U, V⟩ - ⟨U, H V⟩| / (‖U‖ ‖V‖ ‖H‖)` over the instances,
    /// with `‖H‖` estimated by `max(‖H U‖/‖U‖, ‖H V‖/‖V‖)`.
    pub max_symmetry_error: f64,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.max_gradient_error <= GRADIENT_TOL
            && self.max_hessian_error <= HESSIAN_TOL
            && self.max_symmetry_error <= SYMMETRY_TOL
    }
}

/// Runs the gradient and Hessian-vector checks on `instances` random
/// problems. `grad` is the gradient under test.
pub fn run_suite<G>(seed: u64, instances: usize, sizes: InstanceSizes, grad: G) -> Result<CheckSummary>
where
    G: Fn(&Weights, &Dataset) -> Result<Matrix>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = CheckSummary {
        instances,
        max_gradient_error: 0.0,
        max_hessian_error: 0.0,
        max_symmetry_error: 0.0,
    };
    for _ in 0..instances {
        let c = rng.gen_range(2..=sizes.max_classes.max(2));
        let d = rng.gen_range(1..=sizes.max_features.max(1));
        let n = rng.gen_range(1..=sizes.max_samples.max(1));
        let (w, data) = random_instance(&mut rng, c, d, n);

        let g = grad(&w, &data)?;
        let fd = numerical_gradient(&w, &data, GRADIENT_STEP)?;
        summary.max_gradient_error = summary.max_gradient_error.max(relative_error(&g, &fd));

        let u = Matrix::from_fn(c, d, |_, _| StandardNormal.sample(&mut rng));
        let v = Matrix::from_fn(c, d, |_, _| StandardNormal.sample(&mut rng));
        let h = HessianOperator::new(&w, &data)?;
        let hu = h.apply(&u)?;
        let fd = numerical_hessian_apply(&w, &data, &u, HESSIAN_STEP)?;
        summary.max_hessian_error = summary.max_hessian_error.max(relative_error(&hu, &fd));

        let hv = h.apply(&v)?;
        let norm_h = (hu.norm() / u.norm()).max(hv.norm() / v.norm());
        let asym = (hu.dot(&v) - u.dot(&hv)).abs();
        let scale = u.norm() * v.norm() * norm_h;
        if scale > 0.0 {
            summary.max_symmetry_error = summary.max_symmetry_error.max(asym / scale);
        }
    }
    Ok(summary)
}
