//! Rate analysis for fixed-step gradient descent.
//!
//! On the invariant subspace `Z` of zero-column-sum matrices the Hessian is
//! positive definite (full-rank data), with extreme eigenvalues
//! `λ_min ≤ λ_max`. The map `W ↦ W - η∇L(W)` then linearizes to `I - ηH`,
//! whose spectral radius is minimized at `η* = 2/(λ_min + λ_max)` with value
//! `θ = (K - 1)/(K + 1)`, `K = λ_max/λ_min`.
//!
//! For two classes `Z = {ξ uᵀ}` with `ξ = (1, -1)/√2`, and the restricted
//! Hessian acts on `u` as `M = X diag(α) Xᵀ` with `αₙ = 2 y₁⁽ⁿ⁾ y₂⁽ⁿ⁾`.

use nalgebra::SymmetricEigen;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hessian::{HessianOperator, DENSE_LIMIT};
use crate::loss::activations;
use crate::model::{Dataset, Weights};
use crate::softmax::softmax_columns;
use crate::{Matrix, Vector};

/// Relative singular-value threshold for `rank X = D`.
pub const RANK_TOL: f64 = 1e-10;
/// Relative tolerance of the iterative extreme-eigenvalue estimate.
pub const LANCZOS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePlan {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Condition number `λ_max / λ_min`.
    pub k: f64,
    /// Optimal contraction factor `(K - 1)/(K + 1)`.
    pub theta: f64,
    /// `[(1 - θ)/λ_min, (1 + θ)/λ_max]`; a single point at the optimal `θ`.
    pub eta_window: (f64, f64),
    pub eta_optimal: f64,
}

pub fn plan(lambda_min: f64, lambda_max: f64) -> Result<ConvergencePlan> {
    if !(lambda_min > 0.0) || !lambda_min.is_finite() {
        return Err(Error::InvalidInput(format!(
            "λ_min = {lambda_min} is not positive: the loss is not strictly convex on Z"
        )));
    }
    if !(lambda_max >= lambda_min) || !lambda_max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "λ_max = {lambda_max} must be finite and at least λ_min = {lambda_min}"
        )));
    }
    let k = lambda_max / lambda_min;
    let theta = (k - 1.0) / (k + 1.0);
    let eta_optimal = 2.0 / (lambda_min + lambda_max);
    let lo = (1.0 - theta) / lambda_min;
    let hi = (1.0 + theta) / lambda_max;
    Ok(ConvergencePlan {
        lambda_min,
        lambda_max,
        k,
        theta,
        // both ends equal η* up to rounding; keep the window well-formed
        eta_window: (lo.min(eta_optimal), hi.max(eta_optimal)),
        eta_optimal,
    })
}

impl ConvergencePlan {
    /// Learning rates for which `I - ηH` has spectral radius at most `theta`
    /// on `Z`, or `None` when `theta` is below the optimum.
    pub fn window_for(&self, theta: f64) -> Option<(f64, f64)> {
        let lo = (1.0 - theta) / self.lambda_min;
        let hi = (1.0 + theta) / self.lambda_max;
        (lo <= hi).then_some((lo, hi))
    }

    /// Spectral radius of `I - ηH` restricted to `Z`.
    pub fn contraction_factor(&self, eta: f64) -> f64 {
        (1.0 - eta * self.lambda_min)
            .abs()
            .max((1.0 - eta * self.lambda_max).abs())
    }
}

/// The two-class reduction `H_Z ≅ M = X diag(α) Xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoClassReduction {
    pub alpha: Vector,
    pub m: Matrix,
    /// `y₁⁽ⁿ⁾ y₂⁽ⁿ⁾` per sample, kept for the determinant identity.
    products: Vector,
}

/// `ξ = (1, -1)/√2`.
pub fn xi() -> Vector {
    Vector::from_vec(vec![1.0, -1.0]) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn reduce_two_class(w: &Weights, data: &Dataset) -> Result<TwoClassReduction> {
    if data.classes() != 2 {
        return Err(Error::Unsupported(format!(
            "two-class reduction needs C = 2, got {}",
            data.classes()
        )));
    }
    let y = softmax_columns(&activations(w, data)?)?;
    Ok(reduce_outputs(data.x(), &y))
}

fn reduce_outputs(x: &Matrix, y: &Matrix) -> TwoClassReduction {
    let products = Vector::from_fn(y.ncols(), |n, _| y[(0, n)] * y[(1, n)]);
    let alpha = &products * 2.0;
    let mut scaled = x.clone();
    for (mut col, &a) in scaled.column_iter_mut().zip(alpha.iter()) {
        col *= a;
    }
    let m = &scaled * x.transpose();
    // exact symmetry
    let m = (&m + m.transpose()) * 0.5;
    TwoClassReduction { alpha, m, products }
}

impl TwoClassReduction {
    /// Embedding `u ↦ ξ uᵀ` of `ℝᴰ` into `Z`.
    pub fn embed(u: &Vector) -> Matrix {
        xi() * u.transpose()
    }

    /// `M u`.
    pub fn apply(&self, u: &Vector) -> Vector {
        &self.m * u
    }

    /// Eigenvalues of `M`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.m.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }
}

/// Both sides of `det M = 2ᴺ ∏ₙ y₁⁽ⁿ⁾ y₂⁽ⁿ⁾ det(X)²` for square `X`.
///
/// Both determinants are evaluated exactly in rational arithmetic on the
/// floating-point inputs, so `lhs` is not limited by the conditioning of
/// `M`; only the final conversions round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterminantCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl DeterminantCheck {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs()
    }
}

pub fn determinant_check(r: &TwoClassReduction, data: &Dataset) -> Result<DeterminantCheck> {
    let x = data.x();
    if x.nrows() != x.ncols() {
        return Err(Error::Unsupported(format!(
            "determinant identity needs N = D, got D = {}, N = {}",
            x.nrows(),
            x.ncols()
        )));
    }
    if r.m.nrows() != x.nrows() || r.alpha.len() != x.ncols() {
        return Err(Error::Dimension("reduction does not match dataset".into()));
    }
    let d = x.nrows();
    let xr: Vec<Vec<BigRational>> = (0..d)
        .map(|i| (0..d).map(|j| rational(x[(i, j)])).collect())
        .collect();
    let alpha: Vec<BigRational> = r.alpha.iter().map(|&a| rational(a)).collect();
    // M = X diag(α) Xᵀ, formed exactly
    let m: Vec<Vec<BigRational>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    (0..d).fold(BigRational::zero(), |acc, n| {
                        acc + &xr[i][n] * &alpha[n] * &xr[j][n]
                    })
                })
                .collect()
        })
        .collect();
    let lhs = exact_determinant(m).to_f64().unwrap_or(f64::NAN);
    let det_x = exact_determinant(xr).to_f64().unwrap_or(f64::NAN);
    let rhs = 2f64.powi(d as i32) * r.products.iter().product::<f64>() * det_x * det_x;
    Ok(DeterminantCheck { lhs, rhs })
}

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

/// Gaussian elimination over the rationals.
fn exact_determinant(mut a: Vec<Vec<BigRational>>) -> BigRational {
    let n = a.len();
    let mut det = BigRational::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return BigRational::zero();
        };
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        let pivot = a[k][k].clone();
        det *= &pivot;
        for i in k + 1..n {
            if a[i][k].is_zero() {
                continue;
            }
            let f = &a[i][k] / &pivot;
            for j in k..n {
                let delta = &f * &a[k][j];
                a[i][j] -= delta;
            }
        }
    }
    det
}

/// Singular values of `X`, descending. The `D` values are padded with
/// zeros when `N < D`.
pub fn singular_values(x: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = x.singular_values().iter().copied().collect();
    sv.resize(x.nrows().max(sv.len()), 0.0);
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(x.nrows());
    sv
}

/// `(σ_min, σ_max)` of `X` over its `D` singular values, failing unless
/// `σ_min > RANK_TOL · σ_max`.
pub fn require_full_rank(x: &Matrix) -> Result<(f64, f64)> {
    let sv = singular_values(x);
    let (sv_max, sv_min) = (sv[0], sv[sv.len() - 1]);
    if !(sv_min > RANK_TOL * sv_max) {
        return Err(Error::RankDeficient { sv_min, sv_max });
    }
    Ok((sv_min, sv_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionBound {
    pub k_exact: f64,
    /// `K(X)² · max α / min α`.
    pub k_bound: f64,
}

pub fn condition_bound(r: &TwoClassReduction, data: &Dataset) -> Result<ConditionBound> {
    let (sv_min, sv_max) = require_full_rank(data.x())?;
    let eig = r.eigenvalues();
    let k_exact = eig[eig.len() - 1] / eig[0];
    let a_max = r.alpha.max();
    let a_min = r.alpha.min();
    let kx = sv_max / sv_min;
    Ok(ConditionBound {
        k_exact,
        k_bound: kx * kx * a_max / a_min,
    })
}

/// Orthonormal basis of `𝟙⊥ ⊂ ℝᶜ` as the columns of a `C×(C-1)` matrix
/// (normalized Helmert contrasts).
pub fn zero_sum_basis(c: usize) -> Matrix {
    let mut v = Matrix::zeros(c, c.saturating_sub(1));
    for k in 1..c {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            v[(i, k - 1)] = 1.0 / norm;
        }
        v[(k, k - 1)] = -(k as f64) / norm;
    }
    v
}

/// Orthonormal basis of `Z` in column-major flattened coordinates:
/// `I_D ⊗ V` with `V` from [`zero_sum_basis`].
pub fn z_basis(c: usize, d: usize) -> Matrix {
    Matrix::identity(d, d).kronecker(&zero_sum_basis(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremeEigenvalues {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Extreme eigenvalues of the Hessian restricted to `Z`.
///
/// Two classes use the `D×D` reduction; otherwise the dense projected
/// operator is used up to the dense size guard and Lanczos beyond it.
pub fn extreme_eigenvalues_on_z(h: &HessianOperator) -> Result<ExtremeEigenvalues> {
    require_full_rank(h.inputs())?;
    let (c, d) = (h.classes(), h.features());
    if c == 2 {
        let r = reduce_outputs(h.inputs(), h.outputs());
        let eig = r.eigenvalues();
        return Ok(ExtremeEigenvalues {
            lambda_min: eig[0],
            lambda_max: eig[eig.len() - 1],
        });
    }
    if c * d <= DENSE_LIMIT {
        projected_dense_extremes(h)
    } else {
        lanczos_extremes(h, LANCZOS_TOL, 600, 0)
    }
}

/// Eigenvalues of `Bᵀ H B` with `B` an orthonormal basis of `Z`, ascending.
pub fn projected_dense_spectrum(h: &HessianOperator) -> Result<Vec<f64>> {
    let dense = h.dense()?;
    let b = z_basis(h.classes(), h.features());
    let hz = b.transpose() * dense * &b;
    let hz = (&hz + hz.transpose()) * 0.5;
    let mut eig: Vec<f64> = hz.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn projected_dense_extremes(h: &HessianOperator) -> Result<ExtremeEigenvalues> {
    let eig = projected_dense_spectrum(h)?;
    Ok(ExtremeEigenvalues {
        lambda_min: eig[0],
        lambda_max: eig[eig.len() - 1],
    })
}

fn project_to_z(u: &mut Matrix) {
    for mut col in u.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Lanczos with full reorthogonalization on `Z`, stopping once both extreme
/// Ritz values have residual `≤ tol · |ritz value|`.
pub fn lanczos_extremes(
    h: &HessianOperator,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<ExtremeEigenvalues> {
    let (c, d) = (h.classes(), h.features());
    let dim = (c - 1) * d;
    let max_iter = max_iter.min(dim).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut q = Matrix::from_fn(c, d, |_, _| StandardNormal.sample(&mut rng));
    project_to_z(&mut q);
    q /= q.norm();

    let mut basis: Vec<Matrix> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    for k in 0..max_iter {
        let mut r = h.apply(&basis[k])?;
        project_to_z(&mut r);
        let a = r.dot(&basis[k]);
        alphas.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let coef = r.dot(v);
                r -= v * coef;
            }
        }
        let beta = r.norm();

        let m = alphas.len();
        let check = m == max_iter || beta == 0.0 || m % 5 == 0;
        if check {
            let t = Matrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (imin, imax) = argmin_argmax(eig.eigenvalues.as_slice());
            let lmin = eig.eigenvalues[imin];
            let lmax = eig.eigenvalues[imax];
            let res_min = (beta * eig.eigenvectors[(m - 1, imin)]).abs();
            let res_max = (beta * eig.eigenvectors[(m - 1, imax)]).abs();
            let converged = res_min <= tol * lmin.abs() && res_max <= tol * lmax.abs();
            if converged || beta == 0.0 || m == dim {
                return Ok(ExtremeEigenvalues {
                    lambda_min: lmin,
                    lambda_max: lmax,
                });
            }
            if m == max_iter {
                return Err(Error::NotConverged(format!(
                    "Lanczos residuals {res_min:e}, {res_max:e} after {m} steps"
                )));
            }
        }
        betas.push(beta);
        basis.push(r / beta);
    }
    unreachable!("loop returns on its final iteration")
}

fn argmin_argmax(v: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[lo] {
            lo = i;
        }
        if x > v[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Convenience: plan anchored at `w`.
pub fn plan_at(w: &Weights, data: &Dataset) -> Result<ConvergencePlan> {
    let h = HessianOperator::new(w, data)?;
    let e = extreme_eigenvalues_on_z(&h)?;
    plan(e.lambda_min, e.lambda_max)
}
