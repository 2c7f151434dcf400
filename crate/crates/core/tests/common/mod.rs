//! Reference implementations written with plain loops, independent of the
//! library's vectorized code, plus random instance generators.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Matrix = DMatrix<f64>;

pub fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random probability columns with strictly positive entries.
pub fn soft_targets(rng: &mut ChaCha8Rng, c: usize, n: usize) -> Matrix {
    let mut t = Matrix::from_fn(c, n, |_, _| rng.gen_range(0.05..1.0));
    for mut col in t.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    t
}

fn column_outputs(w: &Matrix, x: &Matrix, n: usize) -> (Vec<f64>, f64) {
    let c = w.nrows();
    let a: Vec<f64> = (0..c)
        .map(|i| (0..w.ncols()).map(|j| w[(i, j)] * x[(j, n)]).sum())
        .collect();
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    (a, lse)
}

/// `Σₙ Σᵢ tᵢ (lse(aₙ) − aᵢ)`.
pub fn naive_loss(w: &Matrix, x: &Matrix, t: &Matrix) -> f64 {
    let mut total = 0.0;
    for n in 0..x.ncols() {
        let (a, lse) = column_outputs(w, x, n);
        for i in 0..w.nrows() {
            total += t[(i, n)] * (lse - a[i]);
        }
    }
    total
}

/// `Σₙ (yₙ − tₙ) xₙᵀ`, entry by entry.
pub fn naive_gradient(w: &Matrix, x: &Matrix, t: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(w.nrows(), w.ncols());
    for n in 0..x.ncols() {
        let (a, lse) = column_outputs(w, x, n);
        for i in 0..w.nrows() {
            let y = (a[i] - lse).exp();
            for j in 0..w.ncols() {
                g[(i, j)] += (y - t[(i, n)]) * x[(j, n)];
            }
        }
    }
    g
}

pub fn naive_outputs(w: &Matrix, x: &Matrix) -> Matrix {
    let mut y = Matrix::zeros(w.nrows(), x.ncols());
    for n in 0..x.ncols() {
        let (a, lse) = column_outputs(w, x, n);
        for i in 0..w.nrows() {
            y[(i, n)] = (a[i] - lse).exp();
        }
    }
    y
}

pub fn fd_gradient(w: &Matrix, x: &Matrix, t: &Matrix, h: f64) -> Matrix {
    Matrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let mut p = w.clone();
        let mut m = w.clone();
        p[(i, j)] += h;
        m[(i, j)] -= h;
        (naive_loss(&p, x, t) - naive_loss(&m, x, t)) / (2.0 * h)
    })
}

pub fn fd_hessian_apply(w: &Matrix, x: &Matrix, t: &Matrix, u: &Matrix, h: f64) -> Matrix {
    (naive_gradient(&(w + u * h), x, t) - naive_gradient(&(w - u * h), x, t)) / (2.0 * h)
}

/// `diag(y) − y yᵀ`.
pub fn q_dense(y: &[f64]) -> Matrix {
    let c = y.len();
    Matrix::from_fn(c, c, |i, j| if i == j { y[i] - y[i] * y[i] } else { -y[i] * y[j] })
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

pub fn max_rel(a: &Matrix, reference: &Matrix) -> f64 {
    let scale = reference.amax();
    let diff = (a - reference).amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `Σ αₙ xₙ xₙᵀ` with `αₙ = 2 y₁ y₂`.
pub fn naive_m(y: &Matrix, x: &Matrix) -> (DVector<f64>, Matrix) {
    let d = x.nrows();
    let alpha = DVector::from_fn(x.ncols(), |n, _| 2.0 * y[(0, n)] * y[(1, n)]);
    let mut m = Matrix::zeros(d, d);
    for n in 0..x.ncols() {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += alpha[n] * x[(i, n)] * x[(j, n)];
            }
        }
    }
    (alpha, m)
}

pub fn condition(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    sv.max() / sv.min()
}

/// Synthetic 28×28 ten-class digit-like images: each class is a fixed set
/// of strokes, each sample a jittered and noisy copy. Returns pixel bytes
/// (`n·784`, row-major per image) and 0-based labels.
pub fn synthetic_digits(rng: &mut ChaCha8Rng, n: usize) -> (Vec<u8>, Vec<u8>) {
    const SIDE: i32 = 28;
    let templates: Vec<Vec<(i32, i32)>> = (0..10)
        .map(|k| {
            let mut t = class_rng(k);
            let mut pts = Vec::new();
            for _ in 0..3 {
                let (mut r, mut c) = (t.gen_range(6..22), t.gen_range(6..22));
                let (dr, dc) = (t.gen_range(-1..=1), t.gen_range(-1..=1));
                for _ in 0..10 {
                    pts.push((r, c));
                    r = (r + dr).clamp(3, 24);
                    c = (c + dc).clamp(3, 24);
                }
            }
            pts
        })
        .collect();
    let mut pixels = vec![0u8; n * 784];
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        // mildly unbalanced classes
        let k = if rng.gen_bool(0.05) { 1 } else { rng.gen_range(0..10) };
        labels.push(k as u8);
        let (sr, sc) = (rng.gen_range(-3..=3), rng.gen_range(-3..=3));
        let img = &mut pixels[s * 784..(s + 1) * 784];
        for &(r, c) in &templates[k] {
            for (br, bc) in [(0, 0), (1, 0), (0, 1)] {
                let (rr, cc) = (r + sr + br, c + sc + bc);
                if (0..SIDE).contains(&rr) && (0..SIDE).contains(&cc) && rng.gen_bool(0.6) {
                    img[(rr * SIDE + cc) as usize] = rng.gen_range(160..=255);
                }
            }
        }
        // a stroke borrowed from another class, then speckle
        let other = &templates[rng.gen_range(0..10)];
        let start = rng.gen_range(0..3) * 10;
        for &(r, c) in &other[start..start + 10] {
            let (rr, cc) = (r + sr, c + sc);
            if (0..SIDE).contains(&rr) && (0..SIDE).contains(&cc) {
                img[(rr * SIDE + cc) as usize] = rng.gen_range(100..=255);
            }
        }
        for _ in 0..60 {
            let p = rng.gen_range(0..784);
            img[p] = img[p].saturating_add(rng.gen_range(0..160));
        }
    }
    (pixels, labels)
}

fn class_rng(k: usize) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(1000 + k as u64)
}

pub fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(payload);
    b
}

pub fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

/// Exact determinant by expansion over column subsets (Laplace along rows,
/// memoized on the set of used columns).
pub fn exact_det(a: &[Vec<BigRational>]) -> BigRational {
    let n = a.len();
    let mut dp = vec![BigRational::zero(); 1 << n];
    dp[0] = BigRational::from_integer(1.into());
    for mask in 0usize..(1 << n) {
        if dp[mask].is_zero() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) != 0 {
                continue;
            }
            // sign from the number of used columns to the right of `col`
            let inversions = (mask >> col).count_ones();
            let term = &dp[mask] * &a[row][col];
            let next = mask | (1 << col);
            if inversions % 2 == 0 {
                dp[next] += term;
            } else {
                dp[next] -= term;
            }
        }
    }
    dp[(1 << n) - 1].clone()
}

/// `(det(X diag(α) Xᵀ), det X)`, both exact on the given floats.
pub fn exact_gram_det(x: &Matrix, alpha: &DVector<f64>) -> (f64, f64) {
    let d = x.nrows();
    let xr: Vec<Vec<BigRational>> = (0..d)
        .map(|i| (0..x.ncols()).map(|j| rational(x[(i, j)])).collect())
        .collect();
    let ar: Vec<BigRational> = alpha.iter().map(|&a| rational(a)).collect();
    let m: Vec<Vec<BigRational>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut acc = BigRational::zero();
                    for n in 0..x.ncols() {
                        acc += &xr[i][n] * &ar[n] * &xr[j][n];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    (
        exact_det(&m).to_f64().unwrap(),
        exact_det(&xr).to_f64().unwrap(),
    )
}
