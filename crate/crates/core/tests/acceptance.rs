//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits nonzero if any failed.
//!
//! Criterion 8 uses real MNIST files when `MNIST_DIR` points at a directory
//! holding the four uncompressed IDX files; otherwise it generates a
//! synthetic stand-in with the same layout.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softreg::convergence::{determinant_check, reduce_two_class, xi};
use softreg::data_io::{
    images_to_matrix, load_idx_dataset, matrix_to_images, IdxFile, PixelScale, IMAGES_MAGIC,
    LABELS_MAGIC,
};
use softreg::hessian::{frobenius, HessianOperator};
use softreg::loss::{gradient, loss};
use softreg::softmax::softmax_columns;
use softreg::spectrum::{analyze_q, EigenKind};
use softreg::trainer::{self, BbMode, TrainConfig};
use softreg::{center_columns, Dataset, Weights};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 8] = [
        ("gradient correctness", Some(Duration::from_secs(5)), gradient_correctness),
        ("hessian operator", None, hessian_operator),
        ("psd and kernel", None, psd_and_kernel),
        ("spectrum of Q", None, spectrum_of_q),
        ("two-class reduction", None, two_class_reduction),
        ("convergence rate", Some(Duration::from_secs(30)), convergence_rate),
        ("invariance", None, invariance),
        ("mnist smoke", Some(Duration::from_secs(120)), mnist_smoke),
    ];
    let mut failures = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = started.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(o) => (o.passed, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        if let Some(limit) = limit {
            if elapsed > *limit {
                passed = false;
                detail.push_str(&format!("; over time limit {limit:?}"));
            }
        }
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {} {}: {} ({:.2} s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            name,
            detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (c, d, n) = (rng.gen_range(2..=5), rng.gen_range(2..=7), rng.gen_range(1..=10));
        let w = normal(&mut rng, c, d);
        let x = normal(&mut rng, d, n);
        let t = soft_targets(&mut rng, c, n);
        let data = Dataset::new(x.clone(), t.clone()).unwrap();
        let g = gradient(&Weights::new(w.clone()).unwrap(), &data).unwrap();
        worst = worst.max(max_rel(&g, &fd_gradient(&w, &x, &t, 1e-5)));
    }
    outcome(worst <= 1e-6, format!("max rel err {worst:.2e} (limit 1e-6)"))
}

fn hessian_operator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut fd_err, mut sym_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let (c, d, n) = (rng.gen_range(2..=5), rng.gen_range(2..=7), rng.gen_range(1..=10));
        let w = normal(&mut rng, c, d);
        let x = normal(&mut rng, d, n);
        let t = soft_targets(&mut rng, c, n);
        let data = Dataset::new(x.clone(), t.clone()).unwrap();
        let weights = Weights::new(w.clone()).unwrap();
        let h = HessianOperator::new(&weights, &data).unwrap();
        let (u, v) = (normal(&mut rng, c, d), normal(&mut rng, c, d));
        let hu = h.apply(&u).unwrap();
        let hv = h.apply(&v).unwrap();
        fd_err = fd_err.max(max_rel(&hu, &fd_hessian_apply(&w, &x, &t, &u, 1e-5)));
        let scale = frobenius(&hu, &v).abs().max(frobenius(&u, &hv).abs()).max(f64::MIN_POSITIVE);
        sym_err = sym_err.max((frobenius(&hu, &v) - frobenius(&u, &hv)).abs() / scale);
    }
    outcome(
        fd_err <= 1e-5 && sym_err <= 1e-10,
        format!("fd rel err {fd_err:.2e} (limit 1e-5), symmetry rel err {sym_err:.2e} (limit 1e-10)"),
    )
}

fn psd_and_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (c, d, n) = (4, 5, 12);
    let x = normal(&mut rng, d, n);
    let data = Dataset::new(x.clone(), soft_targets(&mut rng, c, n)).unwrap();
    let w = Weights::new(normal(&mut rng, c, d)).unwrap();
    let h = HessianOperator::new(&w, &data).unwrap();
    let xnorm2: f64 = x.norm_squared();
    let rel = |u: &Matrix| h.quadratic_form(u).unwrap() / (u.norm_squared() * xnorm2);

    // generic directions: nonnegative, and positive since U X ≠ 𝟙cᵀ
    let mut min_form = f64::INFINITY;
    let mut min_generic_rel = f64::INFINITY;
    for _ in 0..1000 {
        let u = normal(&mut rng, c, d);
        min_form = min_form.min(h.quadratic_form(&u).unwrap());
        min_generic_rel = min_generic_rel.min(rel(&u));
    }

    // kernel: U = 𝟙 c̃ᵀ gives U X = 𝟙 (Xᵀc̃)ᵀ
    let mut max_kernel_rel: f64 = 0.0;
    for _ in 0..100 {
        let shift = DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0));
        let u = Matrix::from_fn(c, d, |_, j| shift[j]);
        max_kernel_rel = max_kernel_rel.max(rel(&u).abs());
    }
    // rank-deficient X: the kernel also holds e vᵀ with vᵀX = 0
    let mut xd = normal(&mut rng, d, n);
    xd.row_mut(2).fill(0.0);
    let dd = Dataset::new(xd.clone(), soft_targets(&mut rng, c, n)).unwrap();
    let hd = HessianOperator::new(&w, &dd).unwrap();
    for _ in 0..100 {
        let shift = DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0));
        let mut u = Matrix::from_fn(c, d, |_, j| shift[j]);
        let e = normal(&mut rng, c, 1);
        let e_mean = e.mean();
        for i in 0..c {
            u[(i, 2)] += e[i] - e_mean;
        }
        let r = hd.quadratic_form(&u).unwrap() / (u.norm_squared() * xd.norm_squared());
        max_kernel_rel = max_kernel_rel.max(r.abs());
    }

    // full rank and U ∈ Z: strictly positive
    let mut z_min = f64::INFINITY;
    for _ in 0..100 {
        let u = center_columns(&Weights::new(normal(&mut rng, c, d)).unwrap());
        z_min = z_min.min(h.quadratic_form(u.as_matrix()).unwrap());
    }

    let ok = min_form >= -1e-10 && max_kernel_rel <= 1e-12 && min_generic_rel > 1e-12 && z_min > 0.0;
    outcome(
        ok,
        format!(
            "min form {min_form:.2e}, kernel rel {max_kernel_rel:.2e} (limit 1e-12), \
             min generic rel {min_generic_rel:.2e}, min on Z {z_min:.2e}"
        ),
    )
}

fn random_probability(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = rng.gen_range(2..=9);
    let mut v: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
    match rng.gen_range(0..4) {
        0 => {}
        1 => {
            // duplicates
            let k = rng.gen_range(2..=c);
            let val = v[0];
            for e in v.iter_mut().take(k) {
                *e = val;
            }
        }
        2 => {
            // zeros, keeping at least one positive
            for e in v.iter_mut().skip(1) {
                if rng.gen_bool(0.4) {
                    *e = 0.0;
                }
            }
        }
        _ => {
            for e in v.iter_mut().skip(1) {
                match rng.gen_range(0..3) {
                    0 => *e = 0.0,
                    1 => *e = 0.25,
                    _ => {}
                }
            }
        }
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|e| e / s).collect()
}

fn spectrum_of_q() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst, mut bad_zero, mut bad_bracket, mut with_dups, mut with_zeros) = (0.0f64, 0, 0, 0, 0);
    for _ in 0..200 {
        let y = random_probability(&mut rng);
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        let positive: Vec<f64> = y.iter().copied().filter(|&v| v > 0.0).collect();
        let mut sorted = positive.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < positive.len() {
            with_dups += 1;
        }
        if zeros > 0 {
            with_zeros += 1;
        }

        let report = analyze_q(&y).unwrap();
        let got = report.expanded();
        let want = sym_eigenvalues(&q_dense(&y));
        let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(if got.len() == want.len() { diff } else { f64::INFINITY });
        if report.zero_multiplicity() != 1 + zeros {
            bad_zero += 1;
        }
        for e in &report.eigenvalues {
            if e.kind == EigenKind::InterlacedRoot && !e.degenerate {
                let (lo, hi) = e.bracket.unwrap();
                if !(lo < e.value && e.value < hi) {
                    bad_bracket += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-10 && bad_zero == 0 && bad_bracket == 0,
        format!(
            "max |delta| {worst:.2e} (limit 1e-10), zero-multiplicity mismatches {bad_zero}, \
             bracket violations {bad_bracket}; {with_dups} vectors with duplicates, {with_zeros} with zeros"
        ),
    )
}

fn two_class_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    let (d, n) = (4, 9);
    let x = normal(&mut rng, d, n);
    let data = Dataset::new(x.clone(), soft_targets(&mut rng, 2, n)).unwrap();
    let w = Weights::new(normal(&mut rng, 2, d)).unwrap();
    let h = HessianOperator::new(&w, &data).unwrap();
    let y = naive_outputs(w.as_matrix(), &x);
    let (_, m) = naive_m(&y, &x);
    let xi_v = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
    let mut intertwine: f64 = 0.0;
    for _ in 0..100 {
        let u = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
        let lhs = h.apply(&(&xi_v * u.transpose())).unwrap();
        let rhs = &xi_v * (&m * &u).transpose();
        intertwine = intertwine.max((lhs - &rhs).amax() / rhs.amax());
    }
    let lib_xi = xi();
    intertwine = intertwine.max((lib_xi - &xi_v).amax());

    let mut det_err: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.gen_range(1..=8);
        let x = normal(&mut rng, k, k);
        let data = Dataset::new(x.clone(), soft_targets(&mut rng, 2, k)).unwrap();
        let w = Weights::new(normal(&mut rng, 2, k) * 0.5).unwrap();
        let y = naive_outputs(w.as_matrix(), &x);
        let (alpha, _) = naive_m(&y, &x);
        let (det_m, det_x) = exact_gram_det(&x, &alpha);
        let prod: f64 = (0..k).map(|i| y[(0, i)] * y[(1, i)]).product();
        let expected = 2f64.powi(k as i32) * prod * det_x * det_x;
        det_err = det_err.max((det_m - expected).abs() / expected.abs());
        // the library's own check agrees
        let r = reduce_two_class(&w, &data).unwrap();
        det_err = det_err.max(determinant_check(&r, &data).unwrap().relative_error());
    }

    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..50 {
        let d = rng.gen_range(1..=6);
        let n = d + rng.gen_range(0..6);
        let x = normal(&mut rng, d, n);
        let w = normal(&mut rng, 2, d);
        let y = naive_outputs(&w, &x);
        let (alpha, m) = naive_m(&y, &x);
        let k_m = condition(&m);
        let k_bound = condition(&x.clone()).powi(2) * alpha.max() / alpha.min();
        tightest = tightest.min(k_bound / k_m);
        if k_m > k_bound * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    outcome(
        intertwine <= 1e-12 && det_err <= 1e-10 && violations == 0,
        format!(
            "intertwining rel err {intertwine:.2e} (limit 1e-12), det rel err {det_err:.2e} (limit 1e-10), \
             bound violations {violations}, min bound/K {tightest:.3}"
        ),
    )
}

/// Plain fixed-step gradient descent using the reference gradient.
fn descend(w: &Matrix, x: &Matrix, t: &Matrix, eta: f64, steps: usize, mut visit: impl FnMut(&Matrix)) -> Matrix {
    let mut w = w.clone();
    for _ in 0..steps {
        w -= naive_gradient(&w, x, t) * eta;
        visit(&w);
    }
    w
}

fn tail_ratio(errors: &[f64]) -> f64 {
    let usable: Vec<f64> = errors.iter().copied().take_while(|&e| e > 1e-9).collect();
    let ratios: Vec<f64> = usable.windows(2).map(|p| p[1] / p[0]).collect();
    let tail = &ratios[ratios.len().saturating_sub(20)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn convergence_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (d, n) = (3, 30);
    let x = normal(&mut rng, d, n);
    let w0 = normal(&mut rng, 2, d) * 0.7;
    let t = softmax_columns(&(&w0 * &x)).unwrap();

    // oracle minimizer: long small-step descent from zero
    let y0 = naive_outputs(&Matrix::zeros(2, d), &x);
    let (_, m0) = naive_m(&y0, &x);
    let small_eta = 0.5 / sym_eigenvalues(&m0).last().unwrap();
    let w_hat = descend(&Matrix::zeros(2, d), &x, &t, small_eta, 100_000, |_| {});
    let oracle_gap = (&w_hat - center_columns(&Weights::new(w0.clone()).unwrap()).as_matrix()).amax();

    // curvature at the minimizer, from the reference M
    let (_, m) = naive_m(&naive_outputs(&w_hat, &x), &x);
    let eig = sym_eigenvalues(&m);
    let (lmin, lmax) = (eig[0], *eig.last().unwrap());
    let k = lmax / lmin;
    let theta = (k - 1.0) / (k + 1.0);
    let eta_star = 2.0 / (lmin + lmax);

    // the library plan agrees
    let data = Dataset::new(x.clone(), t.clone()).unwrap();
    let plan = softreg::convergence::plan_at(&Weights::new(w_hat.clone()).unwrap(), &data).unwrap();
    let plan_err = (plan.theta - theta).abs().max((plan.eta_optimal - eta_star).abs() / eta_star);

    let start = {
        let p = center_columns(&Weights::new(normal(&mut rng, 2, d)).unwrap()).into_weights().into_matrix();
        let scale = 1e-3 / p.norm();
        &w_hat + p * scale
    };
    let errors_at = |eta: f64, steps: usize| {
        let mut errors = vec![(&start - &w_hat).norm()];
        descend(&start, &x, &t, eta, steps, |w| errors.push((w - &w_hat).norm()));
        errors
    };

    let observed = tail_ratio(&errors_at(eta_star, 400));

    // twice the upper end of the window: the step overshoots
    let big = errors_at(2.0 * eta_star, 30);
    let big_ratio = big.windows(2).map(|p| p[1] / p[0]).sum::<f64>() / (big.len() - 1) as f64;
    let diverged = big.last().unwrap() > &big[0] || big_ratio > theta + 0.05;
    // half the lower end: slower than θ
    let slow = tail_ratio(&errors_at(0.5 * eta_star, 400));
    let degraded = slow > theta + 0.05;

    let ok = oracle_gap < 1e-8 && plan_err < 1e-6 && (observed - theta).abs() <= 0.05 && diverged && degraded;
    outcome(
        ok,
        format!(
            "K {k:.3}, theta {theta:.4}, observed {observed:.4} (tol 0.05), 2x eta ratio {big_ratio:.3}, \
             eta/2 ratio {slow:.4}, oracle gap {oracle_gap:.1e}, plan err {plan_err:.1e}"
        ),
    )
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut loss_err, mut grad_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let (c, d, n) = (rng.gen_range(2..=5), rng.gen_range(2..=7), rng.gen_range(1..=10));
        let data = Dataset::new(normal(&mut rng, d, n), soft_targets(&mut rng, c, n)).unwrap();
        let w = Weights::new(normal(&mut rng, c, d)).unwrap();
        let shift = DVector::from_fn(d, |_, _| rng.gen_range(-5.0..5.0));
        let ws = w.shifted(&shift).unwrap();
        let (l0, l1) = (loss(&w, &data).unwrap(), loss(&ws, &data).unwrap());
        loss_err = loss_err.max((l0 - l1).abs() / l0.abs().max(1.0));
        let (g0, g1) = (gradient(&w, &data).unwrap(), gradient(&ws, &data).unwrap());
        grad_err = grad_err.max((g0 - &g1).amax() / g1.amax().max(1.0));
    }

    let mut max_col: f64 = 0.0;
    for (mode, eta) in [(BbMode::Off, 0.05), (BbMode::Bb1, 0.01), (BbMode::Bb2, 0.01)] {
        let data = Dataset::new(normal(&mut rng, 6, 40), soft_targets(&mut rng, 4, 40)).unwrap();
        let cfg = TrainConfig {
            eta,
            epochs: 300,
            bb_mode: mode,
            center_every: 1,
            init_scale: 1.0,
            log_every: 1,
            ..TrainConfig::default()
        };
        let (w, trace) = trainer::train(&data, &cfg).unwrap();
        for r in &trace.records {
            max_col = max_col.max(r.max_abs_column_sum);
        }
        max_col = max_col.max(w.max_abs_column_sum());
    }
    outcome(
        loss_err <= 1e-10 && grad_err <= 1e-10 && max_col <= 1e-8,
        format!("loss shift err {loss_err:.2e}, gradient shift err {grad_err:.2e} (limit 1e-10), max column sum {max_col:.2e} (limit 1e-8)"),
    )
}

struct IdxSet {
    train_images: PathBuf,
    train_labels: PathBuf,
    test_images: PathBuf,
    test_labels: PathBuf,
    source: String,
    _dir: Option<tempfile::TempDir>,
}

fn find(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

fn mnist_files() -> IdxSet {
    if let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) {
        let files = (
            find(&dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"]),
            find(&dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"]),
            find(&dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"]),
            find(&dir, &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"]),
        );
        if let (Some(a), Some(b), Some(c), Some(d)) = files {
            return IdxSet {
                train_images: a,
                train_labels: b,
                test_images: c,
                test_labels: d,
                source: format!("MNIST from {}", dir.display()),
                _dir: None,
            };
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut write = |name: &str, n: usize| {
        let (pixels, labels) = synthetic_digits(&mut rng, n);
        let img = tmp.path().join(format!("{name}-images-idx3-ubyte"));
        let lab = tmp.path().join(format!("{name}-labels-idx1-ubyte"));
        std::fs::write(&img, idx_bytes(IMAGES_MAGIC, &[n as u32, 28, 28], &pixels)).unwrap();
        std::fs::write(&lab, idx_bytes(LABELS_MAGIC, &[n as u32], &labels)).unwrap();
        (img, lab)
    };
    let (a, b) = write("train", 12_000);
    let (c, d) = write("t10k", 2_000);
    IdxSet {
        train_images: a,
        train_labels: b,
        test_images: c,
        test_labels: d,
        source: "synthetic stand-in (MNIST_DIR not set)".into(),
        _dir: Some(tmp),
    }
}

fn mnist_smoke() -> Outcome {
    let files = mnist_files();

    // byte-identical round trips, raw and through the feature matrix
    let mut round_trip = true;
    for path in [&files.train_images, &files.train_labels, &files.test_images, &files.test_labels] {
        let bytes = std::fs::read(path).unwrap();
        round_trip &= IdxFile::parse(&bytes).unwrap().to_bytes() == bytes;
    }
    let test_bytes = std::fs::read(&files.test_images).unwrap();
    let parsed = IdxFile::parse(&test_bytes).unwrap();
    let x = images_to_matrix(&parsed, PixelScale::Unit).unwrap();
    let dims = &parsed.header.dims;
    round_trip &= matrix_to_images(&x, dims[1], dims[2], PixelScale::Unit).unwrap().to_bytes() == test_bytes;

    let train = load_idx_dataset(&files.train_images, &files.train_labels, 10, PixelScale::Unit)
        .unwrap()
        .truncated(10_000)
        .unwrap()
        .with_bias();
    let test = load_idx_dataset(&files.test_images, &files.test_labels, 10, PixelScale::Unit)
        .unwrap()
        .with_bias();

    let cfg = TrainConfig {
        eta: 1e-6,
        epochs: 100,
        bb_mode: BbMode::Bb2,
        log_every: 10,
        ..TrainConfig::default()
    };
    let (w, trace) = trainer::train(&train, &cfg).unwrap();
    let losses: Vec<f64> = trace.records.iter().map(|r| r.loss).collect();
    let decreasing = losses.windows(2).all(|p| p[1] < p[0]);

    let perf = trainer::evaluate(&w, &test).unwrap();
    let mut counts = [0usize; 10];
    for col in test.t().column_iter() {
        counts[trainer::argmax(col.as_slice())] += 1;
    }
    let baseline = *counts.iter().max().unwrap() as f64 / test.samples() as f64;

    outcome(
        round_trip && decreasing && perf.accuracy > baseline,
        format!(
            "{}; {} logged losses {:.4e} -> {:.4e} strictly decreasing: {decreasing}; \
             test accuracy {:.4} vs majority {:.4}; round trip {round_trip}",
            files.source,
            losses.len(),
            losses[0],
            losses.last().unwrap(),
            perf.accuracy,
            baseline
        ),
    )
}
