use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use softreg::certify::{certify, Verdict};
use softreg::convergence::{condition_bound, plan_at, reduce_two_class, ConvergencePlan};
use softreg::data_io::{read_weights, write_weights};
use softreg::gradcheck::{self, CheckSummary, InstanceSizes};
use softreg::loss::{activations, gradient};
use softreg::softmax::softmax;
use softreg::spectrum::{analyze_q, dense_q_spectrum, SpectrumReport};
use softreg::trainer::{self, BbMode, Performance, StopReason, TrainConfig, TrainTrace};
use softreg::{Dataset, Error, Weights};

use crate::args::{CertifyArgs, CheckgradArgs, Command, SpectrumArgs, TrainArgs};
use crate::data;
use crate::report::Report;
use crate::{CliError, EXIT_CHECK_FAILED, EXIT_NONFINITE, EXIT_OK};

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Train(a) => train(a, out),
        Command::Spectrum(a) => spectrum(a, out),
        Command::Certify(a) => certify_cmd(a, out),
        Command::Checkgrad(a) => checkgrad(a, out),
    }
}

#[derive(Debug, Serialize)]
struct HeldOut {
    samples: usize,
    loss: f64,
    accuracy: f64,
    /// Accuracy of always predicting the most frequent class.
    majority_baseline: f64,
}

#[derive(Debug, Serialize)]
struct TrainResult {
    config: TrainConfig,
    trace: TrainTrace,
    /// `null` after a nonfinite stop.
    train: Option<Performance>,
    test: Option<HeldOut>,
    weights_file: Option<String>,
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let defaults = TrainConfig::default();
    let eta = match (a.eta, a.bb) {
        (Some(eta), _) => eta,
        (None, BbMode::Off) => {
            return Err(CliError::Usage("--eta is required when --bb is off".into()))
        }
        (None, _) => defaults.eta,
    };
    let cfg = TrainConfig {
        eta,
        epochs: a.epochs,
        bb_mode: a.bb,
        center_every: a.center_every,
        seed: a.seed,
        init_scale: a.init_scale,
        tol_grad: a.tol_grad,
        log_every: a.log_every,
    };
    cfg.validate()?;

    let (train_set, train_digest) = data::load(&a.data)?;
    let test = data::load_test(&a.data, &a.test)?;
    if let Some((t, _)) = &test {
        if t.features() != train_set.features() || t.classes() != train_set.classes() {
            return Err(Error::Consistency(format!(
                "held-out set is {}x{} (features x classes), training set is {}x{}",
                t.features(),
                t.classes(),
                train_set.features(),
                train_set.classes()
            ))
            .into());
        }
    }

    let (w, trace) = trainer::train(&train_set, &cfg)?;
    let finite = trace.stop_reason != StopReason::Nonfinite;
    let train_perf = if finite {
        Some(trainer::evaluate(&w, &train_set)?)
    } else {
        None
    };
    let held_out = match &test {
        Some((t, _)) if finite => {
            let p = trainer::evaluate(&w, t)?;
            Some(HeldOut {
                samples: t.samples(),
                loss: p.loss,
                accuracy: p.accuracy,
                majority_baseline: majority_baseline(t),
            })
        }
        _ => None,
    };

    if let Some(path) = &a.out {
        write_weights(path, &w)?;
    }

    let inputs = json!({
        "train": train_digest,
        "test": test.as_ref().map(|(_, d)| d.clone()),
    });
    let code = if finite { EXIT_OK } else { EXIT_NONFINITE };
    let result = TrainResult {
        config: cfg,
        trace,
        train: train_perf,
        test: held_out,
        weights_file: a.out.as_ref().map(|p| p.display().to_string()),
    };
    let report = Report::new("train", inputs, result, started, &a.output);
    report.emit(&a.output, out, |o| {
        let r = &report.result;
        writeln!(o, "{:>8}  {:>14}  {:>11}  {:>10}", "epoch", "loss", "grad_norm", "eta")?;
        for rec in &r.trace.records {
            writeln!(
                o,
                "{:>8}  {:>14.8e}  {:>11.4e}  {:>10.3e}",
                rec.epoch, rec.loss, rec.grad_norm, rec.eta_used
            )?;
        }
        writeln!(o, "stop: {:?} after {} epochs", r.trace.stop_reason, r.trace.epochs_run)?;
        if let Some(p) = &r.train {
            writeln!(o, "train loss {:.6e}  accuracy {:.4}", p.loss, p.accuracy)?;
        }
        if let Some(t) = &r.test {
            writeln!(
                o,
                "test loss {:.6e}  accuracy {:.4}  majority baseline {:.4}",
                t.loss, t.accuracy, t.majority_baseline
            )?;
        }
        Ok(())
    })?;
    Ok(code)
}

fn majority_baseline(data: &Dataset) -> f64 {
    let mut counts = vec![0usize; data.classes()];
    for col in data.t().column_iter() {
        counts[trainer::argmax(col.as_slice())] += 1;
    }
    let best = counts.into_iter().max().unwrap_or(0);
    if data.samples() == 0 {
        0.0
    } else {
        best as f64 / data.samples() as f64
    }
}

#[derive(Debug, Serialize)]
struct DenseCheck {
    eigenvalues: Vec<f64>,
    max_abs_delta: f64,
}

#[derive(Debug, Serialize)]
struct SpectrumResult {
    y: Vec<f64>,
    spectrum: SpectrumReport,
    /// `null` when the vector is too long for the dense solver.
    dense_check: Option<DenseCheck>,
}

fn spectrum(a: SpectrumArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let (y, inputs) = match (&a.y, &a.weights, a.sample) {
        (Some(y), None, None) => (y.clone(), json!({ "y": y })),
        (None, Some(path), Some(sample)) => {
            let (d, digest) = data::load(&a.data)?;
            if sample >= d.samples() {
                return Err(CliError::Usage(format!(
                    "--sample {sample} out of range ({} samples)",
                    d.samples()
                )));
            }
            let w = read_weights(path)?;
            let acts = activations(&w, &d)?;
            let y = softmax(&acts.column(sample).into_owned())?;
            let inputs = json!({
                "data": digest,
                "weights": path.display().to_string(),
                "sample": sample,
            });
            (y.as_slice().to_vec(), inputs)
        }
        _ => {
            return Err(CliError::Usage(
                "give --y, or --weights with --sample and a data source".into(),
            ))
        }
    };

    let report_q = analyze_q(&y)?;
    let dense_check = match dense_q_spectrum(&y) {
        Ok(dense) => {
            let delta = dense
                .iter()
                .zip(report_q.expanded())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Some(DenseCheck {
                eigenvalues: dense,
                max_abs_delta: delta,
            })
        }
        Err(Error::TooLarge { .. }) => None,
        Err(e) => return Err(e.into()),
    };

    let result = SpectrumResult {
        y,
        spectrum: report_q,
        dense_check,
    };
    let report = Report::new("spectrum", inputs, result, started, &a.output);
    report.emit(&a.output, out, |o| {
        let r = &report.result;
        writeln!(o, "{:>22}  {:>4}  {:<20}  bracket", "eigenvalue", "mult", "kind")?;
        for e in &r.spectrum.eigenvalues {
            let kind = serde_json::to_value(e.kind).expect("enum serializes");
            let bracket = match e.bracket {
                Some((lo, hi)) => format!("({lo:.6e}, {hi:.6e})"),
                None => "-".into(),
            };
            writeln!(
                o,
                "{:>22.15e}  {:>4}  {:<20}  {}{}",
                e.value,
                e.multiplicity,
                kind.as_str().unwrap_or("?"),
                bracket,
                if e.degenerate { "  [degenerate gap]" } else { "" }
            )?;
        }
        match &r.dense_check {
            Some(d) => writeln!(o, "dense check: max |delta| = {:.3e}", d.max_abs_delta)?,
            None => writeln!(o, "dense check: skipped (vector too long)")?,
        }
        Ok(())
    })?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct CertificateOut {
    certificate: &'static str,
    verdict: Verdict,
    full_rank: bool,
    rank: usize,
    features: usize,
    sv_min: f64,
    sv_max: f64,
    /// Row-major `C×D` direction in the flat set, when degenerate.
    degeneracy_witness: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize)]
struct TwoClassOut {
    lambda_min: f64,
    lambda_max: f64,
    k_exact: f64,
    k_bound: f64,
}

#[derive(Debug, Serialize)]
struct CertifyResult {
    convexity: CertificateOut,
    weights: String,
    /// Curvature plan at the weights; `null` when not strictly convex.
    plan: Option<ConvergencePlan>,
    two_class: Option<TwoClassOut>,
    plan_error: Option<String>,
}

fn certify_cmd(a: CertifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    if !data::has_data(&a.data) {
        return Err(CliError::Usage("certify needs --data/--labels or --csv".into()));
    }
    let (d, digest) = data::load(&a.data)?;
    let cert = certify(&d);

    let (w, source) = match (&a.weights, a.train_epochs) {
        (Some(path), _) => (read_weights(path)?, path.display().to_string()),
        (None, 0) => (Weights::zeros(d.classes(), d.features()), "zero".to_string()),
        (None, epochs) => {
            let cfg = TrainConfig {
                epochs,
                bb_mode: BbMode::Bb2,
                ..TrainConfig::default()
            };
            (trainer::train(&d, &cfg)?.0, format!("trained ({epochs} BB2 epochs)"))
        }
    };

    let (plan, two_class, plan_error) = if cert.full_rank {
        let planned = plan_at(&w, &d);
        let two = if d.classes() == 2 {
            let r = reduce_two_class(&w, &d)?;
            let eig = r.eigenvalues();
            let b = condition_bound(&r, &d)?;
            Some(TwoClassOut {
                lambda_min: eig.iter().copied().fold(f64::INFINITY, f64::min),
                lambda_max: eig.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                k_exact: b.k_exact,
                k_bound: b.k_bound,
            })
        } else {
            None
        };
        match planned {
            Ok(p) => (Some(p), two, None),
            Err(e) => (None, two, Some(e.to_string())),
        }
    } else {
        (None, None, None)
    };

    let witness = cert.degeneracy_witness.as_ref().map(|u| {
        u.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    });
    let result = CertifyResult {
        convexity: CertificateOut {
            certificate: cert.verdict.describe(),
            verdict: cert.verdict,
            full_rank: cert.full_rank,
            rank: cert.rank,
            features: d.features(),
            sv_min: cert.sv_min,
            sv_max: cert.sv_max,
            degeneracy_witness: witness,
        },
        weights: source,
        plan,
        two_class,
        plan_error,
    };
    let inputs = json!({ "data": digest, "weights": a.weights.as_ref().map(|p| p.display().to_string()) });
    let report = Report::new("certify", inputs, result, started, &a.output);
    report.emit(&a.output, out, |o| {
        let r = &report.result;
        let c = &r.convexity;
        writeln!(o, "certificate: {}", c.certificate)?;
        writeln!(
            o,
            "rank(X) = {} of D = {}  (singular values {:.6e} .. {:.6e})",
            c.rank, c.features, c.sv_min, c.sv_max
        )?;
        writeln!(o, "weights: {}", r.weights)?;
        if let Some(p) = &r.plan {
            writeln!(o, "lambda_min {:.6e}  lambda_max {:.6e}", p.lambda_min, p.lambda_max)?;
            writeln!(o, "K {:.6e}  theta {:.6}", p.k, p.theta)?;
            writeln!(
                o,
                "eta window [{:.6e}, {:.6e}]  eta* {:.6e}",
                p.eta_window.0, p.eta_window.1, p.eta_optimal
            )?;
        }
        if let Some(t) = &r.two_class {
            writeln!(o, "K_exact {:.6e}  K_bound {:.6e}", t.k_exact, t.k_bound)?;
        }
        if let Some(e) = &r.plan_error {
            writeln!(o, "plan unavailable: {e}")?;
        }
        Ok(())
    })?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct CheckgradResult {
    seed: u64,
    sizes: InstanceSizes,
    summary: CheckSummary,
    thresholds: Value,
    passed: bool,
}

fn checkgrad(a: CheckgradArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    if a.instances == 0 {
        return Err(CliError::Usage("--instances must be positive".into()));
    }
    let summary = if a.corrupt_gradient {
        gradcheck::run_suite(a.seed, a.instances, a.sizes, |w, d| {
            Ok(gradient(w, d)? * (1.0 + 1e-3))
        })?
    } else {
        gradcheck::run_suite(a.seed, a.instances, a.sizes, gradient)?
    };
    let passed = summary.passed();
    let result = CheckgradResult {
        seed: a.seed,
        sizes: a.sizes,
        summary,
        thresholds: json!({
            "gradient": gradcheck::GRADIENT_TOL,
            "hessian": gradcheck::HESSIAN_TOL,
            "symmetry": gradcheck::SYMMETRY_TOL,
        }),
        passed,
    };
    let inputs = json!({ "seed": a.seed, "instances": a.instances, "sizes": a.sizes });
    let report = Report::new("checkgrad", inputs, result, started, &a.output);
    report.emit(&a.output, out, |o| {
        let s = &report.result.summary;
        writeln!(o, "instances: {}", s.instances)?;
        writeln!(o, "gradient  max rel err {:.3e}  (limit {:.0e})", s.max_gradient_error, gradcheck::GRADIENT_TOL)?;
        writeln!(o, "hessian   max rel err {:.3e}  (limit {:.0e})", s.max_hessian_error, gradcheck::HESSIAN_TOL)?;
        writeln!(o, "symmetry  max rel err {:.3e}  (limit {:.0e})", s.max_symmetry_error, gradcheck::SYMMETRY_TOL)?;
        writeln!(o, "{}", if passed { "PASS" } else { "FAIL" })
    })?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
