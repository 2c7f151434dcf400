//! Full-batch gradient descent with optional Barzilai–Borwein steps and
//! periodic column recentering.
//!
//! Each epoch computes `A = W X`, `Y = softmax(A)`, `E = T - Y`,
//! `∇L = -E Xᵀ` and updates `W ← W - η ∇L`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{self, loss_from_activations};
use crate::model::{center_columns, Dataset, Weights};
use crate::Matrix;

/// Accepted range for Barzilai–Borwein step sizes.
pub const BB_STEP_RANGE: (f64, f64) = (1e-12, 1e12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BbMode {
    /// Fixed learning rate.
    #[default]
    Off,
    /// `⟨s, s⟩ / ⟨s, g⟩` with `s = ΔW`, `g = Δ∇L`.
    Bb1,
    /// `⟨s, g⟩ / ⟨g, g⟩`.
    Bb2,
}

impl std::str::FromStr for BbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(BbMode::Off),
            "bb1" => Ok(BbMode::Bb1),
            "bb2" => Ok(BbMode::Bb2),
            other => Err(Error::InvalidInput(format!("unknown step mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    /// Fixed learning rate, or the first step when BB is enabled.
    pub eta: f64,
    pub epochs: usize,
    pub bb_mode: BbMode,
    /// Recenter every this many epochs; 0 disables.
    pub center_every: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Stop once `‖∇L‖_F ≤ tol_grad`.
    pub tol_grad: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            epochs: 100,
            bb_mode: BbMode::Off,
            center_every: 10,
            seed: 0,
            init_scale: 0.01,
            tol_grad: 1e-8,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidInput("init_scale must be non-negative".into()));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::InvalidInput("tol_grad must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidInput("log_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochsExhausted,
    GradTol,
    Nonfinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Step taken after this record (the configured rate for the last one).
    pub eta_used: f64,
    pub max_abs_column_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub epochs_run: usize,
}

/// State observed at the current weights.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub loss: f64,
    pub gradient: Matrix,
    pub grad_norm: f64,
}

/// Random `init_scale · N(0, 1)` weights, centered.
pub fn initial_weights(classes: usize, features: usize, cfg: &TrainConfig) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = Matrix::from_fn(classes, features, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cfg.init_scale * z
    });
    center_columns(&Weights::new(w).expect("finite draws")).into_weights()
}

/// Step-by-step gradient descent driver.
#[derive(Debug)]
pub struct Trainer<'a> {
    data: &'a Dataset,
    cfg: TrainConfig,
    w: Matrix,
    eta: f64,
    previous: Option<(Matrix, Matrix)>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, cfg: TrainConfig, w0: Weights) -> Result<Self> {
        cfg.validate()?;
        data.check_weights(w0.as_matrix())?;
        Ok(Self {
            data,
            eta: cfg.eta,
            cfg,
            w: w0.into_matrix(),
            previous: None,
            epoch: 0,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Loss and gradient at the current weights, `None` when they are
    /// not finite.
    pub fn observe(&self) -> Option<StepInfo> {
        let a = &self.w * self.data.x();
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let y = crate::softmax::softmax_columns(&a).ok()?;
        let loss = loss_from_activations(&a, self.data.t());
        let gradient = (y - self.data.t()) * self.data.x().transpose();
        let grad_norm = gradient.norm();
        (loss.is_finite() && grad_norm.is_finite()).then_some(StepInfo {
            loss,
            gradient,
            grad_norm,
        })
    }

    fn next_eta(&self, gradient: &Matrix) -> f64 {
        let Some((w_prev, g_prev)) = &self.previous else {
            return self.eta;
        };
        let s = &self.w - w_prev;
        let g = gradient - g_prev;
        let sg = s.dot(&g);
        if !(sg > 0.0) {
            return self.eta;
        }
        let candidate = match self.cfg.bb_mode {
            BbMode::Off => return self.eta,
            BbMode::Bb1 => s.dot(&s) / sg,
            BbMode::Bb2 => sg / g.dot(&g),
        };
        if candidate.is_finite() && (BB_STEP_RANGE.0..=BB_STEP_RANGE.1).contains(&candidate) {
            candidate
        } else {
            self.eta
        }
    }

    /// Applies one update using the gradient in `info` (which must have been
    /// observed at the current weights). Returns the step size used.
    pub fn step(&mut self, info: &StepInfo) -> f64 {
        let eta = self.next_eta(&info.gradient);
        self.eta = eta;
        let updated = &self.w - &info.gradient * eta;
        self.previous = Some((std::mem::replace(&mut self.w, updated), info.gradient.clone()));
        self.epoch += 1;
        if self.cfg.center_every > 0 && self.epoch % self.cfg.center_every == 0 {
            let w = Weights::new(self.w.clone());
            if let Ok(w) = w {
                self.w = center_columns(&w).into_weights().into_matrix();
            }
        }
        eta
    }

    fn record(&self, info: &StepInfo, eta_used: f64) -> EpochRecord {
        EpochRecord {
            epoch: self.epoch,
            loss: info.loss,
            grad_norm: info.grad_norm,
            eta_used,
            max_abs_column_sum: max_abs_column_sum(&self.w),
        }
    }

    /// Runs to completion. After a nonfinite stop the last weights with a
    /// finite loss are returned.
    pub fn run(mut self) -> (Weights, TrainTrace) {
        let mut records = Vec::new();
        let stop_reason = loop {
            let Some(info) = self.observe() else {
                records.push(EpochRecord {
                    epoch: self.epoch,
                    loss: f64::NAN,
                    grad_norm: f64::NAN,
                    eta_used: self.eta,
                    max_abs_column_sum: max_abs_column_sum(&self.w),
                });
                break StopReason::Nonfinite;
            };
            let last = self.epoch >= self.cfg.epochs || info.grad_norm <= self.cfg.tol_grad;
            if last {
                records.push(self.record(&info, self.eta));
                break if info.grad_norm <= self.cfg.tol_grad {
                    StopReason::GradTol
                } else {
                    StopReason::EpochsExhausted
                };
            }
            let logged = self.epoch % self.cfg.log_every == 0;
            let snapshot = logged.then(|| (self.epoch, max_abs_column_sum(&self.w)));
            let eta = self.step(&info);
            if let Some((epoch, col)) = snapshot {
                records.push(EpochRecord {
                    epoch,
                    loss: info.loss,
                    grad_norm: info.grad_norm,
                    eta_used: eta,
                    max_abs_column_sum: col,
                });
            }
        };
        let epochs_run = self.epoch;
        if stop_reason == StopReason::Nonfinite {
            if let Some((w_prev, _)) = self.previous.take() {
                self.w = w_prev;
            }
        }
        let w = Weights::new(self.w).expect("weights with a finite loss are finite");
        (
            w,
            TrainTrace {
                records,
                stop_reason,
                epochs_run,
            },
        )
    }
}

fn max_abs_column_sum(w: &Matrix) -> f64 {
    w.column_iter().map(|c| c.sum().abs()).fold(0.0, f64::max)
}

/// Trains from a seeded random (centered) initialization.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(Weights, TrainTrace)> {
    cfg.validate()?;
    let w0 = initial_weights(data.classes(), data.features(), cfg);
    train_from(data, cfg, w0)
}

/// Trains from explicit initial weights (used as given, not recentered).
pub fn train_from(data: &Dataset, cfg: &TrainConfig, w0: Weights) -> Result<(Weights, TrainTrace)> {
    Ok(Trainer::new(data, cfg.clone(), w0)?.run())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Performance {
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and argmax accuracy. Ties in either argmax go to the lowest class
/// index.
pub fn evaluate(w: &Weights, data: &Dataset) -> Result<Performance> {
    let e = loss::evaluate(w, data)?;
    let hits = e
        .outputs
        .column_iter()
        .zip(data.t().column_iter())
        .filter(|(y, t)| argmax(y.as_slice()) == argmax(t.as_slice()))
        .count();
    Ok(Performance {
        loss: e.loss,
        accuracy: hits as f64 / data.samples() as f64,
    })
}

/// Index of the first maximal entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
