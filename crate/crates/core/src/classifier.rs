//! L2-regularized logistic regression and the online event detector.
//!
//! The training objective over `N` samples with labels `y ∈ {0, 1}` is
//!
//! ```text
//! f(w) = (1/N) Σ [log(1 + e^{zᵢ}) − yᵢ zᵢ] + (λ/2) ‖w_{0..k-1}‖²,   zᵢ = w·xᵢ
//! ```
//!
//! where the last weight multiplies the constant bias feature and is not
//! penalized. `f` is strictly convex for `λ > 0` with both classes present,
//! so damped Newton iteration reaches the unique optimum from any start.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMode, FeatureVec, LabeledSample};
use crate::linalg::{cholesky_solve, dot, norm, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("empty positive class")]
    NoPositives,
    #[error("empty negative class")]
    NoNegatives,
    #[error("feature dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature in sample {index}")]
    NonFinite { index: usize },
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("out-of-order step: t={got} after t={last}")]
    OutOfOrder { last: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub reg_lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            reg_lambda: 1e-2,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// `1 / (1 + e^{−z})` without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Dense design matrix with labels; the bias column is the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Self {
        assert_eq!(x.rows(), y.len(), "one label per row");
        Self { x, y }
    }

    pub fn from_samples(samples: &[LabeledSample]) -> Result<Self, ClassifierError> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        let mut data = Vec::with_capacity(samples.len() * dim);
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(ClassifierError::Dimension {
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if s.features.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(ClassifierError::NonFinite { index: i });
            }
            data.extend_from_slice(s.features.as_slice());
        }
        let x = Matrix::from_fn(samples.len(), dim, |i, j| data[i * dim + j]);
        Ok(Self::new(x, samples.iter().map(|s| f64::from(s.label)).collect()))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    fn check_classes(&self) -> Result<(), ClassifierError> {
        if !self.y.contains(&1.0) {
            return Err(ClassifierError::NoPositives);
        }
        if !self.y.contains(&0.0) {
            return Err(ClassifierError::NoNegatives);
        }
        Ok(())
    }
}

fn penalty_mask(dim: usize, j: usize) -> f64 {
    if j + 1 == dim {
        0.0
    } else {
        1.0
    }
}

/// Regularized mean negative log-likelihood.
pub fn objective(data: &Dataset, w: &[f64], reg_lambda: f64) -> f64 {
    let n = data.len() as f64;
    let nll: f64 = (0..data.len())
        .map(|i| {
            let z = dot(data.x.row(i), w);
            softplus(z) - data.y[i] * z
        })
        .sum();
    let dim = w.len();
    let pen: f64 = w.iter().enumerate().map(|(j, v)| penalty_mask(dim, j) * v * v).sum();
    nll / n + 0.5 * reg_lambda * pen
}

/// Analytic gradient of [`objective`].
pub fn gradient(data: &Dataset, w: &[f64], reg_lambda: f64) -> Vec<f64> {
    let dim = w.len();
    let n = data.len() as f64;
    let mut g = vec![0.0; dim];
    for i in 0..data.len() {
        let row = data.x.row(i);
        let r = sigmoid(dot(row, w)) - data.y[i];
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = *gj / n + reg_lambda * penalty_mask(dim, j) * w[j];
    }
    g
}

fn hessian(data: &Dataset, w: &[f64], reg_lambda: f64) -> Matrix {
    let dim = w.len();
    let n = data.len() as f64;
    let mut h = Matrix::zeros(dim, dim);
    for i in 0..data.len() {
        let row = data.x.row(i);
        let p = sigmoid(dot(row, w));
        let s = p * (1.0 - p);
        for a in 0..dim {
            let sa = s * row[a];
            for b in a..dim {
                h[(a, b)] += sa * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let v = h[(a, b)] / n;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
        h[(a, a)] += reg_lambda * penalty_mask(dim, a);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

/// Damped Newton minimization of [`objective`] from `init` (zeros if
/// `None`). Each step solves the Hessian system by Cholesky, adding a
/// growing diagonal shift if that fails, and backtracks until the
/// objective decreases sufficiently.
pub fn fit(data: &Dataset, cfg: &TrainConfig, init: Option<&[f64]>) -> Result<FitResult, ClassifierError> {
    data.check_classes()?;
    let dim = data.dim();
    let mut w = match init {
        Some(w0) if w0.len() != dim => {
            return Err(ClassifierError::Dimension {
                expected: dim,
                got: w0.len(),
            })
        }
        Some(w0) => w0.to_vec(),
        None => vec![0.0; dim],
    };
    let mut f = objective(data, &w, cfg.reg_lambda);
    let mut g = gradient(data, &w, cfg.reg_lambda);
    let mut gnorm = norm(&g);
    let mut iterations = 0;
    while gnorm >= cfg.tol {
        if iterations == cfg.max_iter {
            return Err(ClassifierError::NoConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        iterations += 1;
        let h = hessian(data, &w, cfg.reg_lambda);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = newton_direction(&h, &neg_g);
        let slope = dot(&g, &step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            let ft = objective(data, &trial, cfg.reg_lambda);
            if ft <= f + 1e-4 * alpha * slope {
                w = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // objective is flat to rounding; take the full step and let the
            // gradient test decide
            w.iter_mut().zip(&step).for_each(|(a, d)| *a += d);
            f = objective(data, &w, cfg.reg_lambda);
        }
        g = gradient(data, &w, cfg.reg_lambda);
        gnorm = norm(&g);
    }
    Ok(FitResult {
        weights: w,
        iterations,
        gradient_norm: gnorm,
        objective: f,
    })
}

fn newton_direction(h: &Matrix, rhs: &[f64]) -> Vec<f64> {
    if let Some(d) = cholesky_solve(h, rhs) {
        return d;
    }
    let scale = (0..h.rows()).map(|i| h[(i, i)].abs()).fold(1e-12, f64::max);
    let mut shift = 1e-10 * scale;
    loop {
        let mut shifted = h.clone();
        for i in 0..h.rows() {
            shifted[(i, i)] += shift;
        }
        if let Some(d) = cholesky_solve(&shifted, rhs) {
            return d;
        }
        shift *= 10.0;
        if !shift.is_finite() {
            // steepest descent
            return rhs.to_vec();
        }
    }
}

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedOn {
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub subjects: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub feature_mode: FeatureMode,
    /// Last entry is the bias weight.
    pub weights: Vec<f64>,
    pub reg_lambda: f64,
    pub seed: u64,
    pub trained_on: TrainedOn,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogRegModel {
    pub fn logit(&self, x: &FeatureVec) -> Result<f64, ClassifierError> {
        if x.len() != self.weights.len() {
            return Err(ClassifierError::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x.as_slice()))
    }

    pub fn predict_proba(&self, x: &FeatureVec) -> Result<f64, ClassifierError> {
        self.logit(x).map(sigmoid)
    }
}

/// Trains a model on labeled samples. `seed` is recorded for provenance.
pub fn train(
    samples: &[LabeledSample],
    feature_mode: FeatureMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LogRegModel, ClassifierError> {
    let data = Dataset::from_samples(samples)?;
    let fit = fit(&data, cfg, None)?;
    let positives = samples.iter().filter(|s| s.label == 1).count();
    let mut subjects: Vec<usize> = samples.iter().map(|s| s.subject).collect();
    subjects.sort_unstable();
    subjects.dedup();
    Ok(LogRegModel {
        feature_mode,
        weights: fit.weights,
        reg_lambda: cfg.reg_lambda,
        seed,
        trained_on: TrainedOn {
            samples: samples.len(),
            positives,
            negatives: samples.len() - positives,
            subjects,
        },
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Grid index.
    pub time: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmissionPolicy {
    /// Fire when `p ≥ threshold`.
    Threshold { threshold: f64 },
    /// Fire when `p > high`; re-arm only after `p < low`.
    Hysteresis { low: f64, high: f64 },
}

impl Default for EmissionPolicy {
    fn default() -> Self {
        Self::Threshold { threshold: 0.5 }
    }
}

/// Suppresses events closer than the refractory period to the last one.
#[derive(Debug, Clone)]
pub struct Refractory {
    period_minutes: u32,
    step_minutes: u32,
    last_event: Option<usize>,
}

impl Refractory {
    pub fn new(period_minutes: u32, step_minutes: u32) -> Self {
        Self {
            period_minutes,
            step_minutes,
            last_event: None,
        }
    }

    pub fn allows(&self, t: usize) -> bool {
        self.last_event
            .is_none_or(|e| (t - e) as u64 * u64::from(self.step_minutes) >= u64::from(self.period_minutes))
    }

    pub fn record(&mut self, t: usize) {
        self.last_event = Some(t);
    }
}

/// Turns a probability stream into discrete detection events.
#[derive(Debug, Clone)]
pub struct OnlineDetector {
    policy: EmissionPolicy,
    refractory: Refractory,
    armed: bool,
    last_t: Option<usize>,
}

impl OnlineDetector {
    pub fn new(policy: EmissionPolicy, refractory_minutes: u32, step_minutes: u32) -> Self {
        Self {
            policy,
            refractory: Refractory::new(refractory_minutes, step_minutes),
            armed: true,
            last_t: None,
        }
    }

    /// Feeds one probability at grid index `t`; indices must increase.
    pub fn step(&mut self, p: f64, t: usize) -> Result<Option<DetectionEvent>, ClassifierError> {
        if let Some(last) = self.last_t {
            if t <= last {
                return Err(ClassifierError::OutOfOrder { last, got: t });
            }
        }
        self.last_t = Some(t);
        let fire = match self.policy {
            EmissionPolicy::Threshold { threshold } => p >= threshold,
            EmissionPolicy::Hysteresis { low, high } => {
                if p < low {
                    self.armed = true;
                }
                self.armed && p > high
            }
        };
        if fire && self.refractory.allows(t) {
            self.refractory.record(t);
            self.armed = false;
            return Ok(Some(DetectionEvent { time: t, probability: p }));
        }
        Ok(None)
    }
}
