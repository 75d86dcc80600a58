//! Run configuration shared by the library entry points and the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::RocBaselineConfig;
use crate::classifier::{EmissionPolicy, TrainConfig};
use crate::dmd::{DmdConfig, DEFAULT_RANK_TOL};
use crate::embedding::EmbeddingConfig;
use crate::eval::FprUnit;
use crate::features::{FeatureMode, Featurizer, LabelingConfig};

/// Version string embedded in every output.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionKind {
    #[default]
    Threshold,
    Hysteresis,
}

/// Every tunable of a run. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub step_minutes: u32,
    pub max_gap_minutes: u32,
    pub delay_horizon_minutes: u32,
    pub pairs: usize,
    pub rank: usize,
    pub rank_tol: f64,
    pub spike_threshold: f64,
    pub feature_n: usize,
    pub feature_mode: FeatureMode,
    pub positive_offset_minutes: u32,
    pub negative_exclusion_minutes: u32,
    pub negative_ratio: Option<f64>,
    pub reg_lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub emission: EmissionKind,
    pub decision_threshold: f64,
    pub hysteresis_low: f64,
    pub hysteresis_high: f64,
    pub refractory_minutes: u32,
    pub tw_minutes: Vec<u32>,
    pub delay_window_minutes: u32,
    pub spike_forward_minutes: u32,
    pub spike_backward_minutes: u32,
    pub fpr_unit: FprUnit,
    pub baseline_slope_window_minutes: u32,
    pub baseline_slope_threshold: f64,
    pub baseline_refractory_minutes: u32,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let baseline = RocBaselineConfig::default();
        Self {
            step_minutes: 5,
            max_gap_minutes: 30,
            delay_horizon_minutes: 60,
            pairs: 3,
            rank: 3,
            rank_tol: DEFAULT_RANK_TOL,
            spike_threshold: 1.2,
            feature_n: 4,
            feature_mode: FeatureMode::MaxEig,
            positive_offset_minutes: 20,
            negative_exclusion_minutes: 60,
            negative_ratio: Some(5.0),
            reg_lambda: 1e-2,
            tol: 1e-8,
            max_iter: 10_000,
            emission: EmissionKind::Threshold,
            decision_threshold: 0.5,
            hysteresis_low: 0.2,
            hysteresis_high: 0.4,
            refractory_minutes: 45,
            tw_minutes: vec![15, 30],
            delay_window_minutes: 120,
            spike_forward_minutes: 40,
            spike_backward_minutes: 60,
            fpr_unit: FprUnit::PerDecisionPoint,
            baseline_slope_window_minutes: baseline.slope_window_minutes,
            baseline_slope_threshold: baseline.slope_threshold,
            baseline_refractory_minutes: baseline.refractory_minutes,
            seed: 42,
            train_fraction: 0.75,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    // `!(x > 0.0)` also rejects NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.step_minutes == 0 {
            return bad("step_minutes must be positive".into());
        }
        self.embedding().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol {} outside (0, 1)", self.rank_tol));
        }
        if !(self.spike_threshold > 0.0) {
            return bad("spike_threshold must be positive".into());
        }
        if self.feature_n == 0 {
            return bad("feature_n must be at least 1".into());
        }
        if !(self.reg_lambda > 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be positive".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol and max_iter must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return bad(format!("decision_threshold {} outside [0, 1]", self.decision_threshold));
        }
        if !(0.0 <= self.hysteresis_low && self.hysteresis_low <= self.hysteresis_high && self.hysteresis_high <= 1.0) {
            return bad("need 0 <= hysteresis_low <= hysteresis_high <= 1".into());
        }
        if self.tw_minutes.is_empty() || self.tw_minutes.contains(&0) {
            return bad("tw_minutes must be a non-empty list of positive values".into());
        }
        if let Some(r) = self.negative_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return bad("negative_ratio must be positive".into());
            }
        }
        if !(self.baseline_slope_threshold > 0.0) || self.baseline_slope_window_minutes < self.step_minutes {
            return bad("baseline slope window must span two samples and threshold be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        let minute_fields = [
            ("max_gap_minutes", self.max_gap_minutes),
            ("positive_offset_minutes", self.positive_offset_minutes),
            ("negative_exclusion_minutes", self.negative_exclusion_minutes),
            ("refractory_minutes", self.refractory_minutes),
            ("delay_window_minutes", self.delay_window_minutes),
            ("spike_forward_minutes", self.spike_forward_minutes),
            ("spike_backward_minutes", self.spike_backward_minutes),
            ("baseline_slope_window_minutes", self.baseline_slope_window_minutes),
            ("baseline_refractory_minutes", self.baseline_refractory_minutes),
        ];
        for (name, v) in minute_fields.into_iter().chain(self.tw_minutes.iter().map(|&v| ("tw_minutes", v))) {
            if v % self.step_minutes != 0 {
                return bad(format!("{name} = {v} is not a multiple of step_minutes"));
            }
        }
        Ok(())
    }

    pub fn embedding(&self) -> Result<EmbeddingConfig, crate::embedding::EmbedError> {
        EmbeddingConfig::from_horizon(self.delay_horizon_minutes, self.step_minutes, self.pairs)
    }

    pub fn dmd(&self) -> DmdConfig {
        DmdConfig {
            rank: self.rank,
            rank_tol: self.rank_tol,
        }
    }

    pub fn featurizer(&self) -> Featurizer {
        self.featurizer_for(self.feature_mode)
    }

    pub fn featurizer_for(&self, mode: FeatureMode) -> Featurizer {
        Featurizer {
            mode,
            steps: self.feature_n,
            rank: self.rank,
        }
    }

    pub fn labeling(&self) -> LabelingConfig {
        LabelingConfig {
            positive_offset_minutes: self.positive_offset_minutes,
            negative_exclusion_minutes: self.negative_exclusion_minutes,
            negative_ratio: self.negative_ratio,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            reg_lambda: self.reg_lambda,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn emission_policy(&self) -> EmissionPolicy {
        match self.emission {
            EmissionKind::Threshold => EmissionPolicy::Threshold {
                threshold: self.decision_threshold,
            },
            EmissionKind::Hysteresis => EmissionPolicy::Hysteresis {
                low: self.hysteresis_low,
                high: self.hysteresis_high,
            },
        }
    }

    pub fn baseline(&self) -> RocBaselineConfig {
        RocBaselineConfig {
            slope_window_minutes: self.baseline_slope_window_minutes,
            slope_threshold: self.baseline_slope_threshold,
            refractory_minutes: self.baseline_refractory_minutes,
            ..RocBaselineConfig::default()
        }
    }

    /// Compact single-line JSON, used in output headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
