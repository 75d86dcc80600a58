//! Rate-of-change meal detector used as a comparison baseline.
//!
//! The detector fits a least-squares line to the trailing window of
//! glucose samples and fires when the slope reaches a threshold.

use serde::{Deserialize, Serialize};

use crate::classifier::{sigmoid, DetectionEvent, Refractory};
use crate::ingest::GridSeries;

/// Name used for this detector in reports.
pub const BASELINE_NAME: &str = "roc-baseline";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocBaselineConfig {
    pub slope_window_minutes: u32,
    /// mg/dL/min
    pub slope_threshold: f64,
    pub refractory_minutes: u32,
    /// Slope difference (mg/dL/min) mapped to one logit unit in the
    /// reported probability.
    pub squash_scale: f64,
}

impl Default for RocBaselineConfig {
    fn default() -> Self {
        Self {
            slope_window_minutes: 30,
            slope_threshold: 1.5,
            refractory_minutes: 45,
            squash_scale: 0.5,
        }
    }
}

impl RocBaselineConfig {
    pub fn probability(&self, slope: f64) -> f64 {
        sigmoid((slope - self.slope_threshold) / self.squash_scale)
    }
}

/// Least-squares slope in mg/dL/min of equally spaced samples.
pub fn ls_slope(values: &[f64], step_minutes: u32) -> f64 {
    let n = values.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    sxy / sxx / f64::from(step_minutes)
}

/// `(t, slope)` at every index whose trailing window is fully observed.
pub fn trailing_slopes(series: &GridSeries, cfg: &RocBaselineConfig) -> Vec<(usize, f64)> {
    let n = (cfg.slope_window_minutes / series.step_minutes.max(1)) as usize + 1;
    let mut out = Vec::new();
    let mut window: Vec<f64> = Vec::with_capacity(n);
    for (t, g) in series.glucose.iter().enumerate() {
        match g {
            Some(v) => {
                if window.len() == n {
                    window.remove(0);
                }
                window.push(*v);
                if window.len() == n && n >= 2 {
                    out.push((t, ls_slope(&window, series.step_minutes)));
                }
            }
            None => window.clear(),
        }
    }
    out
}

/// `(t, probability)` scores for ROC sweeps.
pub fn roc_scores(series: &GridSeries, cfg: &RocBaselineConfig) -> Vec<(usize, f64)> {
    trailing_slopes(series, cfg)
        .into_iter()
        .map(|(t, s)| (t, cfg.probability(s)))
        .collect()
}

/// Fires when the trailing slope is at least the threshold, subject to the
/// refractory period.
pub fn roc_detect(series: &GridSeries, cfg: &RocBaselineConfig) -> Vec<DetectionEvent> {
    let mut refractory = Refractory::new(cfg.refractory_minutes, series.step_minutes);
    let mut events = Vec::new();
    for (t, slope) in trailing_slopes(series, cfg) {
        if slope >= cfg.slope_threshold && refractory.allows(t) {
            refractory.record(t);
            events.push(DetectionEvent {
                time: t,
                probability: cfg.probability(slope),
            });
        }
    }
    events
}
