//! Delay embedding of a scalar CGM segment and the windowed snapshot
//! matrices fed to DMD.
//!
//! A state vector at grid index `t` stacks the `dim` most recent samples,
//! oldest first. The snapshot pair at `t` holds `pairs` consecutive states
//! ending one step before `t` (`X`) and the same states advanced by one
//! step (`Y`), so both matrices are Hankel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Segment;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Samples per state vector.
    pub dim: usize,
    /// Sampling period in minutes.
    pub step_minutes: u32,
    /// Snapshot pairs per window.
    pub pairs: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 12,
            step_minutes: 5,
            pairs: 3,
        }
    }
}

impl EmbeddingConfig {
    /// Builds a config from a delay horizon; `dim = horizon / step`.
    pub fn from_horizon(horizon_minutes: u32, step_minutes: u32, pairs: usize) -> Result<Self, EmbedError> {
        if step_minutes == 0 || !horizon_minutes.is_multiple_of(step_minutes) {
            return Err(EmbedError::Config(format!(
                "delay horizon {horizon_minutes} min is not a multiple of the {step_minutes} min step"
            )));
        }
        let cfg = Self {
            dim: (horizon_minutes / step_minutes) as usize,
            step_minutes,
            pairs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 {
            return Err(EmbedError::Config(format!("embedding dimension {} < 2", self.dim)));
        }
        if self.pairs < 1 {
            return Err(EmbedError::Config("need at least one snapshot pair".into()));
        }
        if self.step_minutes == 0 {
            return Err(EmbedError::Config("sampling period must be positive".into()));
        }
        Ok(())
    }

    pub fn delay_horizon_minutes(&self) -> u32 {
        self.dim as u32 * self.step_minutes
    }

    /// Samples spanned by one snapshot pair (`dim + pairs`).
    pub fn window_len(&self) -> usize {
        self.dim + self.pairs
    }

    /// Offset of the first ready index from the segment start.
    pub fn warmup(&self) -> usize {
        self.dim - 1 + self.pairs
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error("grid index {t} lies outside the segment [{start}, {end})")]
    OutsideSegment { t: usize, start: usize, end: usize },
    #[error("non-finite sample at grid index {t}; windows may not cross segment boundaries")]
    SegmentBoundary { t: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    /// Oldest first.
    pub values: Vec<f64>,
    pub end_time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub x: Matrix,
    pub y: Matrix,
    pub end_time: usize,
    /// True if any sample in the window was interpolated.
    pub contains_filled: bool,
}

fn check_span(seg: &Segment<'_>, from: usize, t: usize) -> Result<(), EmbedError> {
    if !seg.contains(t) {
        return Err(EmbedError::OutsideSegment {
            t,
            start: seg.start,
            end: seg.end(),
        });
    }
    for i in from..=t {
        if !seg.values[i - seg.start].is_finite() {
            return Err(EmbedError::SegmentBoundary { t: i });
        }
    }
    Ok(())
}

/// State vector ending at grid index `t`, or `None` while the segment holds
/// fewer than `dim` samples up to `t`.
pub fn embed(seg: &Segment<'_>, cfg: &EmbeddingConfig, t: usize) -> Result<Option<StateVector>, EmbedError> {
    if t < seg.start + cfg.dim - 1 {
        if !seg.contains(t) {
            return Err(EmbedError::OutsideSegment {
                t,
                start: seg.start,
                end: seg.end(),
            });
        }
        return Ok(None);
    }
    let from = t + 1 - cfg.dim;
    check_span(seg, from, t)?;
    Ok(Some(StateVector {
        values: seg.values[from - seg.start..=t - seg.start].to_vec(),
        end_time: t,
    }))
}

/// Snapshot matrices for the window ending at `t`:
/// `X = [x(t-w) … x(t-1)]`, `Y = [x(t-w+1) … x(t)]`.
pub fn snapshot_matrices(seg: &Segment<'_>, cfg: &EmbeddingConfig, t: usize) -> Result<Option<SnapshotPair>, EmbedError> {
    if t < seg.start + cfg.warmup() {
        if !seg.contains(t) {
            return Err(EmbedError::OutsideSegment {
                t,
                start: seg.start,
                end: seg.end(),
            });
        }
        return Ok(None);
    }
    let from = t + 1 - cfg.window_len();
    check_span(seg, from, t)?;
    let window = &seg.values[from - seg.start..=t - seg.start];
    let contains_filled = seg.filled[from - seg.start..=t - seg.start].iter().any(|&f| f);
    Ok(Some(pair_from_window(window, cfg.dim, cfg.pairs, t, contains_filled)))
}

/// Builds the snapshot pair from exactly `dim + pairs` consecutive samples.
pub fn pair_from_window(window: &[f64], dim: usize, pairs: usize, end_time: usize, contains_filled: bool) -> SnapshotPair {
    debug_assert_eq!(window.len(), dim + pairs);
    SnapshotPair {
        x: Matrix::from_fn(dim, pairs, |i, j| window[i + j]),
        y: Matrix::from_fn(dim, pairs, |i, j| window[i + j + 1]),
        end_time,
        contains_filled,
    }
}
