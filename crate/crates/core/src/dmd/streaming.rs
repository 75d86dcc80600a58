use std::collections::VecDeque;

use thiserror::Error;

use super::{dmd_step, DmdConfig, DmdError, DmdResult};
use crate::embedding::{pair_from_window, EmbeddingConfig};

#[derive(Debug, Error, PartialEq)]
pub enum StreamError {
    #[error("expected grid index {expected}, got {got}; start a new stream for the next segment")]
    OutOfOrder { expected: usize, got: usize },
    #[error("non-finite sample at grid index {t}")]
    NonFinite { t: usize },
    #[error(transparent)]
    Dmd(#[from] DmdError),
}

/// Sample-by-sample DMD over one contiguous segment.
///
/// Keeps the last `dim + pairs` samples in a ring buffer and emits one
/// result per push once the buffer is full. Results are identical to
/// [`super::dmd_step`] on the corresponding batch window.
#[derive(Debug, Clone)]
pub struct StreamingDmd {
    embed: EmbeddingConfig,
    cfg: DmdConfig,
    buf: VecDeque<f64>,
    filled: VecDeque<bool>,
    next_t: Option<usize>,
}

impl StreamingDmd {
    pub fn new(embed: EmbeddingConfig, cfg: DmdConfig) -> Self {
        let cap = embed.window_len();
        Self {
            embed,
            cfg,
            buf: VecDeque::with_capacity(cap),
            filled: VecDeque::with_capacity(cap),
            next_t: None,
        }
    }

    pub fn push(&mut self, sample: f64, t: usize) -> Result<Option<DmdResult>, StreamError> {
        self.push_sample(sample, t, false)
    }

    /// Like [`push`](Self::push), marking whether the sample was interpolated.
    pub fn push_sample(&mut self, sample: f64, t: usize, filled: bool) -> Result<Option<DmdResult>, StreamError> {
        if let Some(expected) = self.next_t {
            if t != expected {
                return Err(StreamError::OutOfOrder { expected, got: t });
            }
        }
        if !sample.is_finite() {
            return Err(StreamError::NonFinite { t });
        }
        if self.buf.len() == self.embed.window_len() {
            self.buf.pop_front();
            self.filled.pop_front();
        }
        self.buf.push_back(sample);
        self.filled.push_back(filled);
        self.next_t = Some(t + 1);
        if self.buf.len() < self.embed.window_len() {
            return Ok(None);
        }
        let window: Vec<f64> = self.buf.iter().copied().collect();
        let any_filled = self.filled.iter().any(|&f| f);
        let pair = pair_from_window(&window, self.embed.dim, self.embed.pairs, t, any_filled);
        Ok(Some(dmd_step(&pair, &self.cfg)?))
    }

    /// Forgets all history; the next push may start at any index.
    pub fn reset(&mut self) {
        self.buf.clear();
        self.filled.clear();
        self.next_t = None;
    }

    pub fn is_ready(&self) -> bool {
        self.buf.len() == self.embed.window_len()
    }
}
