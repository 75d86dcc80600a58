//! Windowed dynamic mode decomposition.
//!
//! One window, given snapshot matrices `X`, `Y` and a rank `r`:
//!
//! ```text
//! X ≈ U Σ Vᵀ                 (rank-truncated SVD, k ≤ r)
//! A = Uᵀ Y V Σ⁻¹             (k × k compressed operator)
//! A W = W Λ                  (eigendecomposition)
//! Φ = Y V Σ⁻¹ W              (modes, d × k)
//! ```
//!
//! Eigenvalue magnitudes above one mark locally growing dynamics; this
//! crate reads them as meal-induced transients.

mod eig;
mod streaming;
mod svd;

pub use eig::{char_poly3, closed_form_eigenvalues, eig_small, eigen_order, qr_eigenvalues, EigError, Eigen, RESIDUAL_TOL};
pub use streaming::{StreamError, StreamingDmd};
pub use svd::{truncated_svd, SvdResult, DEFAULT_RANK_TOL};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{snapshot_matrices, EmbeddingConfig, SnapshotPair};
use crate::ingest::{GridSeries, Segment};
use crate::linalg::{CMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmdConfig {
    /// Maximum retained rank `r`.
    pub rank: usize,
    /// Singular values below `rank_tol · σ_max` are discarded.
    pub rank_tol: f64,
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DmdError {
    #[error("X is {x_rows}x{x_cols} but Y is {y_rows}x{y_cols}")]
    ShapeMismatch {
        x_rows: usize,
        x_cols: usize,
        y_rows: usize,
        y_cols: usize,
    },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("non-finite snapshot data in window ending at t={end_time}")]
    NonFinite { end_time: usize },
    #[error("eigendecomposition failed for window ending at t={end_time}: {source}")]
    Eigen { end_time: usize, source: EigError },
}

/// Output of one DMD window.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdResult {
    /// Per-step multipliers, descending magnitude, conjugate pairs adjacent.
    pub eigenvalues: Vec<Complex64>,
    /// `d × k`, column `i` pairs with `eigenvalues[i]`.
    pub modes: CMatrix,
    pub singular_values: Vec<f64>,
    pub end_time: usize,
    pub contains_filled: bool,
}

impl DmdResult {
    pub fn retained_rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// A window whose `X` has numerical rank zero.
    pub fn is_degenerate(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max |λ|`, or 0 for a degenerate window.
    pub fn max_magnitude(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.norm())
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(|l| l.norm())
    }

    /// One JSON line: `{"t":…,"eigenvalues":[{"re":…,"im":…}],"rank":…}`.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Eig {
            re: f64,
            im: f64,
        }
        #[derive(Serialize)]
        struct Line {
            t: usize,
            eigenvalues: Vec<Eig>,
            rank: usize,
        }
        let line = Line {
            t: self.end_time,
            eigenvalues: self.eigenvalues.iter().map(|l| Eig { re: l.re, im: l.im }).collect(),
            rank: self.retained_rank(),
        };
        serde_json::to_string(&line).expect("plain struct serializes")
    }
}

/// Runs one DMD window.
pub fn dmd_step(pair: &SnapshotPair, cfg: &DmdConfig) -> Result<DmdResult, DmdError> {
    let (x, y) = (&pair.x, &pair.y);
    if x.shape() != y.shape() {
        return Err(DmdError::ShapeMismatch {
            x_rows: x.rows(),
            x_cols: x.cols(),
            y_rows: y.rows(),
            y_cols: y.cols(),
        });
    }
    if cfg.rank == 0 {
        return Err(DmdError::ZeroRank);
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(DmdError::NonFinite { end_time: pair.end_time });
    }
    let svd = truncated_svd(x, cfg.rank, cfg.rank_tol);
    let k = svd.rank();
    if k == 0 {
        return Ok(DmdResult {
            eigenvalues: vec![],
            modes: CMatrix::zeros(x.rows(), 0),
            singular_values: vec![],
            end_time: pair.end_time,
            contains_filled: pair.contains_filled,
        });
    }
    // B = Y V Σ⁻¹  (d × k)
    let yv = y.matmul(&svd.v);
    let b = Matrix::from_fn(yv.rows(), k, |i, j| yv[(i, j)] / svd.s[j]);
    let a = svd.u.transpose().matmul(&b);
    let eig = eig_small(&a).map_err(|source| DmdError::Eigen {
        end_time: pair.end_time,
        source,
    })?;
    let modes = b.to_complex().matmul(&eig.vectors);
    Ok(DmdResult {
        eigenvalues: eig.values,
        modes,
        singular_values: svd.s,
        end_time: pair.end_time,
        contains_filled: pair.contains_filled,
    })
}

/// Runs DMD at every ready index of one segment. Windows whose
/// eigendecomposition fails are skipped with a warning.
pub fn dmd_segment(seg: &Segment<'_>, embed: &EmbeddingConfig, cfg: &DmdConfig) -> Vec<DmdResult> {
    let first = seg.start + embed.warmup();
    (first..seg.end())
        .filter_map(|t| {
            let pair = snapshot_matrices(seg, embed, t).ok().flatten()?;
            match dmd_step(&pair, cfg) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("skipping window: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Runs DMD over every segment of a (gap-filled) series.
pub fn dmd_series(series: &GridSeries, embed: &EmbeddingConfig, cfg: &DmdConfig) -> Vec<DmdResult> {
    let segmented = series.segmented();
    segmented.segments().flat_map(|seg| dmd_segment(&seg, embed, cfg)).collect()
}
