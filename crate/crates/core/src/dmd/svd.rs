//! Rank-truncated thin SVD by one-sided Jacobi rotations.
//!
//! Rotating the columns of `M` directly (rather than diagonalizing `MᵀM`)
//! keeps small singular values accurate to roughly machine precision
//! relative to `σ_max`, which is what makes the numerical-rank cut at
//! `rank_tol · σ_max` meaningful for exactly rank-deficient windows.

use crate::linalg::{dot, norm, Matrix};

/// Default relative tolerance below which singular values are discarded.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// Descending, strictly positive.
    pub s: Vec<f64>,
    /// `cols × k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U · diag(S) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.rank();
        let us = Matrix::from_fn(self.u.rows(), k, |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose())
    }
}

/// Top-`k` singular triplets of `m`, where `k = min(rank, numerical rank)`
/// and the numerical rank counts singular values above `rank_tol · σ_max`.
///
/// Each column of `U` is signed so its largest-magnitude entry is positive
/// (the matching `V` column is flipped with it). An all-zero input yields
/// `k = 0`.
pub fn truncated_svd(m: &Matrix, rank: usize, rank_tol: f64) -> SvdResult {
    let (rows, cols) = m.shape();
    // work column-major: a[j] is column j
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    // v[j] is column j of V
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<(f64, usize)> = a.iter().enumerate().map(|(j, col)| (norm(col), j)).collect();
    // descending, index breaks ties so the order is deterministic
    sigma.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let s_max = sigma.first().map_or(0.0, |s| s.0);
    let k = if s_max > 0.0 && s_max.is_finite() {
        sigma
            .iter()
            .take(rank.min(cols).min(rows.max(1)))
            .take_while(|(s, _)| *s > rank_tol * s_max)
            .count()
    } else {
        0
    };

    let mut u_out = Matrix::zeros(rows, k);
    let mut v_out = Matrix::zeros(cols, k);
    let mut s_out = Vec::with_capacity(k);
    for (out_j, &(s, j)) in sigma.iter().take(k).enumerate() {
        let ucol: Vec<f64> = a[j].iter().map(|x| x / s).collect();
        let vcol = &v[j];
        // largest-magnitude entry of U positive; first such entry on ties
        let pivot = ucol
            .iter()
            .copied()
            .fold((0.0f64, 0.0f64), |(best, val), x| if x.abs() > best { (x.abs(), x) } else { (best, val) })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            u_out[(i, out_j)] = sign * ucol[i];
        }
        for i in 0..cols {
            v_out[(i, out_j)] = sign * vcol[i];
        }
        s_out.push(s);
    }
    SvdResult {
        u: u_out,
        s: s_out,
        v: v_out,
    }
}

/// Rotates column vectors `p < q` in place.
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
