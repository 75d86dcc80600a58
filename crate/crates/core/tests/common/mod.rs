//! Independent reference implementations used by the integration tests and
//! the acceptance harness. None of these call into the crate's numerics.

#![allow(dead_code)]

use mealdmd::linalg::Matrix;
use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// `X⁺ = (XᵀX)⁻¹Xᵀ` for full column rank `X`, without any SVD.
pub fn pinv_normal_equations(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x.transpose() * x).try_inverse().expect("full column rank") * x.transpose()
}

/// `X⁺ = C⁺·B⁺` for `X = B·C` with `B` of full column rank and `C` of full
/// row rank.
pub fn pinv_from_factors(b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let c_pinv = c.transpose() * (c * c.transpose()).try_inverse().expect("full row rank");
    c_pinv * pinv_normal_equations(b)
}

/// nalgebra's SVD-based pseudoinverse. Its SVD with vectors loses accuracy
/// when two singular values nearly coincide next to an exact zero, so the
/// tests prefer the constructions above where the structure is known.
pub fn pinv_svd(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().pseudo_inverse(1e-12).expect("pseudoinverse")
}

/// The `k` eigenvalues of largest magnitude of `Y·X⁺`, via the 12×12
/// operator and nalgebra's Schur decomposition.
pub fn operator_eigenvalues(y: &Matrix, x_pinv: &DMatrix<f64>, k: usize) -> Vec<Complex64> {
    let op = to_na(y) * x_pinv;
    let mut eig: Vec<Complex64> = op
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    eig.truncate(k);
    eig
}

/// Largest distance between two eigenvalue multisets after greedy
/// nearest-neighbour matching. `None` if the sizes differ.
pub fn eig_match_error(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))?;
        used[j] = true;
        worst = worst.max(d);
    }
    Some(worst)
}

/// AUC as the fraction of positive/negative pairs ranked correctly, ties
/// counting one half. Quadratic; fine for test sizes.
pub fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let mut twice = 0u64;
    for p in &pos {
        for n in &neg {
            twice += match p.partial_cmp(n).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

/// Brute-force minimizer of a 2-parameter function on `[lo, hi]²`: a full
/// grid, then repeated local grids shrinking by 10× around the best point.
pub fn grid_search_2d(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, final_step: f64) -> (f64, f64) {
    let mut step = (hi - lo) / 400.0;
    let (mut best, mut bx, mut by) = (f64::INFINITY, 0.0, 0.0);
    let mut cx = (lo + hi) / 2.0;
    let mut cy = cx;
    let mut half = 200i64;
    loop {
        for i in -half..=half {
            for j in -half..=half {
                let (x, y) = (cx + i as f64 * step, cy + j as f64 * step);
                if x < lo || x > hi || y < lo || y > hi {
                    continue;
                }
                let v = f(x, y);
                if v < best {
                    (best, bx, by) = (v, x, y);
                }
            }
        }
        if step <= final_step {
            return (bx, by);
        }
        (cx, cy) = (bx, by);
        step /= 10.0;
        half = 20;
    }
}

/// Central-difference gradient.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    let mut p = w.to_vec();
    for i in 0..w.len() {
        p[i] = w[i] + h;
        let up = f(&p);
        p[i] = w[i] - h;
        let down = f(&p);
        p[i] = w[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Mean NLL plus `λ/2·‖w_nonbias‖²`, written out directly from the
/// definition. The last weight is the bias.
pub fn reference_objective(x: &[Vec<f64>], y: &[f64], w: &[f64], reg_lambda: f64) -> f64 {
    let n = x.len() as f64;
    let mut nll = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-z).exp());
        nll -= yi * p.ln() + (1.0 - yi) * (1.0 - p).ln();
    }
    let penalty: f64 = w[..w.len() - 1].iter().map(|v| v * v).sum();
    nll / n + 0.5 * reg_lambda * penalty
}
