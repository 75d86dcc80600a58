//! Eigendecomposition of the small compressed DMD operator.
//!
//! For `k ≤ 3` the eigenvalues come from the characteristic polynomial in
//! closed form, polished with Newton steps on the polynomial. Any pair that
//! misses the residual bound falls back to Hessenberg reduction plus the
//! Francis double-shift QR iteration, which is also the route for `k > 3`.
//! Eigenvectors are obtained by inverse iteration.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{cnorm, complex_solve, hessenberg, hessenberg_eigenvalues, CMatrix, Matrix};

/// Residual bound (relative to `‖A‖_F`) every returned eigenpair satisfies.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Stricter bound the closed-form route must meet before its answer is kept.
const CLOSED_FORM_TOL: f64 = 1e-11;
const QR_MAX_ITER: usize = 60;
const INVERSE_ITERATIONS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EigError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// Sorted by descending magnitude; conjugate pairs adjacent, positive
    /// imaginary part first.
    pub values: Vec<Complex64>,
    /// Column `i` is the unit eigenvector for `values[i]`, phased so its
    /// largest-magnitude entry is real and positive.
    pub vectors: CMatrix,
}

impl Eigen {
    /// Largest residual `‖A w − λ w‖ / ‖A‖_F` over all pairs.
    pub fn max_relative_residual(&self, a: &Matrix) -> f64 {
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        let ac = a.to_complex();
        (0..self.values.len())
            .map(|i| residual(&ac, self.values[i], &self.vectors.column(i)) / scale)
            .fold(0.0, f64::max)
    }
}

/// Total order used for eigenvalue lists: magnitude descending, then real
/// part descending, then imaginary part descending.
pub fn eigen_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Eigenvalues and eigenvectors of a small real square matrix.
pub fn eig_small(a: &Matrix) -> Result<Eigen, EigError> {
    let (n, m) = a.shape();
    if n != m {
        return Err(EigError::NotSquare(n, m));
    }
    if !a.is_finite() {
        return Err(EigError::NonFinite);
    }
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    if n <= 3 {
        if let Some(values) = closed_form_eigenvalues(a) {
            let eig = with_vectors(a, values);
            if eig.max_relative_residual(a) <= CLOSED_FORM_TOL {
                return Ok(eig);
            }
        }
    }
    let values = qr_eigenvalues(a).ok_or(EigError::NoConvergence)?;
    Ok(with_vectors(a, values))
}

/// Eigenvalues by Hessenberg reduction and shifted QR.
pub fn qr_eigenvalues(a: &Matrix) -> Option<Vec<Complex64>> {
    let mut values = hessenberg_eigenvalues(&hessenberg(a), QR_MAX_ITER)?;
    canonicalize_pairs(&mut values);
    Some(values)
}

/// Closed-form eigenvalues for `n ≤ 3`; `None` for larger matrices.
pub fn closed_form_eigenvalues(a: &Matrix) -> Option<Vec<Complex64>> {
    let mut values = match a.rows() {
        1 => vec![Complex64::new(a[(0, 0)], 0.0)],
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            // discriminant written to avoid cancellation in tr² − 4 det
            let half_gap = 0.5 * (a[(0, 0)] - a[(1, 1)]);
            let disc = half_gap * half_gap + a[(0, 1)] * a[(1, 0)];
            quadratic_roots(tr, det, disc).to_vec()
        }
        3 => {
            let (b, c, d) = char_poly3(a);
            let mut roots = cubic_roots(b, c, d);
            for r in roots.iter_mut() {
                *r = newton_polish(*r, b, c, d);
            }
            roots.to_vec()
        }
        _ => return None,
    };
    canonicalize_pairs(&mut values);
    Some(values)
}

/// Coefficients `(b, c, d)` of the monic characteristic polynomial
/// `z³ + b z² + c z + d` of a 3×3 matrix.
pub fn char_poly3(a: &Matrix) -> (f64, f64, f64) {
    let tr = a[(0, 0)] + a[(1, 1)] + a[(2, 2)];
    let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)] + a[(0, 0)] * a[(2, 2)] - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)]
        - a[(1, 2)] * a[(2, 1)];
    let det = a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
        - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
        + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]);
    (-tr, minors, -det)
}

/// Roots of `z² − tr z + det` given `disc = tr²/4 − det`.
fn quadratic_roots(tr: f64, det: f64, disc: f64) -> [Complex64; 2] {
    let half = 0.5 * tr;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let big = half + if half >= 0.0 { sq } else { -sq };
        let small = if big != 0.0 { det / big } else { half - sq };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let sq = (-disc).sqrt();
        [Complex64::new(half, sq), Complex64::new(half, -sq)]
    }
}

/// Roots of `z³ + b z² + c z + d` by the trigonometric / Cardano formulas.
fn cubic_roots(b: f64, c: f64, d: f64) -> [Complex64; 3] {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if p == 0.0 && q == 0.0 {
        let r = Complex64::new(-shift, 0.0);
        return [r; 3];
    }
    if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-q / 2.0 - q.signum() * sq).cbrt();
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        let real = u + v - shift;
        let re = -(u + v) / 2.0 - shift;
        let im = (3.0f64).sqrt() / 2.0 * (u - v);
        [
            Complex64::new(real, 0.0),
            Complex64::new(re, im.abs()),
            Complex64::new(re, -im.abs()),
        ]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
        [0.0, 1.0, 2.0].map(|k| Complex64::new(m * (phi - two_pi_3 * k).cos() - shift, 0.0))
    }
}

fn poly3(z: Complex64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let val = ((z + b) * z + c) * z + d;
    let der = (z * 3.0 + 2.0 * b) * z + c;
    (val, der)
}

/// A few Newton steps on the cubic, keeping each step only if it reduces
/// the polynomial value. Real roots stay real.
fn newton_polish(z0: Complex64, b: f64, c: f64, d: f64) -> Complex64 {
    let mut z = z0;
    let mut fz = poly3(z, b, c, d).0.norm();
    for _ in 0..4 {
        let (val, der) = poly3(z, b, c, d);
        if der.norm() == 0.0 || val.norm() == 0.0 {
            break;
        }
        let mut next = z - val / der;
        if z.im == 0.0 {
            next.im = 0.0;
        }
        let fnext = poly3(next, b, c, d).0.norm();
        if fnext < fz {
            z = next;
            fz = fnext;
        } else {
            break;
        }
    }
    z
}

/// Makes complex eigenvalues come in exact conjugate pairs and sorts.
fn canonicalize_pairs(values: &mut Vec<Complex64>) {
    let mut out = Vec::with_capacity(values.len());
    let mut used = vec![false; values.len()];
    for i in 0..values.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = values[i];
        if z.im == 0.0 {
            out.push(z);
            continue;
        }
        // partner: closest unused value to conj(z)
        let partner = (0..values.len())
            .filter(|&j| !used[j])
            .min_by(|&x, &y| (values[x] - z.conj()).norm().total_cmp(&(values[y] - z.conj()).norm()));
        match partner {
            Some(j) if values[j].im.signum() != z.im.signum() => {
                used[j] = true;
                let re = 0.5 * (z.re + values[j].re);
                let im = 0.5 * (z.im.abs() + values[j].im.abs());
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            _ => out.push(Complex64::new(z.re, 0.0)),
        }
    }
    out.sort_by(eigen_order);
    *values = out;
}

fn residual(a: &CMatrix, lambda: Complex64, w: &[Complex64]) -> f64 {
    let n = w.len();
    let r: Vec<Complex64> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] * w[j]).sum::<Complex64>() - lambda * w[i])
        .collect();
    cnorm(&r)
}

fn normalize_phase(w: &mut [Complex64]) {
    let nrm = cnorm(w);
    if nrm == 0.0 {
        return;
    }
    let pivot = w
        .iter()
        .copied()
        .fold((0.0f64, Complex64::new(1.0, 0.0)), |(best, p), x| {
            if x.norm() > best * (1.0 + 1e-12) {
                (x.norm(), x)
            } else {
                (best, p)
            }
        })
        .1;
    let phase = pivot.conj() / pivot.norm();
    for x in w.iter_mut() {
        *x = *x * phase / nrm;
    }
}

/// Computes eigenvectors for the given (sorted, paired) eigenvalues.
fn with_vectors(a: &Matrix, values: Vec<Complex64>) -> Eigen {
    let n = a.rows();
    let ac = a.to_complex();
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let floor = f64::EPSILON * scale;
    let mut vectors = CMatrix::zeros(n, n);
    let mut done: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut i = 0;
    while i < values.len() {
        let lambda = values[i];
        let is_pair_lead = lambda.im > 0.0 && i + 1 < values.len() && values[i + 1] == lambda.conj();
        let mut shifted = ac.clone();
        for d in 0..n {
            shifted[(d, d)] -= lambda;
        }
        // earlier vectors for (numerically) the same eigenvalue
        let same: Vec<usize> = (0..i)
            .filter(|&j| (values[j] - lambda).norm() <= 1e-8 * scale)
            .collect();
        let start_axis = same.len() % n;
        let mut w: Vec<Complex64> = (0..n)
            .map(|d| {
                let base = if d == start_axis { 1.0 } else { 0.5 / (1.0 + d as f64) };
                Complex64::new(base, 0.0)
            })
            .collect();
        let mut best = w.clone();
        for _ in 0..INVERSE_ITERATIONS {
            let mut y = complex_solve(&shifted, &w, floor);
            for &j in &same {
                let proj: Complex64 = done[j].iter().zip(&y).map(|(p, q)| p.conj() * q).sum();
                for (yd, pd) in y.iter_mut().zip(&done[j]) {
                    *yd -= proj * pd;
                }
            }
            let nrm = cnorm(&y);
            if nrm == 0.0 || !nrm.is_finite() {
                break;
            }
            w = y.iter().map(|v| v / nrm).collect();
            best = w.clone();
        }
        if !same.is_empty() && residual(&ac, lambda, &best) > RESIDUAL_TOL * scale {
            // defective eigenvalue: reuse the first vector
            best = done[same[0]].clone();
        }
        normalize_phase(&mut best);
        for d in 0..n {
            vectors[(d, i)] = best[d];
        }
        done.push(best.clone());
        if is_pair_lead {
            let conj: Vec<Complex64> = best.iter().map(|v| v.conj()).collect();
            for d in 0..n {
                vectors[(d, i + 1)] = conj[d];
            }
            done.push(conj);
            i += 2;
        } else {
            i += 1;
        }
    }
    Eigen { values, vectors }
}
