mod common;

use mealdmd::dmd::{dmd_series, dmd_step, DmdConfig, StreamingDmd};
use mealdmd::embedding::{EmbeddingConfig, SnapshotPair};
use mealdmd::ingest::GridSeries;
use mealdmd::linalg::Matrix;
use mealdmd::synth::{simulate_subject, subject_params, subject_seed, JitterConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn pair(x: Matrix, y: Matrix) -> SnapshotPair {
    SnapshotPair {
        x,
        y,
        end_time: 0,
        contains_filled: false,
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

#[test]
fn rank_deficient_windows_match_pseudoinverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        // X of rank 2: third column a combination of the first two
        let mut x = random(&mut rng, 12, 3);
        let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for i in 0..12 {
            x[(i, 2)] = a * x[(i, 0)] + b * x[(i, 1)];
        }
        let y = random(&mut rng, 12, 3);
        let got = dmd_step(&pair(x.clone(), y.clone()), &DmdConfig::default()).unwrap();
        assert_eq!(got.retained_rank(), 2);
        let basis = common::to_na(&x).columns(0, 2).into_owned();
        let mix = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 0.0, a, 0.0, 1.0, b]);
        let want = common::operator_eigenvalues(&y, &common::pinv_from_factors(&basis, &mix), 2);
        let scale = want[0].norm();
        let err = common::eig_match_error(&got.eigenvalues, &want).unwrap() / scale;
        assert!(err < 1e-8, "{:?} vs {:?}", got.eigenvalues, want);
    }
}

#[test]
fn modes_are_eigenvectors_of_the_fitted_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x = random(&mut rng, 12, 3);
        let y = random(&mut rng, 12, 3);
        let r = dmd_step(&pair(x.clone(), y.clone()), &DmdConfig::default()).unwrap();
        let op = common::to_na(&y) * common::pinv_normal_equations(&common::to_na(&x));
        for (k, lambda) in r.eigenvalues.iter().enumerate() {
            let phi: Vec<Complex64> = (0..12).map(|i| r.modes[(i, k)]).collect();
            let norm: f64 = phi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let mut resid = 0.0;
            for i in 0..12 {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, p) in phi.iter().enumerate() {
                    acc += op[(i, j)] * p;
                }
                resid += (acc - lambda * phi[i]).norm_sqr();
            }
            assert!(resid.sqrt() <= 1e-8 * norm * lambda.norm().max(1.0), "mode {k}");
        }
    }
}

#[test]
fn eigenvalues_are_sorted_with_conjugates_adjacent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let r = dmd_step(&pair(random(&mut rng, 12, 3), random(&mut rng, 12, 3)), &DmdConfig::default()).unwrap();
        let mags: Vec<f64> = r.magnitudes().collect();
        assert!(mags.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        for (i, l) in r.eigenvalues.iter().enumerate() {
            if l.im.abs() > 1e-9 {
                let partner = if l.im > 0.0 { i + 1 } else { i - 1 };
                assert!((r.eigenvalues[partner] - l.conj()).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn synthetic_series_windows_match_oracle() {
    let p = subject_params(1, 3, 2.0);
    let s = simulate_subject(&p, 1, subject_seed(1, 3), &JitterConfig::default()).unwrap();
    let embed = EmbeddingConfig::default();
    let values: Vec<f64> = s.glucose.iter().map(|g| g.unwrap()).collect();
    for r in dmd_series(&s, &embed, &DmdConfig::default()).iter().step_by(7) {
        let w = &values[r.end_time + 1 - embed.window_len()..=r.end_time];
        let x = Matrix::from_fn(12, 3, |i, j| w[i + j]);
        let y = Matrix::from_fn(12, 3, |i, j| w[i + j + 1]);
        let want = common::operator_eigenvalues(&y, &common::pinv_svd(&common::to_na(&x)), r.retained_rank());
        let err = common::eig_match_error(&r.eigenvalues, &want).unwrap();
        assert!(err <= 1e-8 * want[0].norm(), "t={} err={err:e}", r.end_time);
    }
}

#[test]
fn streaming_is_bit_identical_to_batch() {
    let p = subject_params(9, 0, 2.0);
    let s = simulate_subject(&p, 2, subject_seed(9, 0), &JitterConfig::default()).unwrap();
    let embed = EmbeddingConfig::default();
    let batch = dmd_series(&s, &embed, &DmdConfig::default());
    let mut stream = StreamingDmd::new(embed, DmdConfig::default());
    let mut out = Vec::new();
    for (t, g) in s.glucose.iter().enumerate() {
        out.extend(stream.push(g.unwrap(), t).unwrap());
    }
    assert_eq!(out, batch);
}

#[test]
fn short_series_yields_no_windows() {
    let s = GridSeries::from_values(0, 5, &[100.0; 14]);
    assert!(dmd_series(&s, &EmbeddingConfig::default(), &DmdConfig::default()).is_empty());
    let s = GridSeries::from_values(0, 5, &[100.0; 15]);
    assert_eq!(dmd_series(&s, &EmbeddingConfig::default(), &DmdConfig::default()).len(), 1);
}
