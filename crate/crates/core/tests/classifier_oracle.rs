mod common;

use mealdmd::classifier::{fit, gradient, train, ClassifierError, Dataset, EmissionPolicy, OnlineDetector, TrainConfig};
use mealdmd::features::{FeatureMode, FeatureVec, LabeledSample};
use mealdmd::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noisy_dataset(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = f64::from(i % 4 == 0);
        let mut r: Vec<f64> = (0..4)
            .map(|_| 1.0 + 0.2 * label + 0.15 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        r.push(1.0);
        rows.push(r);
        y.push(label);
    }
    (rows, y)
}

#[test]
fn fitted_weights_are_a_local_minimum_of_the_reference_objective() {
    let (rows, y) = noisy_dataset(1, 400);
    let data = Dataset::new(Matrix::from_rows(&rows), y.clone());
    let cfg = TrainConfig::default();
    let w = fit(&data, &cfg, None).unwrap().weights;
    let f0 = common::reference_objective(&rows, &y, &w, cfg.reg_lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let probe: Vec<f64> = w.iter().map(|v| v + 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(common::reference_objective(&rows, &y, &probe, cfg.reg_lambda) >= f0 - 1e-12);
    }
    assert!(mealdmd::linalg::norm(&gradient(&data, &w, cfg.reg_lambda)) < cfg.tol);
}

#[test]
fn bias_is_not_penalized() {
    // all-negative labels except one: without a penalty on the bias the
    // optimum puts the base rate entirely into it
    let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0, 1.0]).collect();
    let y: Vec<f64> = (0..10).map(|i| f64::from(i == 0)).collect();
    let data = Dataset::new(Matrix::from_rows(&rows), y);
    let w = fit(&data, &TrainConfig { reg_lambda: 10.0, ..TrainConfig::default() }, None)
        .unwrap()
        .weights;
    let p = 1.0 / (1.0 + (-w[1]).exp());
    assert!((p - 0.1).abs() < 1e-8);
}

#[test]
fn training_is_deterministic() {
    let (rows, y) = noisy_dataset(4, 300);
    let samples: Vec<LabeledSample> = rows
        .iter()
        .zip(&y)
        .enumerate()
        .map(|(i, (r, &l))| LabeledSample {
            subject: i % 3,
            time: i,
            features: FeatureVec(r.clone()),
            label: l as u8,
        })
        .collect();
    let a = train(&samples, FeatureMode::MaxEig, &TrainConfig::default(), 42).unwrap();
    let b = train(&samples, FeatureMode::MaxEig, &TrainConfig::default(), 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trained_on.subjects, vec![0, 1, 2]);
}

#[test]
fn single_class_is_rejected() {
    let samples: Vec<LabeledSample> = (0..5)
        .map(|i| LabeledSample {
            subject: 0,
            time: i,
            features: FeatureVec(vec![1.0, 1.0]),
            label: 0,
        })
        .collect();
    assert!(matches!(
        train(&samples, FeatureMode::MaxEig, &TrainConfig::default(), 0),
        Err(ClassifierError::NoPositives)
    ));
}

#[test]
fn detector_follows_threshold_and_refractory() {
    let mut d = OnlineDetector::new(EmissionPolicy::Threshold { threshold: 0.5 }, 45, 5);
    let fired: Vec<usize> = [0.2, 0.6, 0.7, 0.1, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9]
        .iter()
        .enumerate()
        .filter_map(|(t, &p)| d.step(p, t).unwrap().map(|e| e.time))
        .collect();
    // 45 min = 9 steps after t=1
    assert_eq!(fired, vec![1, 10]);
    assert!(d.step(0.9, 10).is_err());
}

#[test]
fn hysteresis_rearms_below_low() {
    let mut d = OnlineDetector::new(EmissionPolicy::Hysteresis { low: 0.2, high: 0.4 }, 0, 5);
    let fired: Vec<usize> = [0.5, 0.3, 0.5, 0.1, 0.5]
        .iter()
        .enumerate()
        .filter_map(|(t, &p)| d.step(p, t).unwrap().map(|e| e.time))
        .collect();
    assert_eq!(fired, vec![0, 4]);
}

#[test]
fn finite_difference_gradient_on_random_points() {
    let (rows, y) = noisy_dataset(6, 50);
    let data = Dataset::new(Matrix::from_rows(&rows), y.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g = gradient(&data, &w, 0.1);
        let num = common::numeric_gradient(|v| common::reference_objective(&rows, &y, v, 0.1), &w, 1e-5);
        let scale = mealdmd::linalg::norm(&num).max(1.0);
        for (a, b) in g.iter().zip(&num) {
            assert!((a - b).abs() / scale < 1e-6);
        }
    }
}
