use super::*;
use crate::dataset::split_dataset;
use crate::kernel::clock::{FakeClock, MonotonicClock};
use crate::regressors::forest::ForestConfig;
use crate::regressors::tests::synthetic_bn_records;
use crate::regressors::{train_regressor, RegressorId, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn perfect_predictions_have_full_accuracy() {
    let truth = vec![1.0, 2.0, 3.0];
    assert_eq!(pk_accuracy(&truth, &truth, 20.0).unwrap(), 1.0);
    assert_eq!(pk_accuracy(&truth, &truth, 10.0).unwrap(), 1.0);
    assert_eq!(pk_accuracy(&truth, &truth, 0.0).unwrap(), 1.0);
}

#[test]
fn hand_enumerated_error_quartet() {
    // Relative errors of 5%, 15%, 25%, 50%.
    let truth = vec![100.0, 100.0, 100.0, 100.0];
    let pred = vec![105.0, 115.0, 125.0, 150.0];
    assert_eq!(pk_accuracy(&truth, &pred, 20.0).unwrap(), 0.5);
    assert_eq!(pk_accuracy(&truth, &pred, 10.0).unwrap(), 0.25);
}

#[test]
fn exact_boundary_error_counts_as_within() {
    let truth = vec![10.0];
    let pred = vec![12.0];
    assert_eq!(pk_accuracy(&truth, &pred, 20.0).unwrap(), 1.0);
    // Under-prediction at the boundary counts too.
    assert_eq!(pk_accuracy(&truth, &[8.0], 20.0).unwrap(), 1.0);
}

#[test]
fn pk_accuracy_input_validation() {
    assert!(matches!(
        pk_accuracy(&[1.0], &[1.0, 2.0], 20.0),
        Err(MetricsError::LengthMismatch { .. })
    ));
    assert!(matches!(pk_accuracy(&[], &[], 20.0), Err(MetricsError::LengthMismatch { .. })));
    assert!(matches!(pk_accuracy(&[0.0], &[1.0], 20.0), Err(MetricsError::NonPositiveTruth)));
    assert!(matches!(pk_accuracy(&[-1.0], &[1.0], 20.0), Err(MetricsError::NonPositiveTruth)));
}

#[test]
fn mean_predictor_scores_zero_r_squared() {
    let truth = vec![1.0, 2.0, 3.0, 4.0];
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let pred = vec![mean; truth.len()];
    assert_eq!(r_squared(&truth, &pred).unwrap(), 0.0);
}

#[test]
fn perfect_predictor_scores_one() {
    let truth = vec![1.0, 2.0, 3.0, 4.0];
    assert_eq!(r_squared(&truth, &truth).unwrap(), 1.0);
}

/// Construct vectors with an exact RMSE and population sigma, mirroring the
/// negative-R-squared analysis: RMSE 0.0355 against sigma 0.0207 must go
/// negative, RMSE 0.0203 stays positive.
fn vectors_with(rmse_target: f64, sigma: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n % 2 == 0);
    let mean = 1.0;
    let truth: Vec<f64> =
        (0..n).map(|i| if i % 2 == 0 { mean + sigma } else { mean - sigma }).collect();
    let pred: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(i, t)| if i % 2 == 0 { t + rmse_target } else { t - rmse_target })
        .collect();
    (truth, pred)
}

#[test]
fn rmse_above_sigma_turns_r_squared_negative() {
    let (truth, pred) = vectors_with(0.0355, 0.0207, 40);
    assert!((rmse(&truth, &pred).unwrap() - 0.0355).abs() < 1e-12);
    assert!((population_std(&truth) - 0.0207).abs() < 1e-12);
    let r = r_squared(&truth, &pred).unwrap();
    assert!(r < 0.0, "r = {r}");

    // The smaller RMSE stays positive against the same sigma.
    let (truth, pred) = vectors_with(0.0203, 0.0207, 40);
    assert!(r_squared(&truth, &pred).unwrap() > 0.0);
}

#[test]
fn zero_variance_truth_is_rejected() {
    assert!(matches!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(MetricsError::ZeroVariance)));
    assert!(matches!(r_squared(&[2.0], &[2.0]), Err(MetricsError::TooFewSamples { .. })));
}

/// Naive reimplementations used as the metric oracle.
fn naive_pk(truth: &[f64], pred: &[f64], k: f64) -> f64 {
    let mut count = 0usize;
    for i in 0..truth.len() {
        let rel = (pred[i] - truth[i]).abs() / truth[i];
        if rel <= k / 100.0 {
            count += 1;
        }
    }
    count as f64 / truth.len() as f64
}

fn naive_r2(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..truth.len() {
        ss_res += (truth[i] - pred[i]).powi(2);
        ss_tot += (truth[i] - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

#[test]
fn metrics_agree_with_naive_oracle_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1_000 {
        let n = rng.gen_range(2..40);
        let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-1.0..1.0)).collect();
        for k in [10.0, 20.0] {
            let fast = pk_accuracy(&truth, &pred, k).unwrap();
            assert!((fast - naive_pk(&truth, &pred, k)).abs() <= 1e-12);
        }
        if let Ok(fast) = r_squared(&truth, &pred) {
            assert!((fast - naive_r2(&truth, &pred)).abs() <= 1e-12);
            // Negativity identity: r < 0 iff rmse > population sigma.
            let e = rmse(&truth, &pred).unwrap();
            let s = population_std(&truth);
            assert_eq!(fast < 0.0, e > s, "r = {fast}, rmse = {e}, sigma = {s}");
        }
    }
}

#[test]
fn shrinking_errors_never_degrades_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.gen_range(3..30);
        let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-2.0..2.0)).collect();
        let shrunk: Vec<f64> =
            truth.iter().zip(&pred).map(|(t, p)| t + 0.5 * (p - t)).collect();
        assert!(
            pk_accuracy(&truth, &shrunk, 20.0).unwrap() >= pk_accuracy(&truth, &pred, 20.0).unwrap()
        );
        if population_std(&truth) > 0.0 {
            assert!(r_squared(&truth, &shrunk).unwrap() >= r_squared(&truth, &pred).unwrap());
        }
    }
}

#[test]
fn p10_never_exceeds_p20() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.gen_range(2..30);
        let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t * rng.gen_range(0.7..1.3)).collect();
        let p20 = pk_accuracy(&truth, &pred, 20.0).unwrap();
        let p10 = pk_accuracy(&truth, &pred, 10.0).unwrap();
        assert!(p10 <= p20);
    }
}

fn trained(id: RegressorId) -> (crate::regressors::TrainedModel, crate::dataset::DatasetSplit) {
    let records = synthetic_bn_records(120, 31, 0.05);
    let split = split_dataset(records, 8).unwrap();
    let cfg = TrainConfig { epochs: 30, mlp_hidden: vec![16, 8], seed: 2, ..TrainConfig::default() };
    let forest = ForestConfig { tree_count: 10, ..ForestConfig::default() };
    let model = train_regressor(id, crate::kernel::ModuleKind::Bn, &split, &cfg, &forest, None)
        .unwrap()
        .model;
    (model, split)
}

#[test]
fn time_per_sample_is_positive_and_fake_clock_divides_exactly() {
    let (model, split) = trained(RegressorId::lr());
    let xs: Vec<Vec<f64>> = split
        .test
        .iter()
        .map(|r| crate::params::vectorize(r, &model.schema).unwrap())
        .collect();
    let real = time_per_sample(&model, &xs, 1, 3, &MonotonicClock::new()).unwrap();
    assert!(real > 0.0);

    // Every timed pass takes exactly 5 ms on the scripted clock.
    let clock = FakeClock::with_steps_ms(&[5.0]);
    let tps = time_per_sample(&model, &xs, 0, 3, &clock).unwrap();
    assert_eq!(tps, 5.0 / xs.len() as f64);
}

#[test]
fn time_per_sample_requires_ten_inputs() {
    let (model, split) = trained(RegressorId::lr());
    let xs: Vec<Vec<f64>> = split
        .test
        .iter()
        .take(5)
        .map(|r| crate::params::vectorize(r, &model.schema).unwrap())
        .collect();
    assert!(matches!(
        time_per_sample(&model, &xs, 1, 3, &MonotonicClock::new()),
        Err(MetricsError::TooFewSamples { .. })
    ));
}

#[test]
fn lr_predicts_faster_than_medn() {
    use crate::regressors::MednVariant;
    let (lr, split) = trained(RegressorId::lr());
    let medn = {
        let cfg = TrainConfig { epochs: 5, seed: 2, ..TrainConfig::default() };
        train_regressor(
            RegressorId::medn(MednVariant::Full),
            crate::kernel::ModuleKind::Bn,
            &split,
            &cfg,
            &ForestConfig::default(),
            None,
        )
        .unwrap()
        .model
    };
    let xs: Vec<Vec<f64>> = split
        .test
        .iter()
        .map(|r| crate::params::vectorize(r, &lr.schema).unwrap())
        .collect();
    let xs_medn: Vec<Vec<f64>> = split
        .test
        .iter()
        .map(|r| crate::params::vectorize(r, &medn.schema).unwrap())
        .collect();
    let clock = MonotonicClock::new();
    let t_lr = time_per_sample(&lr, &xs, 2, 5, &clock).unwrap();
    let t_medn = time_per_sample(&medn, &xs_medn, 2, 5, &clock).unwrap();
    assert!(
        t_lr < t_medn,
        "closed-form predict ({t_lr} ms) should beat the deep model ({t_medn} ms)"
    );
}

#[test]
fn evaluate_packages_all_metrics() {
    let (model, split) = trained(RegressorId::lr());
    let result = evaluate(&model, &split, &MonotonicClock::new()).unwrap();
    assert_eq!(result.module, crate::kernel::ModuleKind::Bn);
    assert_eq!(result.regressor, RegressorId::lr());
    assert!(result.acc10 <= result.acc);
    assert!(result.acc <= 1.0 && result.acc >= 0.0);
    assert!(result.r <= 1.0);
    assert!(result.tps_ms > 0.0);
    assert!(result.size_kb > 0.0);
    assert!(result.rmse >= 0.0);
}

#[test]
fn evaluate_perfect_model_scores_ones() {
    // Noise-free affine latency: the closed form is essentially exact.
    let records = synthetic_bn_records(100, 37, 0.0);
    let split = split_dataset(records, 9).unwrap();
    let cfg = TrainConfig::default();
    let model = train_regressor(
        RegressorId::lr(),
        crate::kernel::ModuleKind::Bn,
        &split,
        &cfg,
        &ForestConfig::default(),
        None,
    )
    .unwrap()
    .model;
    let result = evaluate(&model, &split, &MonotonicClock::new()).unwrap();
    assert_eq!(result.acc, 1.0);
    assert_eq!(result.acc10, 1.0);
    assert!(result.r > 0.999999, "r = {}", result.r);
}

#[test]
fn evaluate_mean_predictor_scores_zero_r() {
    // A depth-0 single tree without bootstrap predicts the training mean.
    let records = synthetic_bn_records(100, 41, 0.2);
    let split = split_dataset(records, 10).unwrap();
    let forest = ForestConfig { tree_count: 1, max_depth: Some(0), bootstrap: false, ..ForestConfig::default() };
    let model = train_regressor(
        RegressorId::rf(),
        crate::kernel::ModuleKind::Bn,
        &split,
        &TrainConfig::default(),
        &forest,
        None,
    )
    .unwrap()
    .model;
    let result = evaluate(&model, &split, &MonotonicClock::new()).unwrap();
    // The train mean is near, not exactly at, the test mean; r lands near 0
    // and must never exceed it meaningfully.
    assert!(result.r <= 0.05, "r = {}", result.r);
    // Accuracy equals a direct recount of within-20% samples.
    let truth: Vec<f64> = split.test.iter().map(|r| r.latency_ms).collect();
    let pred: Vec<f64> = split
        .test
        .iter()
        .map(|r| model.predict_record(r).unwrap())
        .collect();
    assert_eq!(result.acc, naive_pk(&truth, &pred, 20.0));
}
