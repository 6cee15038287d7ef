use super::*;
use crate::dataset::SampleRecord;
use crate::kernel::probe::DeviceProbe;
use crate::kernel::{build_input, build_module, ModuleKind};

pub(crate) fn record_with(kind: ModuleKind, sampling: SamplingConfig, mem: u64, util: f64, latency: f64) -> SampleRecord {
    SampleRecord {
        kind,
        sampling,
        measurable: DeviceProbe { available_memory_bytes: mem, utilization: util },
        inferable: compute_inferables(kind, &sampling),
        latency_ms: latency,
        probe_flagged: false,
    }
}

#[test]
fn linear_sample_populates_only_its_fields() {
    let cfg = sample_config(ModuleKind::Linear, 5);
    assert!(cfg.c_out.is_some());
    assert!(cfg.k.is_none());
    assert!(cfg.s.is_none());
    assert!(cfg.l.is_none());
    cfg.validate_ranges(ModuleKind::Linear).unwrap();
}

#[test]
fn sampling_is_seed_deterministic() {
    for kind in ModuleKind::ALL {
        assert_eq!(sample_config(kind, 42), sample_config(kind, 42));
    }
}

#[test]
fn ten_thousand_conv_draws_stay_in_ranges() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let cfg = sample_config_rng(ModuleKind::Conv, &mut rng);
        cfg.validate_ranges(ModuleKind::Conv).unwrap();
        assert!(cfg.k.unwrap() <= cfg.l.unwrap());
    }
}

#[test]
fn inferables_for_conv_example() {
    let cfg = SamplingConfig { n: 1, c_in: 3, c_out: Some(16), k: Some(3), s: Some(1), l: Some(32) };
    let inf = compute_inferables(ModuleKind::Conv, &cfg);
    assert_eq!(inf.n_d, 3072);
    assert_eq!(inf.n_m, Some(448));
}

#[test]
fn inferables_for_tiny_linear() {
    let cfg = SamplingConfig { n: 1, c_in: 1, c_out: Some(1), k: None, s: None, l: None };
    let inf = compute_inferables(ModuleKind::Linear, &cfg);
    assert_eq!(inf.n_d, 1);
    assert_eq!(inf.n_m, Some(2));
}

#[test]
fn pooling_has_no_weight_count() {
    let cfg = SamplingConfig { n: 2, c_in: 4, c_out: None, k: Some(3), s: Some(1), l: Some(8) };
    assert_eq!(compute_inferables(ModuleKind::AvgPool, &cfg).n_m, None);
    assert_eq!(compute_inferables(ModuleKind::MaxPool, &cfg).n_m, None);
}

#[test]
fn composite_weight_counts_sum_constituents() {
    let cfg = SamplingConfig { n: 1, c_in: 3, c_out: Some(16), k: Some(3), s: Some(1), l: Some(32) };
    let conv = compute_inferables(ModuleKind::Conv, &cfg).n_m.unwrap();
    assert_eq!(compute_inferables(ModuleKind::ConvRelu, &cfg).n_m, Some(conv));
    assert_eq!(compute_inferables(ModuleKind::ConvBn, &cfg).n_m, Some(conv + 32));
    assert_eq!(compute_inferables(ModuleKind::ConvBnRelu, &cfg).n_m, Some(conv + 32));

    let bn_cfg = SamplingConfig { n: 1, c_in: 5, c_out: None, k: None, s: None, l: Some(8) };
    assert_eq!(compute_inferables(ModuleKind::Bn, &bn_cfg).n_m, Some(10));
    assert_eq!(compute_inferables(ModuleKind::BnRelu, &bn_cfg).n_m, Some(10));
}

/// Formula-vs-artifact agreement: the inferable weight count must equal the
/// parameter count of the actually constructed module, and the element
/// count must equal the constructed input tensor's length.
#[test]
fn inferables_agree_with_constructed_artifacts() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for kind in ModuleKind::ALL {
        // Bulk check over reduced channel ranges keeps module construction
        // cheap; a handful of full-range draws covers the extremes.
        for i in 0..1_000 {
            let mut cfg = sample_config_rng(kind, &mut rng);
            cfg.c_in = rng.gen_range(3..=24);
            if cfg.c_out.is_some() {
                cfg.c_out = Some(rng.gen_range(3..=24));
            }
            check_agreement(kind, &cfg, i);
        }
        for i in 0..20 {
            let cfg = sample_config_rng(kind, &mut rng);
            check_agreement_shape_only(kind, &cfg, i);
        }
    }
}

fn check_agreement(kind: ModuleKind, cfg: &SamplingConfig, seed: u64) {
    let inf = compute_inferables(kind, cfg);
    let module = build_module(kind, cfg, seed).unwrap();
    match inf.n_m {
        Some(n_m) => assert_eq!(n_m, module.param_count(), "{kind} {cfg:?}"),
        None => assert_eq!(module.param_count(), 0, "{kind} {cfg:?}"),
    }
    let shape = crate::kernel::input_shape_for(kind, cfg);
    assert_eq!(inf.n_d, shape.elements() as u64, "{kind} {cfg:?}");
    // Materialize the input only when it is small enough to be cheap.
    if inf.n_d <= 1_000_000 {
        let input = build_input(kind, cfg, seed ^ 1);
        assert_eq!(inf.n_d, input.data.len() as u64);
    }
}

fn check_agreement_shape_only(kind: ModuleKind, cfg: &SamplingConfig, seed: u64) {
    let inf = compute_inferables(kind, cfg);
    let module = build_module(kind, cfg, seed).unwrap();
    match inf.n_m {
        Some(n_m) => assert_eq!(n_m, module.param_count(), "{kind} {cfg:?}"),
        None => assert_eq!(module.param_count(), 0),
    }
    let shape = crate::kernel::input_shape_for(kind, cfg);
    assert_eq!(inf.n_d, shape.elements() as u64);
}

#[test]
fn feature_order_for_conv_full() {
    assert_eq!(
        feature_names(ModuleKind::Conv, ParamSetVariant::Full),
        vec!["n", "l", "c_in", "c_out", "k", "s", "m_bytes", "util", "n_d", "n_m"]
    );
}

#[test]
fn feature_order_for_bn_raw() {
    assert_eq!(feature_names(ModuleKind::Bn, ParamSetVariant::Raw), vec!["n", "l", "c_in"]);
}

#[test]
fn feature_order_for_pooling_full() {
    assert_eq!(
        feature_names(ModuleKind::AvgPool, ParamSetVariant::Full),
        vec!["n", "c_in", "l", "k", "s", "m_bytes", "util", "n_d"]
    );
}

/// Taxonomy completeness: FULL is exactly the union of the other variants'
/// feature sets, and each drop-variant removes exactly its genre.
#[test]
fn variant_feature_sets_compose_exactly() {
    use std::collections::BTreeSet;
    for kind in ModuleKind::ALL {
        let full: BTreeSet<&str> = feature_names(kind, ParamSetVariant::Full).into_iter().collect();
        let no_infer: BTreeSet<&str> = feature_names(kind, ParamSetVariant::NoInfer).into_iter().collect();
        let no_measure: BTreeSet<&str> =
            feature_names(kind, ParamSetVariant::NoMeasure).into_iter().collect();
        let raw: BTreeSet<&str> = feature_names(kind, ParamSetVariant::Raw).into_iter().collect();
        let inferables: BTreeSet<&str> = inferable_feature_names(kind).iter().copied().collect();
        let measurables: BTreeSet<&str> = MEASURABLE_FEATURES.iter().copied().collect();

        let union: BTreeSet<&str> = no_infer.union(&inferables).copied().collect();
        assert_eq!(union, full, "{kind}: NO_INFER + inferables == FULL");
        let union: BTreeSet<&str> = no_measure.union(&measurables).copied().collect();
        assert_eq!(union, full, "{kind}: NO_MEASURE + measurables == FULL");
        let mut union: BTreeSet<&str> = raw.clone();
        union.extend(measurables.iter().copied());
        union.extend(inferables.iter().copied());
        assert_eq!(union, full, "{kind}: RAW + both genres == FULL");
        assert!(raw.is_subset(&no_infer) && raw.is_subset(&no_measure));
    }
}

#[test]
fn schema_bounds_come_from_given_records() {
    let kind = ModuleKind::Bn;
    let mk = |n: usize, l: usize| {
        record_with(
            kind,
            SamplingConfig { n, c_in: 8, c_out: None, k: None, s: None, l: Some(l) },
            1024,
            0.5,
            1.0,
        )
    };
    let records = vec![mk(1, 8), mk(16, 32), mk(4, 14)];
    let schema = build_schema(kind, ParamSetVariant::Raw, &records).unwrap();
    assert_eq!(schema.feature_names(), vec!["n", "l", "c_in"]);
    assert_eq!(schema.features[0].min, 1.0);
    assert_eq!(schema.features[0].max, 16.0);
    assert_eq!(schema.features[1].min, 8.0);
    assert_eq!(schema.features[1].max, 32.0);
    // Constant column degenerates to equal bounds.
    assert_eq!(schema.features[2].min, 8.0);
    assert_eq!(schema.features[2].max, 8.0);
}

#[test]
fn empty_dataset_is_rejected() {
    assert!(matches!(
        build_schema(ModuleKind::Bn, ParamSetVariant::Full, &[]),
        Err(ParamError::EmptyDataset)
    ));
}

#[test]
fn mixed_kind_records_are_rejected() {
    let bn = record_with(
        ModuleKind::Bn,
        SamplingConfig { n: 1, c_in: 8, c_out: None, k: None, s: None, l: Some(8) },
        1024,
        0.5,
        1.0,
    );
    assert!(matches!(
        build_schema(ModuleKind::Conv, ParamSetVariant::Raw, &[bn]),
        Err(ParamError::KindMismatch { .. })
    ));
}

#[test]
fn vectorize_maps_bounds_to_unit_interval() {
    let kind = ModuleKind::Bn;
    let mk = |n: usize| {
        record_with(
            kind,
            SamplingConfig { n, c_in: 8, c_out: None, k: None, s: None, l: Some(8) },
            1024,
            0.5,
            1.0,
        )
    };
    let records = vec![mk(2), mk(10)];
    let schema = build_schema(kind, ParamSetVariant::Raw, &records).unwrap();
    let lo = vectorize(&records[0], &schema).unwrap();
    let hi = vectorize(&records[1], &schema).unwrap();
    assert_eq!(lo[0], 0.0);
    assert_eq!(hi[0], 1.0);
    // Constant feature columns always map to 0.
    assert_eq!(lo[1], 0.0);
    assert_eq!(hi[1], 0.0);
}

#[test]
fn out_of_range_values_clamp() {
    let kind = ModuleKind::Bn;
    let mk = |n: usize| {
        record_with(
            kind,
            SamplingConfig { n, c_in: 8, c_out: None, k: None, s: None, l: Some(8) },
            1024,
            0.5,
            1.0,
        )
    };
    // Bounds built from n in [4, 10]; a test record with n = 2 clamps to 0.
    let train = vec![mk(4), mk(10)];
    let schema = build_schema(kind, ParamSetVariant::Raw, &train).unwrap();
    let below = vectorize(&mk(2), &schema).unwrap();
    assert_eq!(below[0], 0.0);
    let above = vectorize(&mk(64), &schema).unwrap();
    assert_eq!(above[0], 1.0);
}

#[test]
fn scaling_round_trips_within_tolerance() {
    let (min, max) = (3.0, 17.0);
    for i in 0..=100 {
        let v = min + (max - min) * (i as f64) / 100.0;
        let back = unscale_value(scale_value(v, min, max), min, max);
        assert!((back - v).abs() <= 1e-9);
    }
}

#[test]
fn variant_names_round_trip() {
    for v in ParamSetVariant::ALL {
        assert_eq!(ParamSetVariant::parse(v.name()), Some(v));
    }
    assert_eq!(ParamSetVariant::parse("nope"), None);
}
