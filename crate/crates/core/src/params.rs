//! Parameter taxonomy per module kind: sampling parameters drawn from fixed
//! ranges, measurable device-state parameters, and inferable parameters
//! computed from the others. Also builds the ordered, min-max-scaled feature
//! vectors the regressors consume.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SampleRecord;
use crate::kernel::ModuleKind;

/// Admissible kernel sizes.
pub const KERNEL_SIZES: [usize; 5] = [1, 3, 5, 7, 9];
/// Admissible strides.
pub const STRIDES: [usize; 3] = [1, 2, 4];
/// Admissible input heights/widths.
pub const INPUT_SIZES: [usize; 10] = [224, 112, 56, 32, 28, 27, 14, 13, 8, 7];
/// Batch size range (inclusive).
pub const BATCH_RANGE: (usize, usize) = (1, 64);
/// Channel count range (inclusive) used when sampling. Smaller channel
/// counts are structurally valid and appear in unit tests.
pub const CHANNEL_RANGE: (usize, usize) = (3, 512);

/// Sampled shape parameters for one module. Fields not applicable to a kind
/// are `None` for that kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n: usize,
    pub c_in: usize,
    pub c_out: Option<usize>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub l: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("field `{field}` {problem} for kind {kind}")]
    FieldProblem { kind: ModuleKind, field: &'static str, problem: String },
    #[error("kernel size {k} exceeds spatial size {l}")]
    KernelExceedsSpatial { k: usize, l: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record kind {got} does not match schema kind {expected}")]
    KindMismatch { expected: ModuleKind, got: ModuleKind },
    #[error("feature `{0}` missing from record")]
    MissingFeature(String),
}

impl SamplingConfig {
    /// Structural validity for the kind: required fields present, forbidden
    /// fields absent, all counts >= 1, and k <= l. Membership in the
    /// sampling ranges/enumerations is the sampler's contract, checked by
    /// [`Self::validate_ranges`]; unit tests construct smaller shapes.
    pub fn validate(&self, kind: ModuleKind) -> Result<(), ParamError> {
        let field_err = |field: &'static str, problem: &str| ParamError::FieldProblem {
            kind,
            field,
            problem: problem.to_string(),
        };
        if self.n < 1 {
            return Err(field_err("n", "must be >= 1"));
        }
        if self.c_in < 1 {
            return Err(field_err("c_in", "must be >= 1"));
        }
        let needs_c_out = kind.is_convolutional() || kind == ModuleKind::Linear;
        let needs_window = kind.is_convolutional() || kind.is_pooling();
        let needs_l = kind.takes_spatial_input();

        match (needs_c_out, self.c_out) {
            (true, None) => return Err(field_err("c_out", "is required")),
            (true, Some(c)) if c < 1 => return Err(field_err("c_out", "must be >= 1")),
            (false, Some(_)) => return Err(field_err("c_out", "is not applicable")),
            _ => {}
        }
        match (needs_window, self.k) {
            (true, None) => return Err(field_err("k", "is required")),
            (true, Some(k)) if k < 1 => return Err(field_err("k", "must be >= 1")),
            (false, Some(_)) => return Err(field_err("k", "is not applicable")),
            _ => {}
        }
        match (needs_window, self.s) {
            (true, None) => return Err(field_err("s", "is required")),
            (true, Some(s)) if s < 1 => return Err(field_err("s", "must be >= 1")),
            (false, Some(_)) => return Err(field_err("s", "is not applicable")),
            _ => {}
        }
        match (needs_l, self.l) {
            (true, None) => return Err(field_err("l", "is required")),
            (true, Some(l)) if l < 1 => return Err(field_err("l", "must be >= 1")),
            (false, Some(_)) => return Err(field_err("l", "is not applicable")),
            _ => {}
        }
        if let (Some(k), Some(l)) = (self.k, self.l) {
            if k > l {
                return Err(ParamError::KernelExceedsSpatial { k, l });
            }
        }
        Ok(())
    }

    /// Full range validity: structural validity plus membership in the
    /// sampling ranges and enumerations (n in [1,64], channels in [3,512],
    /// k in {1,3,5,7,9}, s in {1,2,4}, l in the admissible input sizes).
    pub fn validate_ranges(&self, kind: ModuleKind) -> Result<(), ParamError> {
        self.validate(kind)?;
        let field_err = |field: &'static str, problem: &str| ParamError::FieldProblem {
            kind,
            field,
            problem: problem.to_string(),
        };
        if self.n > BATCH_RANGE.1 {
            return Err(field_err("n", "must be <= 64"));
        }
        if self.c_in < CHANNEL_RANGE.0 || self.c_in > CHANNEL_RANGE.1 {
            return Err(field_err("c_in", "must be in [3, 512]"));
        }
        if let Some(c) = self.c_out {
            if c < CHANNEL_RANGE.0 || c > CHANNEL_RANGE.1 {
                return Err(field_err("c_out", "must be in [3, 512]"));
            }
        }
        if let Some(k) = self.k {
            if !KERNEL_SIZES.contains(&k) {
                return Err(field_err("k", "must be one of {1,3,5,7,9}"));
            }
        }
        if let Some(s) = self.s {
            if !STRIDES.contains(&s) {
                return Err(field_err("s", "must be one of {1,2,4}"));
            }
        }
        if let Some(l) = self.l {
            if !INPUT_SIZES.contains(&l) {
                return Err(field_err("l", "must be one of the admissible input sizes"));
            }
        }
        Ok(())
    }
}

/// Draw one config for the kind with independent uniform draws per field,
/// rejecting combinations with k > l.
pub fn sample_config_rng(kind: ModuleKind, rng: &mut impl Rng) -> SamplingConfig {
    loop {
        let n = rng.gen_range(BATCH_RANGE.0..=BATCH_RANGE.1);
        let c_in = rng.gen_range(CHANNEL_RANGE.0..=CHANNEL_RANGE.1);
        let needs_c_out = kind.is_convolutional() || kind == ModuleKind::Linear;
        let needs_window = kind.is_convolutional() || kind.is_pooling();
        let needs_l = kind.takes_spatial_input();
        let cfg = SamplingConfig {
            n,
            c_in,
            c_out: needs_c_out.then(|| rng.gen_range(CHANNEL_RANGE.0..=CHANNEL_RANGE.1)),
            k: needs_window.then(|| KERNEL_SIZES[rng.gen_range(0..KERNEL_SIZES.len())]),
            s: needs_window.then(|| STRIDES[rng.gen_range(0..STRIDES.len())]),
            l: needs_l.then(|| INPUT_SIZES[rng.gen_range(0..INPUT_SIZES.len())]),
        };
        match (cfg.k, cfg.l) {
            (Some(k), Some(l)) if k > l => continue,
            _ => return cfg,
        }
    }
}

/// Seeded one-shot form of [`sample_config_rng`].
pub fn sample_config(kind: ModuleKind, rng_seed: u64) -> SamplingConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_config_rng(kind, &mut rng)
}

/// Inferable parameters: input element count and module weight-parameter
/// count. Pooling kinds carry no weights, so `n_m` is absent there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inferables {
    pub n_d: u64,
    pub n_m: Option<u64>,
}

/// Compute the inferable parameters from a sampled config.
pub fn compute_inferables(kind: ModuleKind, cfg: &SamplingConfig) -> Inferables {
    let n = cfg.n as u64;
    let c_in = cfg.c_in as u64;
    let n_d = if kind.takes_spatial_input() {
        let l = cfg.l.unwrap() as u64;
        n * c_in * l * l
    } else {
        n * c_in
    };
    let n_m = match kind {
        ModuleKind::AvgPool | ModuleKind::MaxPool => None,
        ModuleKind::Bn | ModuleKind::BnRelu => Some(2 * c_in),
        ModuleKind::Linear => {
            let c_out = cfg.c_out.unwrap() as u64;
            Some(c_out * c_in + c_out)
        }
        ModuleKind::Conv | ModuleKind::ConvRelu => {
            let c_out = cfg.c_out.unwrap() as u64;
            let k = cfg.k.unwrap() as u64;
            Some(c_out * c_in * k * k + c_out)
        }
        ModuleKind::ConvBn | ModuleKind::ConvBnRelu => {
            let c_out = cfg.c_out.unwrap() as u64;
            let k = cfg.k.unwrap() as u64;
            Some(c_out * c_in * k * k + c_out + 2 * c_out)
        }
    };
    Inferables { n_d, n_m }
}

/// Which feature subset a regressor trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamSetVariant {
    /// Sampling + measurable + inferable.
    Full,
    /// Drops the inferable parameters.
    NoInfer,
    /// Drops the measurable parameters.
    NoMeasure,
    /// Sampling parameters only.
    Raw,
}

impl ParamSetVariant {
    pub const ALL: [ParamSetVariant; 4] =
        [ParamSetVariant::Full, ParamSetVariant::NoInfer, ParamSetVariant::NoMeasure, ParamSetVariant::Raw];

    pub fn name(&self) -> &'static str {
        match self {
            ParamSetVariant::Full => "FULL",
            ParamSetVariant::NoInfer => "NO_INFER",
            ParamSetVariant::NoMeasure => "NO_MEASURE",
            ParamSetVariant::Raw => "RAW",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.name() == name)
    }
}

impl Serialize for ParamSetVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ParamSetVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        ParamSetVariant::parse(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown param set variant `{name}`")))
    }
}

/// Sampling feature names in canonical (taxonomy table) order for the kind.
/// Composite kinds use their dominant constituent's row.
pub fn sampling_feature_names(kind: ModuleKind) -> &'static [&'static str] {
    match kind {
        ModuleKind::AvgPool | ModuleKind::MaxPool => &["n", "c_in", "l", "k", "s"],
        ModuleKind::Bn | ModuleKind::BnRelu => &["n", "l", "c_in"],
        ModuleKind::Conv | ModuleKind::ConvBn | ModuleKind::ConvBnRelu | ModuleKind::ConvRelu => {
            &["n", "l", "c_in", "c_out", "k", "s"]
        }
        ModuleKind::Linear => &["n", "c_in", "c_out"],
    }
}

/// Measurable feature names (device state at measurement time).
pub const MEASURABLE_FEATURES: [&str; 2] = ["m_bytes", "util"];

/// Inferable feature names for the kind.
pub fn inferable_feature_names(kind: ModuleKind) -> &'static [&'static str] {
    if kind.is_pooling() {
        &["n_d"]
    } else {
        &["n_d", "n_m"]
    }
}

/// Ordered feature names for a (kind, variant) pair: sampling fields in
/// canonical order, then measurables, then inferables, restricted to the
/// variant's subset.
pub fn feature_names(kind: ModuleKind, variant: ParamSetVariant) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = sampling_feature_names(kind).to_vec();
    if matches!(variant, ParamSetVariant::Full | ParamSetVariant::NoInfer) {
        names.extend(MEASURABLE_FEATURES);
    }
    if matches!(variant, ParamSetVariant::Full | ParamSetVariant::NoMeasure) {
        names.extend(inferable_feature_names(kind));
    }
    names
}

/// One feature with its min-max scaling bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Ordered feature list with scaling bounds for a (kind, variant) pair.
/// Bounds come from the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub kind: ModuleKind,
    pub variant: ParamSetVariant,
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }
}

/// Build a schema for the kind/variant with per-feature min/max bounds taken
/// over the given records (pass the training split only).
pub fn build_schema(
    kind: ModuleKind,
    variant: ParamSetVariant,
    train_records: &[SampleRecord],
) -> Result<FeatureSchema, ParamError> {
    if train_records.is_empty() {
        return Err(ParamError::EmptyDataset);
    }
    let names = feature_names(kind, variant);
    let mut features = Vec::with_capacity(names.len());
    for name in names {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for record in train_records {
            if record.kind != kind {
                return Err(ParamError::KindMismatch { expected: kind, got: record.kind });
            }
            let v = record
                .feature(name)
                .ok_or_else(|| ParamError::MissingFeature(name.to_string()))?;
            min = min.min(v);
            max = max.max(v);
        }
        features.push(FeatureSpec { name: name.to_string(), min, max });
    }
    Ok(FeatureSchema { kind, variant, features })
}

/// Scale a raw value to [0, 1] per the feature's bounds. Out-of-range values
/// clamp; degenerate bounds (min == max) map to 0.
pub fn scale_value(v: f64, min: f64, max: f64) -> f64 {
    if min == max {
        0.0
    } else {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    }
}

/// Affine scaling without the clamp; used for targets in metric
/// computations where out-of-range values must keep their distance.
pub fn scale_affine(v: f64, min: f64, max: f64) -> f64 {
    if min == max {
        0.0
    } else {
        (v - min) / (max - min)
    }
}

/// Invert [`scale_value`] for in-range values. Degenerate bounds return min.
pub fn unscale_value(scaled: f64, min: f64, max: f64) -> f64 {
    if min == max {
        min
    } else {
        min + scaled * (max - min)
    }
}

/// Build the scaled feature vector for a record under a schema.
pub fn vectorize(record: &SampleRecord, schema: &FeatureSchema) -> Result<Vec<f64>, ParamError> {
    if record.kind != schema.kind {
        return Err(ParamError::KindMismatch { expected: schema.kind, got: record.kind });
    }
    schema
        .features
        .iter()
        .map(|spec| {
            let v = record
                .feature(&spec.name)
                .ok_or_else(|| ParamError::MissingFeature(spec.name.clone()))?;
            Ok(scale_value(v, spec.min, spec.max))
        })
        .collect()
}

#[cfg(test)]
mod tests;
