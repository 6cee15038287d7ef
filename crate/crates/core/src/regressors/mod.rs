//! The regression model zoo: closed-form linear regression, an MLP
//! baseline, random forests, and the multi-task encoder-decoder network
//! with its ablation variants. Covers training, prediction, and versioned
//! binary serialization.

pub mod forest;
pub mod io;
pub mod linear;
pub mod medn;
pub mod net;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSplit;
use crate::kernel::ModuleKind;
use crate::params::{
    build_schema, scale_affine, scale_value, unscale_value, vectorize, FeatureSchema, ParamError,
    ParamSetVariant,
};
use crate::seed::derive_seed;
use forest::{fit_forest, ForestConfig, ForestModel};
use linear::{fit_least_squares, LinearModel};
use medn::{MednConfig, MednModel, MlpModel};

/// Regressor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Lr,
    Mlp,
    Rf,
    Medn,
}

/// Ablation variant of the encoder-decoder model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MednVariant {
    Full,
    Direct,
    NoInfer,
    NoMeasure,
    Raw,
}

/// Identity of one regressor: family plus, for the encoder-decoder family,
/// its ablation variant. The variant fixes the feature set it trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegressorId {
    pub family: Family,
    pub variant: Option<MednVariant>,
}

impl RegressorId {
    pub const fn lr() -> Self {
        Self { family: Family::Lr, variant: None }
    }

    pub const fn mlp() -> Self {
        Self { family: Family::Mlp, variant: None }
    }

    pub const fn rf() -> Self {
        Self { family: Family::Rf, variant: None }
    }

    pub const fn medn(variant: MednVariant) -> Self {
        Self { family: Family::Medn, variant: Some(variant) }
    }

    /// Every known regressor, in canonical name order.
    pub fn all() -> Vec<RegressorId> {
        vec![
            Self::lr(),
            Self::medn(MednVariant::Full),
            Self::medn(MednVariant::Direct),
            Self::medn(MednVariant::Raw),
            Self::medn(MednVariant::NoInfer),
            Self::medn(MednVariant::NoMeasure),
            Self::mlp(),
            Self::rf(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match (self.family, self.variant) {
            (Family::Lr, _) => "LR",
            (Family::Mlp, _) => "MLP",
            (Family::Rf, _) => "RF",
            (Family::Medn, Some(MednVariant::Full) | None) => "MEDN",
            (Family::Medn, Some(MednVariant::Direct)) => "MEDN-D",
            (Family::Medn, Some(MednVariant::NoInfer)) => "MEDN-XI",
            (Family::Medn, Some(MednVariant::NoMeasure)) => "MEDN-XM",
            (Family::Medn, Some(MednVariant::Raw)) => "MEDN-R",
        }
    }

    pub fn parse(name: &str) -> Option<RegressorId> {
        match name {
            "LR" => Some(Self::lr()),
            "MLP" => Some(Self::mlp()),
            "RF" => Some(Self::rf()),
            "MEDN" => Some(Self::medn(MednVariant::Full)),
            "MEDN-D" => Some(Self::medn(MednVariant::Direct)),
            "MEDN-XI" => Some(Self::medn(MednVariant::NoInfer)),
            "MEDN-XM" => Some(Self::medn(MednVariant::NoMeasure)),
            "MEDN-R" => Some(Self::medn(MednVariant::Raw)),
            _ => None,
        }
    }

    /// The feature set this regressor trains on. Ablation variants drop
    /// their parameter genre; everything else uses the full set.
    pub fn param_set(&self) -> ParamSetVariant {
        match self.variant {
            Some(MednVariant::NoInfer) => ParamSetVariant::NoInfer,
            Some(MednVariant::NoMeasure) => ParamSetVariant::NoMeasure,
            Some(MednVariant::Raw) => ParamSetVariant::Raw,
            _ => ParamSetVariant::Full,
        }
    }

    pub fn is_deep(&self) -> bool {
        matches!(self.family, Family::Mlp | Family::Medn)
    }
}

impl fmt::Display for RegressorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered by canonical name so ties break deterministically everywhere.
impl Ord for RegressorId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name().cmp(other.name())
    }
}

impl PartialOrd for RegressorId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for RegressorId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RegressorId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        RegressorId::parse(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown regressor `{name}`")))
    }
}

/// Gradient-descent training configuration for the deep regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub smooth_l1_beta: f64,
    pub mlp_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.005,
            batch_size: 64,
            smooth_l1_beta: 1.0,
            mlp_hidden: vec![128, 64, 32],
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptySplit,
    #[error("non-finite loss at epoch {epoch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("least-squares solve failed: {0}")]
    Solve(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Family-specific trained state.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInner {
    Lr(LinearModel),
    Mlp(MlpModel),
    Rf(ForestModel),
    Medn(MednModel),
}

/// A trained regressor plus everything needed to use and persist it: the
/// feature schema (with scaling bounds) and the target scaling bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub id: RegressorId,
    pub kind: ModuleKind,
    pub schema: FeatureSchema,
    pub target_min: f64,
    pub target_max: f64,
    pub inner: ModelInner,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.schema.dim()
    }

    /// Predict in scaled-target units from a scaled feature vector.
    pub fn predict_scaled(&self, x: &[f64]) -> Result<f64, PredictError> {
        if x.len() != self.input_dim() {
            return Err(PredictError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(match &self.inner {
            ModelInner::Lr(m) => m.predict(x),
            ModelInner::Mlp(m) => m.predict(x),
            ModelInner::Rf(m) => m.predict(x),
            ModelInner::Medn(m) => m.predict(x),
        })
    }

    /// Predict latency in milliseconds from a scaled feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<f64, PredictError> {
        Ok(unscale_value(self.predict_scaled(x)?, self.target_min, self.target_max))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>, PredictError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Vectorize a record under the model's schema and predict latency.
    pub fn predict_record(&self, record: &crate::dataset::SampleRecord) -> Result<f64, PredictError> {
        let x = vectorize(record, &self.schema)?;
        self.predict(&x)
    }

    /// Affine target scaling (no clamp) so scaled-unit metrics keep the
    /// distances of out-of-range test values.
    pub fn scale_target(&self, latency_ms: f64) -> f64 {
        scale_affine(latency_ms, self.target_min, self.target_max)
    }
}

/// Training output: the model plus per-epoch loss histories (empty for the
/// closed-form and forest families).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

/// Train one regressor on a split. The feature schema and target bounds are
/// computed from the training records only.
pub fn train_regressor(
    id: RegressorId,
    kind: ModuleKind,
    split: &DatasetSplit,
    train_cfg: &TrainConfig,
    forest_cfg: &ForestConfig,
    medn_cfg: Option<MednConfig>,
) -> Result<TrainOutcome, TrainError> {
    if split.train.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let schema = build_schema(kind, id.param_set(), &split.train)?;
    let xs: Vec<Vec<f64>> = split.train.iter().map(|r| vectorize(r, &schema)).collect::<Result<_, _>>()?;
    let target_min = split.train.iter().map(|r| r.latency_ms).fold(f64::INFINITY, f64::min);
    let target_max = split.train.iter().map(|r| r.latency_ms).fold(f64::NEG_INFINITY, f64::max);
    let ys: Vec<f64> = split.train.iter().map(|r| scale_value(r.latency_ms, target_min, target_max)).collect();
    let val_xs: Vec<Vec<f64>> =
        split.validation.iter().map(|r| vectorize(r, &schema)).collect::<Result<_, _>>()?;
    let val_ys: Vec<f64> =
        split.validation.iter().map(|r| scale_value(r.latency_ms, target_min, target_max)).collect();

    let model_seed = derive_seed(train_cfg.seed, 40, regressor_seed_index(id));
    let (inner, train_loss, validation_loss) = match id.family {
        Family::Lr => {
            let model = fit_least_squares(&xs, &ys).map_err(TrainError::Solve)?;
            (ModelInner::Lr(model), Vec::new(), Vec::new())
        }
        Family::Rf => {
            let cfg = ForestConfig { seed: derive_seed(model_seed, 41, 0), ..forest_cfg.clone() };
            (ModelInner::Rf(fit_forest(&cfg, &xs, &ys)), Vec::new(), Vec::new())
        }
        Family::Mlp => {
            let mut model = MlpModel::new(schema.dim(), &train_cfg.mlp_hidden, model_seed);
            let (tl, vl) = train_deep(&mut model, &xs, &ys, &val_xs, &val_ys, train_cfg)?;
            (ModelInner::Mlp(model), tl, vl)
        }
        Family::Medn => {
            let cfg = medn_cfg.unwrap_or_else(|| MednConfig::default_for(kind));
            let direct = id.variant == Some(MednVariant::Direct);
            let mut model = MednModel::new(schema.dim(), &cfg, direct, model_seed);
            let (tl, vl) = train_deep(&mut model, &xs, &ys, &val_xs, &val_ys, train_cfg)?;
            (ModelInner::Medn(model), tl, vl)
        }
    };

    Ok(TrainOutcome {
        model: TrainedModel { id, kind, schema, target_min, target_max, inner },
        train_loss,
        validation_loss,
    })
}

fn regressor_seed_index(id: RegressorId) -> u64 {
    RegressorId::all().iter().position(|r| *r == id).unwrap_or(0) as u64
}

/// A gradient-trainable model: the MLP and all encoder-decoder variants.
pub trait DeepModel {
    type Grads;
    fn zero_grads(&self) -> Self::Grads;
    fn params_mut(&mut self) -> Vec<&mut f64>;
    fn param_count(&self) -> usize;
    /// Accumulate `coef`-weighted gradients for one sample into `grads`,
    /// returning the unweighted sample loss.
    fn accumulate(&self, x: &[f64], y: f64, beta: f64, coef: f64, grads: &mut Self::Grads) -> f64;
    fn flatten_grads(&self, grads: &Self::Grads, out: &mut Vec<f64>);
    /// Loss of one sample without touching gradients.
    fn sample_loss(&self, x: &[f64], y: f64, beta: f64) -> f64;
}

impl DeepModel for MlpModel {
    type Grads = net::FfGrads;

    fn zero_grads(&self) -> Self::Grads {
        MlpModel::zero_grads(self)
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        MlpModel::params_mut(self)
    }

    fn param_count(&self) -> usize {
        MlpModel::param_count(self)
    }

    fn accumulate(&self, x: &[f64], y: f64, beta: f64, coef: f64, grads: &mut Self::Grads) -> f64 {
        MlpModel::accumulate(self, x, y, beta, coef, grads)
    }

    fn flatten_grads(&self, grads: &Self::Grads, out: &mut Vec<f64>) {
        MlpModel::flatten_grads(self, grads, out)
    }

    fn sample_loss(&self, x: &[f64], y: f64, beta: f64) -> f64 {
        self.loss(x, y, beta)
    }
}

impl DeepModel for MednModel {
    type Grads = medn::MednGrads;

    fn zero_grads(&self) -> Self::Grads {
        MednModel::zero_grads(self)
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        MednModel::params_mut(self)
    }

    fn param_count(&self) -> usize {
        MednModel::param_count(self)
    }

    fn accumulate(&self, x: &[f64], y: f64, beta: f64, coef: f64, grads: &mut Self::Grads) -> f64 {
        MednModel::accumulate(self, x, y, beta, coef, grads)
    }

    fn flatten_grads(&self, grads: &Self::Grads, out: &mut Vec<f64>) {
        MednModel::flatten_grads(self, grads, out)
    }

    fn sample_loss(&self, x: &[f64], y: f64, beta: f64) -> f64 {
        self.loss(x, y, beta)
    }
}

/// Mini-batch Adam training loop. Per-epoch shuffles derive from the config
/// seed, so the whole loss history is reproducible bit for bit. Returns
/// (train, validation) per-epoch mean losses.
pub fn train_deep<M: DeepModel>(
    model: &mut M,
    xs: &[Vec<f64>],
    ys: &[f64],
    val_xs: &[Vec<f64>],
    val_ys: &[f64],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    assert!(cfg.epochs >= 1, "epochs must be >= 1");
    assert!(cfg.learning_rate > 0.0, "learning rate must be > 0");
    assert!(cfg.smooth_l1_beta > 0.0, "smooth L1 beta must be > 0");
    if xs.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let mut adam = net::Adam::new(cfg.learning_rate, model.param_count());
    let mut grads = model.zero_grads();
    let mut flat = Vec::with_capacity(model.param_count());
    let mut train_history = Vec::with_capacity(cfg.epochs);
    let mut val_history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..xs.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 42, epoch as u64));
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(cfg.batch_size.max(1)) {
            zero_into(model, &mut grads);
            let coef = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += model.accumulate(&xs[i], ys[i], cfg.smooth_l1_beta, coef, &mut grads);
            }
            model.flatten_grads(&grads, &mut flat);
            let mut params = model.params_mut();
            adam.step(&mut params, &flat);
        }
        let mean_loss = epoch_loss / xs.len() as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, loss: mean_loss });
        }
        train_history.push(mean_loss);
        if !val_xs.is_empty() {
            let val_loss = val_xs
                .iter()
                .zip(val_ys)
                .map(|(x, &y)| model.sample_loss(x, y, cfg.smooth_l1_beta))
                .sum::<f64>()
                / val_xs.len() as f64;
            val_history.push(val_loss);
        }
    }
    Ok((train_history, val_history))
}

fn zero_into<M: DeepModel>(model: &M, grads: &mut M::Grads) {
    *grads = model.zero_grads();
}
