//! Self-generating inference-latency prediction for DNN-style compute
//! modules.
//!
//! The crate benchmarks native compute kernels (convolution, batch norm,
//! pooling, linear, and their fused composites) under configurable
//! background load, packs the sampled/measured/inferred parameters and the
//! measured latency into per-module datasets, trains a zoo of regression
//! models on them (closed-form linear regression, an MLP, random forests,
//! and a multi-task encoder-decoder network with ablation variants), and
//! auto-selects one regressor per module by tolerance-filtered accuracy and
//! R-squared ranking with a time- or space-efficiency tiebreak.

pub mod dataset;
pub mod kernel;
pub mod metrics;
pub mod params;
pub mod regressors;
pub mod seed;
pub mod select;

pub use dataset::{
    default_sample_count, generate_dataset, load_dataset, save_dataset, split_dataset, DatasetError,
    DatasetMeta, DatasetSplit, GenerationOptions, SampleRecord,
};
pub use kernel::clock::{clock_from_env, Clock, FakeClock, MonotonicClock};
pub use kernel::load::{start_load_generator, stop_load_generator, LoadHandle, LoadProfile};
pub use kernel::probe::{prober_from_env, DeviceProbe, FakeProbe, Prober, SystemProbe};
pub use kernel::{
    build_input, build_module, forward, measure_latency, KernelError, LatencyMeasurement,
    ModuleInstance, ModuleKind, Tensor, TensorShape,
};
pub use metrics::{evaluate, pk_accuracy, r_squared, EvalResult, MetricsError};
pub use params::{
    build_schema, compute_inferables, sample_config, vectorize, FeatureSchema, Inferables, ParamError,
    ParamSetVariant, SamplingConfig,
};
pub use regressors::forest::{fit_forest, ForestConfig, ForestModel};
pub use regressors::io::{load_model, model_size_kb, save_model, serialize_model, ModelIoError};
pub use regressors::linear::{fit_least_squares, LinearModel};
pub use regressors::medn::{medn_loss, medn_loss_parts, MednConfig, MednModel, MlpModel};
pub use regressors::net::{smooth_l1, smooth_l1_grad};
pub use regressors::{
    train_regressor, Family, MednVariant, ModelInner, PredictError, RegressorId, TrainConfig,
    TrainError, TrainOutcome, TrainedModel,
};
pub use select::{
    auto_select, explain_selection, Objective, SelectError, SelectionAudit, SelectionConfig, SelectionMap,
};
