//! Dataset generation and persistence: sample a config, build the module
//! and input, probe device state, measure latency, compute inferables, pack
//! the record. Persists per-module CSV files with a commented header block
//! and splits datasets 7:1:2 for training.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::clock::Clock;
use crate::kernel::load::{start_load_generator, LoadError, LoadProfile};
use crate::kernel::probe::{DeviceProbe, Prober};
use crate::kernel::{build_input, build_module, measure_latency, KernelError, ModuleKind};
use crate::params::{compute_inferables, sample_config_rng, Inferables, SamplingConfig};

/// Dataset file format version written into the header block.
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Train/validation/test split ratios.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// Default sample counts: convolutional kinds get 10,000 samples, all other
/// kinds 2,000.
pub fn default_sample_count(kind: ModuleKind) -> usize {
    if kind.is_convolutional() {
        10_000
    } else {
        2_000
    }
}

/// One dataset row: the sampled config, device snapshot, inferables, and
/// the measured ground-truth latency.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub kind: ModuleKind,
    pub sampling: SamplingConfig,
    pub measurable: DeviceProbe,
    pub inferable: Inferables,
    pub latency_ms: f64,
    /// Set when the device probe failed and fallback constants were used.
    pub probe_flagged: bool,
}

impl SampleRecord {
    /// Raw (unscaled) value of a named feature.
    pub fn feature(&self, name: &str) -> Option<f64> {
        match name {
            "n" => Some(self.sampling.n as f64),
            "c_in" => Some(self.sampling.c_in as f64),
            "c_out" => self.sampling.c_out.map(|v| v as f64),
            "k" => self.sampling.k.map(|v| v as f64),
            "s" => self.sampling.s.map(|v| v as f64),
            "l" => self.sampling.l.map(|v| v as f64),
            "m_bytes" => Some(self.measurable.available_memory_bytes as f64),
            "util" => Some(self.measurable.utilization),
            "n_d" => Some(self.inferable.n_d as f64),
            "n_m" => self.inferable.n_m.map(|v| v as f64),
            _ => None,
        }
    }
}

/// Seed-deterministic 7:1:2 partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<SampleRecord>,
    pub validation: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("dataset needs at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Knobs for a generation run.
#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub warmups: usize,
    pub repeats: usize,
    /// Substituted when the device probe fails; such records are flagged.
    pub probe_fallback: DeviceProbe,
    /// Reject sampled configs whose input tensor would exceed this many
    /// elements. `None` admits the full sampling range.
    pub max_input_elements: Option<u64>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            warmups: 3,
            repeats: 7,
            probe_fallback: DeviceProbe { available_memory_bytes: 0, utilization: 0.0 },
            max_input_elements: None,
        }
    }
}

fn sample_config_capped(kind: ModuleKind, rng: &mut ChaCha8Rng, cap: Option<u64>) -> SamplingConfig {
    loop {
        let cfg = sample_config_rng(kind, rng);
        match cap {
            Some(max) if compute_inferables(kind, &cfg).n_d > max => continue,
            _ => return cfg,
        }
    }
}

/// Generate `count` records for the kind. Measurements run strictly
/// sequentially; when the load profile is enabled, background workers start
/// before the first sample and stop after the last. Probe failures flag the
/// record and substitute the configured fallback instead of aborting.
pub fn generate_dataset(
    kind: ModuleKind,
    count: usize,
    load: &LoadProfile,
    seed: u64,
    opts: &GenerationOptions,
    prober: &mut dyn Prober,
    clock: &dyn Clock,
) -> Result<Vec<SampleRecord>, DatasetError> {
    let load_handle = start_load_generator(load)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let cfg = sample_config_capped(kind, &mut rng, opts.max_input_elements);
        let module_seed: u64 = rng.gen();
        let input_seed: u64 = rng.gen();
        let module = build_module(kind, &cfg, module_seed)?;
        let input = build_input(kind, &cfg, input_seed);
        // Device status is read immediately before each measurement.
        let (measurable, probe_flagged) = match prober.probe() {
            Ok(snapshot) => (snapshot, false),
            Err(_) => (opts.probe_fallback, true),
        };
        let measurement = measure_latency(&module, &input, opts.warmups, opts.repeats, clock)?;
        let inferable = compute_inferables(kind, &cfg);
        records.push(SampleRecord {
            kind,
            sampling: cfg,
            measurable,
            inferable,
            latency_ms: measurement.latency_ms,
            probe_flagged,
        });
    }
    load_handle.stop();
    Ok(records)
}

/// Seeded shuffle then contiguous 70%/10%/20% cut (floor for train and
/// validation, remainder to test). Requires at least 10 records.
pub fn split_dataset(records: Vec<SampleRecord>, seed: u64) -> Result<DatasetSplit, DatasetError> {
    if records.len() < 10 {
        return Err(DatasetError::TooFewRecords { needed: 10, got: records.len() });
    }
    let mut records = records;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates; kept explicit so the membership is stable across rand
    // versions.
    for i in (1..records.len()).rev() {
        let j = rng.gen_range(0..=i);
        records.swap(i, j);
    }
    let n = records.len();
    let n_train = (n as f64 * SPLIT_RATIOS.0).floor() as usize;
    let n_val = (n as f64 * SPLIT_RATIOS.1).floor() as usize;
    let test = records.split_off(n_train + n_val);
    let validation = records.split_off(n_train);
    Ok(DatasetSplit { train: records, validation, test, seed })
}

/// Provenance recorded in a dataset file header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub kind: ModuleKind,
    pub seed: u64,
    pub load: LoadProfile,
}

fn column_names(kind: ModuleKind) -> Vec<&'static str> {
    let mut cols = crate::params::feature_names(kind, crate::params::ParamSetVariant::Full);
    cols.push("probe_flagged");
    cols.push("latency_ms");
    cols
}

fn format_load_profile(load: &LoadProfile) -> String {
    let pool: Vec<&str> = load.job_kind_pool.iter().map(|k| k.name()).collect();
    format!(
        "enabled={};mean_interarrival_ms={};seed={};workers={};pool={}",
        load.enabled,
        load.mean_interarrival_ms,
        load.seed,
        load.workers,
        pool.join("|")
    )
}

fn parse_load_profile(text: &str) -> Result<LoadProfile, DatasetError> {
    let mut profile = LoadProfile { job_kind_pool: Vec::new(), ..LoadProfile::default() };
    for part in text.split(';') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| DatasetError::MalformedHeader(format!("load entry `{part}`")))?;
        let bad = |e: &dyn std::fmt::Display| DatasetError::MalformedHeader(format!("load {key}: {e}"));
        match key {
            "enabled" => profile.enabled = value.parse().map_err(|e| bad(&e))?,
            "mean_interarrival_ms" => profile.mean_interarrival_ms = value.parse().map_err(|e| bad(&e))?,
            "seed" => profile.seed = value.parse().map_err(|e| bad(&e))?,
            "workers" => profile.workers = value.parse().map_err(|e| bad(&e))?,
            "pool" => {
                for name in value.split('|').filter(|s| !s.is_empty()) {
                    let kind = ModuleKind::parse(name).ok_or_else(|| {
                        DatasetError::SchemaMismatch(format!("unknown kind `{name}` in load pool"))
                    })?;
                    profile.job_kind_pool.push(kind);
                }
            }
            other => return Err(DatasetError::MalformedHeader(format!("unknown load key `{other}`"))),
        }
    }
    Ok(profile)
}

/// Write records as a CSV file with a `#`-commented header block. All
/// records must share the meta's kind; one file holds one kind.
pub fn save_dataset(path: &Path, records: &[SampleRecord], meta: &DatasetMeta) -> Result<(), DatasetError> {
    if let Some(record) = records.iter().find(|r| r.kind != meta.kind) {
        return Err(DatasetError::SchemaMismatch(format!(
            "record of kind {} in a {} dataset",
            record.kind, meta.kind
        )));
    }
    let cols = column_names(meta.kind);
    let mut out = String::new();
    out.push_str(&format!("# latsel dataset v{DATASET_FORMAT_VERSION}\n"));
    out.push_str(&format!("# kind: {}\n", meta.kind));
    out.push_str(&format!("# columns: {}\n", cols.join(",")));
    out.push_str(&format!("# seed: {}\n", meta.seed));
    out.push_str(&format!("# load: {}\n", format_load_profile(&meta.load)));
    out.push_str(&cols.join(","));
    out.push('\n');
    for record in records {
        let mut fields = Vec::with_capacity(cols.len());
        for col in &cols {
            let text = match *col {
                "probe_flagged" => (record.probe_flagged as u8).to_string(),
                "latency_ms" => format_f64(record.latency_ms),
                "m_bytes" => record.measurable.available_memory_bytes.to_string(),
                "util" => format_f64(record.measurable.utilization),
                name => {
                    let v = record
                        .feature(name)
                        .ok_or_else(|| DatasetError::SchemaMismatch(format!("record missing `{name}`")))?;
                    (v as u64).to_string()
                }
            };
            fields.push(text);
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| DatasetError::Io { path: display_path(path), source: e })?;
    file.write_all(out.as_bytes()).map_err(|e| DatasetError::Io { path: display_path(path), source: e })?;
    Ok(())
}

/// F64 formatting used in dataset files; Rust's float Display is shortest
/// round-trip, so `load(save(x)) == x` holds bit-for-bit.
fn format_f64(v: f64) -> String {
    format!("{v}")
}

fn display_path(path: &Path) -> String {
    path.display().to_string()
}

/// Read a dataset file produced by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<(Vec<SampleRecord>, DatasetMeta), DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::Io { path: display_path(path), source: e })?;
    let mut lines = text.lines();

    let version_line = lines
        .next()
        .ok_or_else(|| DatasetError::MalformedHeader("empty file".into()))?;
    let version: u32 = version_line
        .strip_prefix("# latsel dataset v")
        .ok_or_else(|| DatasetError::MalformedHeader(format!("bad magic line `{version_line}`")))?
        .parse()
        .map_err(|e| DatasetError::MalformedHeader(format!("version: {e}")))?;
    if version != DATASET_FORMAT_VERSION {
        return Err(DatasetError::MalformedHeader(format!("unsupported format version {version}")));
    }

    let mut kind = None;
    let mut columns: Option<Vec<String>> = None;
    let mut seed = None;
    let mut load = None;
    let mut header_line = None;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(": ")
                .ok_or_else(|| DatasetError::MalformedHeader(format!("header entry `{line}`")))?;
            match key {
                "kind" => {
                    kind = Some(ModuleKind::parse(value).ok_or_else(|| {
                        DatasetError::SchemaMismatch(format!("unknown kind `{value}`"))
                    })?)
                }
                "columns" => columns = Some(value.split(',').map(str::to_string).collect()),
                "seed" => {
                    seed = Some(value.parse().map_err(|e| DatasetError::MalformedHeader(format!("seed: {e}")))?)
                }
                "load" => load = Some(parse_load_profile(value)?),
                other => return Err(DatasetError::MalformedHeader(format!("unknown header key `{other}`"))),
            }
        } else {
            header_line = Some(line);
            break;
        }
    }
    let kind = kind.ok_or_else(|| DatasetError::MalformedHeader("missing kind".into()))?;
    let columns = columns.ok_or_else(|| DatasetError::MalformedHeader("missing columns".into()))?;
    let seed = seed.ok_or_else(|| DatasetError::MalformedHeader("missing seed".into()))?;
    let load = load.ok_or_else(|| DatasetError::MalformedHeader("missing load".into()))?;

    let expected_cols: Vec<String> = column_names(kind).iter().map(|s| s.to_string()).collect();
    if columns != expected_cols {
        return Err(DatasetError::SchemaMismatch(format!(
            "columns {:?} do not match kind {} (expected {:?})",
            columns, kind, expected_cols
        )));
    }
    match header_line {
        Some(line) if line == expected_cols.join(",") => {}
        Some(line) => {
            return Err(DatasetError::SchemaMismatch(format!("column row `{line}` does not match header")))
        }
        // Header block with no column row: an empty dataset.
        None => return Ok((Vec::new(), DatasetMeta { kind, seed, load })),
    }

    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        records.push(parse_record(kind, &expected_cols, line)?);
    }
    Ok((records, DatasetMeta { kind, seed, load }))
}

fn parse_record(kind: ModuleKind, cols: &[String], line: &str) -> Result<SampleRecord, DatasetError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != cols.len() {
        return Err(DatasetError::SchemaMismatch(format!(
            "row has {} fields, expected {}",
            fields.len(),
            cols.len()
        )));
    }
    let mut sampling = SamplingConfig { n: 0, c_in: 0, c_out: None, k: None, s: None, l: None };
    let mut measurable = DeviceProbe { available_memory_bytes: 0, utilization: 0.0 };
    let mut latency_ms = 0.0;
    let mut probe_flagged = false;
    let bad = |col: &str, e: &dyn std::fmt::Display| DatasetError::SchemaMismatch(format!("column {col}: {e}"));
    for (col, field) in cols.iter().zip(&fields) {
        match col.as_str() {
            "n" => sampling.n = field.parse().map_err(|e| bad(col, &e))?,
            "c_in" => sampling.c_in = field.parse().map_err(|e| bad(col, &e))?,
            "c_out" => sampling.c_out = Some(field.parse().map_err(|e| bad(col, &e))?),
            "k" => sampling.k = Some(field.parse().map_err(|e| bad(col, &e))?),
            "s" => sampling.s = Some(field.parse().map_err(|e| bad(col, &e))?),
            "l" => sampling.l = Some(field.parse().map_err(|e| bad(col, &e))?),
            "m_bytes" => measurable.available_memory_bytes = field.parse().map_err(|e| bad(col, &e))?,
            "util" => measurable.utilization = field.parse().map_err(|e| bad(col, &e))?,
            // Inferables are recomputed below; parsing validates the text.
            "n_d" | "n_m" => {
                let _: u64 = field.parse().map_err(|e| bad(col, &e))?;
            }
            "probe_flagged" => probe_flagged = *field == "1",
            "latency_ms" => latency_ms = field.parse().map_err(|e| bad(col, &e))?,
            other => return Err(DatasetError::SchemaMismatch(format!("unknown column `{other}`"))),
        }
    }
    sampling
        .validate(kind)
        .map_err(|e| DatasetError::SchemaMismatch(format!("invalid sampling config: {e}")))?;
    let inferable = compute_inferables(kind, &sampling);
    Ok(SampleRecord { kind, sampling, measurable, inferable, latency_ms, probe_flagged })
}
