//! Versioned binary model container.
//!
//! Layout: magic `LSRM`, u16 format version, u32 header length, a JSON
//! header (identity, schema, target bounds, architecture), u64 payload
//! length, the little-endian f64 weight payload, and a trailing SHA-256
//! digest over everything before it. Loading verifies the digest, so a
//! truncated or corrupted file fails closed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::forest::{ForestConfig, ForestModel, Tree, TreeNode};
use super::linear::LinearModel;
use super::medn::{MednModel, MlpModel};
use super::net::{DenseLayer, FeedForward};
use super::{ModelInner, RegressorId, TrainedModel};
use crate::kernel::ModuleKind;
use crate::params::FeatureSchema;

const MAGIC: &[u8; 4] = b"LSRM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    VersionMismatch(u16),
    #[error("checksum failure (file truncated or corrupted)")]
    ChecksumFailure,
    #[error("malformed model file: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    id: RegressorId,
    kind: ModuleKind,
    schema: FeatureSchema,
    target_min: f64,
    target_max: f64,
    arch: ArchHeader,
}

#[derive(Serialize, Deserialize)]
enum ArchHeader {
    Lr { dim: usize },
    Mlp { dims: Vec<usize> },
    Medn { encoder_dims: Vec<usize>, prediction_dims: Vec<usize>, reconstruction_dims: Option<Vec<usize>>, weight_ratio: f64 },
    Rf { config: ForestConfig, input_dim: usize, node_counts: Vec<u32> },
}

struct PayloadWriter {
    bytes: Vec<u8>,
}

impl PayloadWriter {
    fn new() -> Self {
        Self { bytes: Vec::new() }
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn net(&mut self, net: &FeedForward) {
        for layer in &net.layers {
            for &w in &layer.weight {
                self.f64(w);
            }
            for &b in &layer.bias {
                self.f64(b);
            }
        }
    }
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn f64(&mut self) -> Result<f64, ModelIoError> {
        let end = self.pos + 8;
        if end > self.bytes.len() {
            return Err(ModelIoError::Malformed("payload underrun".into()));
        }
        let v = f64::from_le_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(ModelIoError::Malformed("payload underrun".into()));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn net(&mut self, dims: &[usize], relu_output: bool) -> Result<FeedForward, ModelIoError> {
        let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
        for pair in dims.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let mut weight = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..in_dim * out_dim {
                weight.push(self.f64()?);
            }
            let mut bias = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                bias.push(self.f64()?);
            }
            layers.push(DenseLayer { in_dim, out_dim, weight, bias });
        }
        Ok(FeedForward { layers, relu_output })
    }

    fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Serialize a trained model to the container format. The byte length of
/// this buffer (in KB) is the model's size metric.
pub fn serialize_model(model: &TrainedModel) -> Vec<u8> {
    let (arch, payload) = match &model.inner {
        ModelInner::Lr(lr) => {
            let mut w = PayloadWriter::new();
            for &v in &lr.weights {
                w.f64(v);
            }
            w.f64(lr.intercept);
            (ArchHeader::Lr { dim: lr.weights.len() }, w)
        }
        ModelInner::Mlp(mlp) => {
            let mut w = PayloadWriter::new();
            w.net(&mlp.net);
            (ArchHeader::Mlp { dims: mlp.net.layer_dims() }, w)
        }
        ModelInner::Medn(medn) => {
            let mut w = PayloadWriter::new();
            w.net(&medn.encoder);
            w.net(&medn.prediction);
            if let Some(recon) = &medn.reconstruction {
                w.net(recon);
            }
            (
                ArchHeader::Medn {
                    encoder_dims: medn.encoder.layer_dims(),
                    prediction_dims: medn.prediction.layer_dims(),
                    reconstruction_dims: medn.reconstruction.as_ref().map(|n| n.layer_dims()),
                    weight_ratio: medn.weight_ratio,
                },
                w,
            )
        }
        ModelInner::Rf(forest) => {
            let mut w = PayloadWriter::new();
            for tree in &forest.trees {
                for node in &tree.nodes {
                    w.u32(node.feature);
                    w.f64(node.threshold);
                    w.u32(node.left);
                    w.u32(node.right);
                    w.f64(node.value);
                }
            }
            (
                ArchHeader::Rf {
                    config: forest.config.clone(),
                    input_dim: forest.input_dim,
                    node_counts: forest.trees.iter().map(|t| t.nodes.len() as u32).collect(),
                },
                w,
            )
        }
    };

    let header = ModelHeader {
        id: model.id,
        kind: model.kind,
        schema: model.schema.clone(),
        target_min: model.target_min,
        target_max: model.target_max,
        arch,
    };
    let header_json = serde_json::to_vec(&header).expect("model header serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(payload.bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload.bytes);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Reconstruct a model from container bytes.
pub fn deserialize_model(bytes: &[u8]) -> Result<TrainedModel, ModelIoError> {
    if bytes.len() < MAGIC.len() + 2 {
        return Err(ModelIoError::ChecksumFailure);
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::VersionMismatch(version));
    }
    // Digest covers everything before the trailing 32 bytes.
    if bytes.len() < 38 {
        return Err(ModelIoError::ChecksumFailure);
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ModelIoError::ChecksumFailure);
    }

    let mut pos = 6;
    let header_len = u32::from_le_bytes(
        body.get(pos..pos + 4).ok_or(ModelIoError::ChecksumFailure)?.try_into().unwrap(),
    ) as usize;
    pos += 4;
    let header_json = body.get(pos..pos + header_len).ok_or(ModelIoError::ChecksumFailure)?;
    pos += header_len;
    let header: ModelHeader =
        serde_json::from_slice(header_json).map_err(|e| ModelIoError::Malformed(format!("header: {e}")))?;
    let payload_len = u64::from_le_bytes(
        body.get(pos..pos + 8).ok_or(ModelIoError::ChecksumFailure)?.try_into().unwrap(),
    ) as usize;
    pos += 8;
    let payload = body.get(pos..pos + payload_len).ok_or(ModelIoError::ChecksumFailure)?;
    if pos + payload_len != body.len() {
        return Err(ModelIoError::Malformed("trailing bytes after payload".into()));
    }

    let mut reader = PayloadReader::new(payload);
    let inner = match &header.arch {
        ArchHeader::Lr { dim } => {
            let mut weights = Vec::with_capacity(*dim);
            for _ in 0..*dim {
                weights.push(reader.f64()?);
            }
            let intercept = reader.f64()?;
            ModelInner::Lr(LinearModel { weights, intercept })
        }
        ArchHeader::Mlp { dims } => ModelInner::Mlp(MlpModel { net: reader.net(dims, false)? }),
        ArchHeader::Medn { encoder_dims, prediction_dims, reconstruction_dims, weight_ratio } => {
            let encoder = reader.net(encoder_dims, true)?;
            let prediction = reader.net(prediction_dims, false)?;
            let reconstruction = match reconstruction_dims {
                Some(dims) => Some(reader.net(dims, false)?),
                None => None,
            };
            ModelInner::Medn(MednModel { encoder, prediction, reconstruction, weight_ratio: *weight_ratio })
        }
        ArchHeader::Rf { config, input_dim, node_counts } => {
            let mut trees = Vec::with_capacity(node_counts.len());
            for &count in node_counts {
                let mut nodes = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let feature = reader.u32()?;
                    let threshold = reader.f64()?;
                    let left = reader.u32()?;
                    let right = reader.u32()?;
                    let value = reader.f64()?;
                    nodes.push(TreeNode { feature, threshold, left, right, value });
                }
                trees.push(Tree { nodes });
            }
            ModelInner::Rf(ForestModel { trees, config: config.clone(), input_dim: *input_dim })
        }
    };
    if !reader.finished() {
        return Err(ModelIoError::Malformed("payload has trailing bytes".into()));
    }

    Ok(TrainedModel {
        id: header.id,
        kind: header.kind,
        schema: header.schema,
        target_min: header.target_min,
        target_max: header.target_max,
        inner,
    })
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<(), ModelIoError> {
    fs::write(path, serialize_model(model))
        .map_err(|e| ModelIoError::Io { path: path.display().to_string(), source: e })
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelIoError> {
    let bytes =
        fs::read(path).map_err(|e| ModelIoError::Io { path: path.display().to_string(), source: e })?;
    deserialize_model(&bytes)
}

/// Serialized size in kilobytes; the space objective of the selection
/// algorithm and the size column of evaluation reports.
pub fn model_size_kb(model: &TrainedModel) -> f64 {
    serialize_model(model).len() as f64 / 1024.0
}
