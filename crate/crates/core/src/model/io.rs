//! Model files: magic, header length, JSON header with the parameter
//! manifest, then a little-endian f64 blob.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{InputShape, IntegratedModel, ModelConfig};
use crate::error::{Error, FormatErrorKind, Result};
use crate::fsio::write_atomic;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"MIGMODEL";
const FORMAT_VERSION: u32 = 1;

/// One manifest row: a named tensor at a byte offset into the blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// Provenance stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Training settings, kept verbatim.
    pub train_config: serde_json::Value,
    pub holdout_subject: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    pub use_gate: bool,
    pub input: InputShape,
    pub config: ModelConfig,
    pub meta: ModelMeta,
    /// Hex SHA-256 of the serialized training settings.
    pub config_hash: String,
    pub param_count: usize,
    pub params: Vec<ParamEntry>,
}

/// Lays the tensors out back to back; offsets are in bytes.
pub fn encode_params<'a>(
    named: impl IntoIterator<Item = (String, &'a Tensor)>,
) -> (Vec<ParamEntry>, Vec<u8>) {
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    for (name, t) in named {
        entries.push(ParamEntry {
            name,
            shape: t.shape().to_vec(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    (entries, blob)
}

/// Inverse of [`encode_params`]; the blob must be covered exactly.
pub fn decode_params(entries: &[ParamEntry], blob: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut out = Vec::with_capacity(entries.len());
    let mut expected_offset = 0;
    for e in entries {
        let n: usize = e.shape.iter().product();
        if e.offset != expected_offset {
            return Err(Error::format(
                FormatErrorKind::SizeMismatch,
                format!(
                    "{} starts at byte {}, expected {expected_offset}",
                    e.name, e.offset
                ),
            ));
        }
        let end = e.offset + 8 * n;
        if end > blob.len() {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                format!(
                    "{} needs bytes up to {end}, blob has {}",
                    e.name,
                    blob.len()
                ),
            ));
        }
        let data: Vec<f64> = blob[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(e.shape.clone(), data)
            .map_err(|err| Error::format(FormatErrorKind::Header, format!("{}: {err}", e.name)))?;
        out.push((e.name.clone(), t));
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(Error::format(
            FormatErrorKind::SizeMismatch,
            format!(
                "blob has {} bytes, manifest covers {expected_offset}",
                blob.len()
            ),
        ));
    }
    Ok(out)
}

pub fn config_hash(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn stats_tensors(model: &IntegratedModel) -> Vec<(String, Tensor)> {
    model
        .running_stats()
        .iter()
        .flat_map(|(name, s)| {
            [
                (format!("{name}.mean"), Tensor::from_vec(s.mean.clone())),
                (format!("{name}.var"), Tensor::from_vec(s.var.clone())),
            ]
        })
        .collect()
}

impl IntegratedModel {
    pub fn to_bytes(&self, meta: &ModelMeta) -> Result<Vec<u8>> {
        let stats = stats_tensors(self);
        let named = self
            .named_params()
            .into_iter()
            .chain(stats.iter().map(|(n, t)| (n.clone(), t)));
        let (params, blob) = encode_params(named);
        let header = ModelHeader {
            format_version: FORMAT_VERSION,
            use_gate: self.use_gate,
            input: self.input,
            config: self.config.clone(),
            meta: meta.clone(),
            config_hash: config_hash(&meta.train_config),
            param_count: self.param_count(),
            params,
        };
        let header = serde_json::to_vec(&header)
            .map_err(|e| Error::format(FormatErrorKind::Header, e.to_string()))?;
        let mut out = Vec::with_capacity(12 + header.len() + blob.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(IntegratedModel, ModelHeader)> {
        if bytes.len() < 8 || &bytes[..8] != MODEL_MAGIC {
            return Err(Error::format(FormatErrorKind::BadMagic, "not a model file"));
        }
        if bytes.len() < 12 {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                "missing header length",
            ));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let rest = &bytes[12..];
        if rest.len() < hlen {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                "header cut short",
            ));
        }
        let header: ModelHeader = serde_json::from_slice(&rest[..hlen])
            .map_err(|e| Error::format(FormatErrorKind::Header, e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::format(
                FormatErrorKind::Header,
                format!("unsupported format version {}", header.format_version),
            ));
        }
        let tensors = decode_params(&header.params, &rest[hlen..])?;
        let mut model =
            IntegratedModel::new(header.config.clone(), header.input, header.use_gate, 0)
                .map_err(|e| Error::format(FormatErrorKind::Header, e.to_string()))?;
        let mut by_name: std::collections::HashMap<String, Tensor> = tensors.into_iter().collect();
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = by_name.remove(name).ok_or_else(|| {
                Error::format(
                    FormatErrorKind::SizeMismatch,
                    format!("missing tensor {name}"),
                )
            })?;
            if t.shape() != shape {
                return Err(Error::format(
                    FormatErrorKind::SizeMismatch,
                    format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
                ));
            }
            Ok(t)
        };
        let names: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let mut loaded = Vec::with_capacity(names.len());
        for (n, shape) in &names {
            loaded.push(take(n, shape)?);
        }
        let stat_names: Vec<(String, usize)> = model
            .running_stats()
            .iter()
            .map(|(n, s)| (n.to_string(), s.channels()))
            .collect();
        let mut stats = Vec::new();
        for (n, c) in &stat_names {
            stats.push((
                take(&format!("{n}.mean"), &[*c])?,
                take(&format!("{n}.var"), &[*c])?,
            ));
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::format(
                FormatErrorKind::SizeMismatch,
                format!("unexpected tensor {extra}"),
            ));
        }
        let use_gate = model.use_gate;
        model.use_gate = true;
        for (dst, src) in model.trainable_params_mut().into_iter().zip(loaded) {
            *dst = src;
        }
        model.use_gate = use_gate;
        for (dst, (mean, var)) in model.running_stats_mut().into_iter().zip(stats) {
            dst.mean = mean.into_data();
            dst.var = var.into_data();
        }
        Ok((model, header))
    }

    pub fn save(&self, path: &Path, meta: &ModelMeta) -> Result<()> {
        write_atomic(path, &self.to_bytes(meta)?)
    }

    pub fn load(path: &Path) -> Result<(IntegratedModel, ModelHeader)> {
        IntegratedModel::from_bytes(&std::fs::read(path)?)
    }
}
