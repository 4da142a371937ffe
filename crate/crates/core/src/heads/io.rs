//! `.head` files: a `u32` little-endian header length, a JSON header, then
//! every parameter as little-endian `f32` (per layer: weight row-major, then
//! bias).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Architecture, HeadModel, Layer};
use crate::error::FormatError;
use crate::scalar::Scalar;

const FORMAT_TAG: &str = "vpet-head";

#[derive(Debug, Serialize, Deserialize)]
struct HeadHeader {
    format: String,
    version: u32,
    architecture: Architecture,
    input_dim: usize,
    class_count: usize,
    seed: u64,
    /// `[rows, cols]` of each layer's weight.
    layer_shapes: Vec<[usize; 2]>,
}

pub(super) fn encode<S: Scalar>(model: &HeadModel<S>) -> Result<Vec<u8>, FormatError> {
    let header = HeadHeader {
        format: FORMAT_TAG.into(),
        version: 1,
        architecture: model.architecture(),
        input_dim: model.input_dim(),
        class_count: model.class_count(),
        seed: model.seed(),
        layer_shapes: model
            .layers()
            .iter()
            .map(|l| [l.weight.nrows(), l.weight.ncols()])
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(4 + json.len() + 4 * model.parameter_count());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in model.layers() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    Ok(out)
}

pub(super) fn decode<S: Scalar>(bytes: &[u8]) -> Result<HeadModel<S>, FormatError> {
    let truncated = |needed: usize| FormatError::Truncated {
        needed,
        available: bytes.len(),
    };
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(|| truncated(4))?.try_into().expect("4 bytes");
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let header_end = 4 + header_len;
    let header: HeadHeader =
        serde_json::from_slice(bytes.get(4..header_end).ok_or_else(|| truncated(header_end))?)?;
    if header.format != FORMAT_TAG {
        return Err(FormatError::InvalidHeader(format!("format tag {:?}", header.format)));
    }
    if header.version != 1 {
        return Err(FormatError::UnsupportedVersion(header.version));
    }

    let mut pos = header_end;
    let mut take = |count: usize| -> Result<Vec<S>, FormatError> {
        let end = pos + 4 * count;
        let raw = bytes.get(pos..end).ok_or_else(|| truncated(end))?;
        pos = end;
        Ok(raw
            .chunks_exact(4)
            .map(|c| S::of_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    };
    let mut layers = Vec::with_capacity(header.layer_shapes.len());
    for &[rows, cols] in &header.layer_shapes {
        let weight = Array2::from_shape_vec((rows, cols), take(rows * cols)?).expect("sized");
        let bias = Array1::from(take(rows)?);
        layers.push(Layer { weight, bias });
    }
    if pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - pos));
    }
    let model = HeadModel::from_layers(header.architecture, header.seed, layers)
        .map_err(|e| FormatError::InvalidHeader(e.to_string()))?;
    if model.input_dim() != header.input_dim || model.class_count() != header.class_count {
        return Err(FormatError::InvalidHeader("dimensions disagree with parameters".into()));
    }
    Ok(model)
}

pub fn write_head_file<S: Scalar>(model: &HeadModel<S>, path: impl AsRef<Path>) -> Result<(), FormatError> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn read_head_file<S: Scalar>(path: impl AsRef<Path>) -> Result<HeadModel<S>, FormatError> {
    decode(&fs::read(path)?)
}
