//! Binary checkpoint format.
//!
//! ```text
//! <UTF-8 JSON header> 0x00 <little-endian tensor bytes>
//! ```
//!
//! The header is an object with the model description under `"model"`, free
//! form string metadata under `"meta"`, and a `"tensors"` array whose
//! entries carry `name`, `shape`, `dtype` (`"f32"` or `"f64"`) and `offset`,
//! the byte offset of the tensor relative to the first byte after the NUL.
//! Tensors are stored back to back in header order.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, Network};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelSpec,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint; tensors are converted to the requested precision.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: ModelSpec,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

pub fn encode_checkpoint<T: Scalar>(
    spec: &ModelSpec,
    net: &dyn Network<T>,
    meta: &BTreeMap<String, String>,
) -> Result<Vec<u8>> {
    let named = net.store().named_tensors();
    let mut entries = Vec::with_capacity(named.len());
    let mut offset = 0;
    for (name, t) in &named {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: T::DTYPE.to_string(),
            offset,
        });
        offset += t.numel() * T::BYTES;
    }
    let header = Header {
        model: spec.clone(),
        meta: meta.clone(),
        tensors: entries,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(0);
    out.reserve(offset);
    for (_, t) in &named {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    spec: &ModelSpec,
    net: &dyn Network<T>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(spec, net, meta)?)?;
    Ok(())
}

fn read_values<T: Scalar>(data: &[u8], e: &TensorEntry) -> Result<Vec<T>> {
    let n: usize = e.shape.iter().product();
    let width = match e.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => {
            return Err(Error::Checkpoint(format!(
                "tensor {}: unknown dtype {other}",
                e.name
            )))
        }
    };
    let bytes = data
        .get(e.offset..e.offset + n * width)
        .ok_or_else(|| Error::Checkpoint(format!("tensor {} extends past end of file", e.name)))?;
    Ok(bytes
        .chunks_exact(width)
        .map(|c| {
            if width == 4 {
                T::of(f32::read_le(c) as f64)
            } else {
                T::of(f64::read_le(c))
            }
        })
        .collect())
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let nul = bytes
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| Error::Checkpoint("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nul])?;
    let data = &bytes[nul + 1..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let values = read_values(data, e)?;
        tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), values)?));
    }
    Ok(Checkpoint {
        model: header.model,
        meta: header.meta,
        tensors,
    })
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Rebuild the network described by a checkpoint and load its tensors.
pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(ModelSpec, Box<dyn Network<T>>, BTreeMap<String, String>)> {
    let ck = read_checkpoint::<T>(path)?;
    let mut net = ck.model.build::<T>(0)?;
    let map: HashMap<String, Tensor<T>> = ck.tensors.into_iter().collect();
    net.store_mut().assign_named(map)?;
    Ok((ck.model, net, ck.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InceptionConfig;

    fn tiny() -> ModelSpec {
        ModelSpec::InceptionTime(InceptionConfig {
            depth: 3,
            nf: 2,
            bottleneck_channels: 2,
            kernel_sizes: vec![5, 3],
            seq_len: 12,
            ..Default::default()
        })
    }

    #[test]
    fn round_trip_preserves_every_tensor() {
        let spec = tiny();
        let net = spec.build::<f32>(9).unwrap();
        let meta = BTreeMap::from([("epoch".to_string(), "3".to_string())]);
        let bytes = encode_checkpoint(&spec, net.as_ref(), &meta).unwrap();
        let ck = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(ck.model, spec);
        assert_eq!(ck.meta, meta);
        let mut other = spec.build::<f32>(10).unwrap();
        assert_ne!(other.store().digest(), net.store().digest());
        other
            .store_mut()
            .assign_named(ck.tensors.into_iter().collect())
            .unwrap();
        assert_eq!(other.store().digest(), net.store().digest());
    }

    #[test]
    fn header_layout() {
        let spec = tiny();
        let net = spec.build::<f64>(1).unwrap();
        let bytes = encode_checkpoint(&spec, net.as_ref(), &BTreeMap::new()).unwrap();
        let nul = bytes.iter().position(|&b| b == 0).unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nul]).unwrap();
        let entries = header["tensors"].as_array().unwrap();
        let first = &entries[0];
        assert_eq!(first["dtype"], "f64");
        assert_eq!(first["offset"], 0);
        let last = entries.last().unwrap();
        let n: u64 = last["shape"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d.as_u64().unwrap())
            .product();
        assert_eq!(
            last["offset"].as_u64().unwrap() + n * 8,
            (bytes.len() - nul - 1) as u64
        );
    }

    #[test]
    fn truncated_file_rejected() {
        let spec = tiny();
        let net = spec.build::<f32>(1).unwrap();
        let bytes = encode_checkpoint(&spec, net.as_ref(), &BTreeMap::new()).unwrap();
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 4]).is_err());
        assert!(decode_checkpoint::<f32>(b"{}").is_err());
    }
}
