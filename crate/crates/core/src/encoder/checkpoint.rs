//! Tensor checkpoint files.
//!
//! Layout:
//! - bytes `0..8`: header length `L`, little-endian `u64`;
//! - bytes `8..8+L`: UTF-8 JSON object, tensor name →
//!   `{"dtype":"f32","shape":[..],"offset":o,"nbytes":n}`;
//! - payload: little-endian `f32` values, tensors tightly packed in ascending
//!   offset order, offsets relative to the start of the payload.
//!
//! Tensors are written in name order, so identical stores produce identical
//! bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    nbytes: usize,
}

/// Serializes a store. Every value must be exactly representable as `f32`,
/// otherwise the round trip would not be lossless.
pub fn checkpoint_bytes(store: &ParamStore) -> Result<Vec<u8>> {
    let mut header = BTreeMap::new();
    let mut payload = Vec::with_capacity(store.total_elements() * 4);
    for (name, t) in store.iter() {
        if !t.is_f32_exact() {
            return Err(Error::config(format!(
                "tensor `{name}` holds values not representable as f32"
            )));
        }
        let offset = payload.len();
        for &v in t.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        header.insert(
            name.to_string(),
            Entry {
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset,
                nbytes: payload.len() - offset,
            },
        );
    }
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let load = |m: String| Error::Load(m);
    if bytes.len() < 8 {
        return Err(load(format!("file is {} bytes, shorter than the header length field", bytes.len())));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let hend = 8u64
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| load(format!("header length {hlen} exceeds file size {}", bytes.len())))?
        as usize;
    let header: BTreeMap<String, Entry> = serde_json::from_slice(&bytes[8..hend])
        .map_err(|e| load(format!("malformed header: {e}")))?;
    let payload = &bytes[hend..];

    let mut order: Vec<(&String, &Entry)> = header.iter().collect();
    order.sort_by_key(|(_, e)| e.offset);
    let mut expected_offset = 0usize;
    let mut store = ParamStore::new();
    for (name, e) in order {
        if e.dtype != "f32" {
            return Err(load(format!("tensor `{name}` has unsupported dtype {:?}", e.dtype)));
        }
        let count: usize = e.shape.iter().product();
        if e.shape.is_empty() || e.nbytes != count * 4 {
            return Err(load(format!(
                "tensor `{name}`: shape {:?} does not match {} bytes",
                e.shape, e.nbytes
            )));
        }
        if e.offset != expected_offset {
            return Err(load(format!(
                "tensor `{name}` at offset {} but data is packed up to {expected_offset}",
                e.offset
            )));
        }
        let end = e.offset + e.nbytes;
        if end > payload.len() {
            return Err(load(format!(
                "tensor `{name}` is truncated: needs payload bytes {}..{end}, file has {}",
                e.offset,
                payload.len()
            )));
        }
        let data = payload[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        store.insert(name.clone(), Tensor::new(e.shape.clone(), data).map_err(|err| load(err.to_string()))?);
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        return Err(load(format!(
            "{} trailing payload bytes after the last tensor",
            payload.len() - expected_offset
        )));
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(store)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Checks a loaded store against the tensors a model expects, by name and
/// shape. Extra or missing tensors are errors.
pub fn validate_against(loaded: &ParamStore, expected: &ParamStore) -> Result<()> {
    for (name, t) in expected.iter() {
        match loaded.get(name) {
            None => return Err(Error::Load(format!("checkpoint is missing tensor `{name}`"))),
            Some(l) if l.shape() != t.shape() => {
                return Err(Error::Load(format!(
                    "tensor `{name}` has shape {:?}, configuration expects {:?}",
                    l.shape(),
                    t.shape()
                )))
            }
            _ => {}
        }
    }
    if let Some(extra) = loaded.names().find(|n| !expected.contains(n)) {
        return Err(Error::Load(format!("checkpoint has unexpected tensor `{extra}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::numcore::Rng;

    fn tiny_store() -> ParamStore {
        let cfg = EncoderConfig {
            image_size: 4,
            patch_size: 2,
            embed_dim: 4,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            latent_dim: 3,
            ..EncoderConfig::vit_tiny_test(1)
        };
        cfg.init_params(&mut Rng::new(9)).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let s = tiny_store();
        let bytes = checkpoint_bytes(&s).unwrap();
        let back = parse_checkpoint(&bytes).unwrap();
        assert!(back.bits_eq(&s));
        assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let mut s = ParamStore::new();
        s.insert("b", Tensor::vector(vec![1.0, -2.0]));
        s.insert("a", Tensor::scalar(0.5));
        let bytes = checkpoint_bytes(&s).unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(
            header,
            r#"{"a":{"dtype":"f32","shape":[1],"offset":0,"nbytes":4},"b":{"dtype":"f32","shape":[2],"offset":4,"nbytes":8}}"#
        );
        assert_eq!(&bytes[8 + hlen..8 + hlen + 4], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 8 + hlen + 12);
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = checkpoint_bytes(&tiny_store()).unwrap();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(parse_checkpoint(&bytes[..cut]), Err(Error::Load(_))), "cut {cut}");
        }
    }

    #[test]
    fn malformed_header_rejected() {
        let mut bytes = checkpoint_bytes(&tiny_store()).unwrap();
        bytes[9] = b'!';
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::Load(_))));
    }

    #[test]
    fn non_f32_values_refused() {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(0.1));
        assert!(checkpoint_bytes(&s).is_err());
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let small = tiny_store();
        let mut big = ParamStore::new();
        for (name, t) in small.iter() {
            let mut shape = t.shape().to_vec();
            shape[0] += 1;
            big.insert(name, Tensor::zeros(&shape));
        }
        let err = validate_against(&big, &small).unwrap_err().to_string();
        assert!(err.contains("encoder."), "{err}");
    }
}
