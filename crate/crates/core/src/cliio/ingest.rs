use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn ingest(path: &Path, msg: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| ingest(path, format!("header truncated at byte offset {offset}")))
}

/// Header of an IDX file: dimensions and payload offset.
fn idx_header(bytes: &[u8], want_magic: u32, path: &Path) -> Result<(Vec<usize>, usize)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != want_magic {
        return Err(ingest(
            path,
            format!("bad magic 0x{magic:08x} at byte offset 0, expected 0x{want_magic:08x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|k| be_u32(bytes, 4 + 4 * k, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let offset = 4 + 4 * ndim;
    let need: usize = dims.iter().product();
    if bytes.len() - offset < need {
        return Err(ingest(
            path,
            format!(
                "payload truncated at byte offset {}: header promises {need} bytes after offset {offset}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() - offset > need {
        return Err(ingest(
            path,
            format!("{} trailing bytes after byte offset {}", bytes.len() - offset - need, offset + need),
        ));
    }
    Ok((dims, offset))
}

/// IDX `N×H×W` unsigned-byte images, scaled to `[0, 1]`, each `1×H×W`.
pub fn read_idx_images(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = read(path)?;
    let (dims, offset) = idx_header(&bytes, IDX_IMAGES, path)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let px = h * w;
    Ok((0..n)
        .map(|i| {
            let data = bytes[offset + i * px..offset + (i + 1) * px]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            Tensor::new(vec![1, h, w], data).expect("sized")
        })
        .collect())
}

/// IDX `N` unsigned-byte labels.
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    let (_, offset) = idx_header(&bytes, IDX_LABELS, path)?;
    Ok(bytes[offset..].iter().map(|&b| usize::from(b)).collect())
}

/// Image and label IDX files read as a pair; counts must agree.
pub fn read_idx(images: &Path, labels: &Path) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let imgs = read_idx_images(images)?;
    let labs = read_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(ingest(
            labels,
            format!("{} labels for {} images in {}", labs.len(), imgs.len(), images.display()),
        ));
    }
    Ok((imgs, labs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    /// One label byte per record.
    Cifar10,
    /// Coarse and fine label bytes; the fine label is used.
    Cifar100,
}

const CIFAR_PIXELS: usize = 3 * 32 * 32;

/// CIFAR binary records: label byte(s) then 3072 channel-planar bytes.
pub fn read_cifar_bin(path: &Path, variant: CifarVariant) -> Result<(Vec<Tensor>, Vec<usize>)> {
    let bytes = read(path)?;
    let label_bytes = match variant {
        CifarVariant::Cifar10 => 1,
        CifarVariant::Cifar100 => 2,
    };
    let record = label_bytes + CIFAR_PIXELS;
    if bytes.len() % record != 0 {
        let complete = bytes.len() / record * record;
        return Err(ingest(
            path,
            format!(
                "length {} is not a multiple of the {record}-byte record; partial record at byte offset {complete}",
                bytes.len()
            ),
        ));
    }
    let mut images = Vec::with_capacity(bytes.len() / record);
    let mut labels = Vec::with_capacity(images.capacity());
    for rec in bytes.chunks_exact(record) {
        labels.push(usize::from(rec[label_bytes - 1]));
        let data = rec[label_bytes..].iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(Tensor::new(vec![3, 32, 32], data).expect("sized"));
    }
    Ok((images, labels))
}
