use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// 8-bit grey-scale images with integer labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawImageSet {
    pub rows: usize,
    pub cols: usize,
    /// `n · rows · cols` pixels, image-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImageSet {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() != labels.len() * rows * cols {
            return Err(Error::shape(format!(
                "{} pixels for {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(RawImageSet {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.image_len()..(i + 1) * self.image_len()]
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Images at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> RawImageSet {
        let mut pixels = Vec::with_capacity(idx.len() * self.image_len());
        for &i in idx {
            pixels.extend_from_slice(self.image(i));
        }
        RawImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| {
            Error::format(
                format!("{what} byte {offset}"),
                "file ends inside the header",
            )
        })
}

fn check_magic(bytes: &[u8], want: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != want {
        return Err(Error::format(
            format!("{what} byte 0"),
            format!("magic {magic:#010x}, expected {want:#010x}"),
        ));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, what: &str) -> Result<()> {
    let actual = bytes.len() - header;
    if actual != expected {
        let at = header + actual.min(expected);
        return Err(Error::format(
            format!("{what} byte {at}"),
            format!("header declares {expected} payload bytes, file holds {actual}"),
        ));
    }
    Ok(())
}

/// Parses an image file: magic `0x00000803`, then `n`, rows, cols.
pub fn parse_idx_images(bytes: &[u8], what: &str) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IMAGE_MAGIC, what)?;
    let n = read_u32(bytes, 4, what)? as usize;
    let rows = read_u32(bytes, 8, what)? as usize;
    let cols = read_u32(bytes, 12, what)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(
            format!("{what} byte 8"),
            "zero image dimension",
        ));
    }
    check_payload(bytes, 16, n * rows * cols, what)?;
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

/// Parses a label file: magic `0x00000801`, then `n`.
pub fn parse_idx_labels(bytes: &[u8], what: &str) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, what)?;
    let n = read_u32(bytes, 4, what)? as usize;
    check_payload(bytes, 8, n, what)?;
    Ok(bytes[8..].to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImageSet> {
    let img_name = images_path.display().to_string();
    let lab_name = labels_path.display().to_string();
    let (n, rows, cols, pixels) = parse_idx_images(&std::fs::read(images_path)?, &img_name)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?, &lab_name)?;
    if labels.len() != n {
        return Err(Error::format(
            format!("{lab_name} byte 4"),
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    RawImageSet::new(rows, cols, pixels, labels)
}

pub fn idx_image_bytes(set: &RawImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.pixels.len());
    for v in [
        IMAGE_MAGIC,
        set.len() as u32,
        set.rows as u32,
        set.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&set.pixels);
    out
}

pub fn idx_label_bytes(set: &RawImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    out.extend_from_slice(&set.labels);
    out
}

pub fn write_idx(set: &RawImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    std::fs::write(images_path, idx_image_bytes(set))?;
    std::fs::write(labels_path, idx_label_bytes(set))?;
    Ok(())
}
