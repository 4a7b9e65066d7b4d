//! MNIST-style IDX containers: `0x00000803` for `u8` images of rank 3 and
//! `0x00000801` for `u8` labels, dimensions as big-endian `u32`.

use std::path::Path;

use qvf_core::data::{LabeledDataset, Split};
use qvf_core::Tensor;

use crate::error::{read, write, Error, Reader, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// Expected image side.
pub const SIDE: usize = 28;

/// Raw contents of an image file: `(count, rows, cols, pixels)`.
pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(r.error(format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = r.take(count * rows * cols)?.to_vec();
    r.finish()?;
    Ok((count, rows, cols, pixels))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    let magic = r.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(r.error(format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = r.u32_be()? as usize;
    let labels = r.take(count)?.to_vec();
    r.finish()?;
    Ok(labels)
}

/// Loads a 28×28 split, scaling pixels by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = read_images(images_path)?;
    if (rows, cols) != (SIDE, SIDE) {
        return Err(Error::format(
            images_path,
            format!("images are {rows}x{cols}, expected {SIDE}x{SIDE}"),
        ));
    }
    let labels = read_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::format(
            labels_path,
            format!("{} labels for {count} images", labels.len()),
        ));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::format(labels_path, format!("label {} at index {i} is not 0 or 1", labels[i])));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let images = Tensor::new(&[count, 1, rows, cols], data)?;
    Ok(LabeledDataset::new(images, labels, split)?)
}

/// Writes a dataset back to IDX, rounding pixels to the nearest `u8`.
pub fn save_idx(dataset: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (h, w) = dataset.image_hw();
    let mut out = Vec::with_capacity(16 + dataset.images().len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [dataset.len(), h, w] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(dataset.images().data().iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    write(images_path, out)?;
    let mut out = Vec::with_capacity(8 + dataset.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    out.extend_from_slice(dataset.labels());
    write(labels_path, out)
}

/// Conventional file names inside a dataset directory.
pub fn split_paths(dir: &Path, split: Split) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{}-images.idx", split.name())),
        dir.join(format!("{}-labels.idx", split.name())),
    )
}
