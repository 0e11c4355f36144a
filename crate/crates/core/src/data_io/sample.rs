use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::Tensor;

use super::pgm::{read_pgm, write_pgm, Pgm};
use super::resize::{resize_bilinear, resize_nearest};

/// Row-major grayscale plane with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, 1, self.height, self.width], self.data.clone()).expect("positive image dimensions")
    }

    pub fn to_pgm(&self) -> Pgm {
        Pgm {
            width: self.width,
            height: self.height,
            pixels: self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Origin {
    File { image: PathBuf, mask: PathBuf },
    Synthetic { semi_axes: (f64, f64), center: (f64, f64), rotation: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub origin: Origin,
    /// `(width, height)` before any resize.
    pub native_size: (usize, usize),
}

impl Sample {
    pub fn size(&self) -> (usize, usize) {
        (self.image.width, self.image.height)
    }
}

pub type Dataset = Vec<Sample>;

pub fn mask_from_pgm(img: &Pgm, path: &Path) -> Result<BinaryMask> {
    if let Some(&value) = img.pixels.iter().find(|&&v| v != 0 && v != 255) {
        return Err(Error::NonBinaryMask { path: path.to_path_buf(), value });
    }
    BinaryMask::new(img.width, img.height, img.pixels.iter().map(|&v| v == 255).collect())
}

pub fn mask_to_pgm(mask: &BinaryMask) -> Pgm {
    Pgm {
        width: mask.width(),
        height: mask.height(),
        pixels: mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    }
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(&mask_to_pgm(mask), path)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    mask_from_pgm(&read_pgm(path)?, path)
}

/// Reads an image as `[0, 1]` intensities, bilinearly resized to
/// `target_size` when given.
pub fn load_image(path: impl AsRef<Path>, target_size: Option<usize>) -> Result<(GrayImage, (usize, usize))> {
    let img = read_pgm(path)?;
    let native = (img.width, img.height);
    let data: Vec<f64> = img.pixels.iter().map(|&v| f64::from(v) / 255.0).collect();
    let image = match target_size {
        Some(s) if (s, s) != native => GrayImage { width: s, height: s, data: resize_bilinear(&data, img.width, img.height, s, s) },
        _ => GrayImage { width: img.width, height: img.height, data },
    };
    Ok((image, native))
}

/// Loads an image/mask pair. The image is scaled to `[0, 1]` and bilinearly
/// resized; the mask (values 0 or 255 only) is nearest-neighbour resized.
pub fn load_sample(image_path: impl AsRef<Path>, mask_path: impl AsRef<Path>, target_size: Option<usize>) -> Result<Sample> {
    let (image_path, mask_path) = (image_path.as_ref(), mask_path.as_ref());
    let stem = image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (image, native) = load_image(image_path, target_size)?;
    let mask = load_mask(mask_path)?;
    if (mask.width(), mask.height()) != native {
        return Err(Error::PairSize { stem, image: native, mask: (mask.width(), mask.height()) });
    }
    let mask = match target_size {
        Some(s) if (s, s) != native => resize_nearest(&mask, s, s),
        _ => mask,
    };
    Ok(Sample {
        id: stem,
        image,
        mask,
        origin: Origin::File { image: image_path.to_path_buf(), mask: mask_path.to_path_buf() },
        native_size: native,
    })
}

const MASK_SUFFIX: &str = "_mask";

/// Pairs `<stem>.pgm` with `<stem>_mask.pgm` in `dir`, in lexicographic stem order.
pub fn dataset_manifest(dir: impl AsRef<Path>, target_size: Option<usize>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut images = BTreeSet::new();
    let mut masks = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        match stem.strip_suffix(MASK_SUFFIX) {
            Some(base) => masks.insert(base.to_string()),
            None => images.insert(stem.to_string()),
        };
    }
    let unpaired: Vec<String> = images.symmetric_difference(&masks).cloned().collect();
    if !unpaired.is_empty() {
        return Err(Error::Unpaired { dir: dir.to_path_buf(), stems: unpaired });
    }
    images
        .iter()
        .map(|stem| {
            load_sample(
                dir.join(format!("{stem}.pgm")),
                dir.join(format!("{stem}{MASK_SUFFIX}.pgm")),
                target_size,
            )
        })
        .collect()
}

/// Writes each sample as `<id>.pgm` and `<id>_mask.pgm`.
pub fn write_dataset(samples: &[Sample], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in samples {
        write_pgm(&s.image.to_pgm(), dir.join(format!("{}.pgm", s.id)))?;
        save_mask(&s.mask, dir.join(format!("{}{MASK_SUFFIX}.pgm", s.id)))?;
    }
    Ok(())
}
