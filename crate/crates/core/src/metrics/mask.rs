use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major boolean region.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::shape(
                "mask",
                format!("{width}x{height} mask with {} bits", bits.len()),
            ));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask { width, height, bits: vec![false; width * height] }
    }

    /// `f(x, y)` decides each pixel; `x` is the column.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        BinaryMask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates `(x, y)` in row-major order.
    pub fn points(&self) -> Vec<(i64, i64)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| ((i % self.width) as i64, (i / self.width) as i64))
            .collect()
    }

    /// `[1, 1, H, W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![1, 1, self.height, self.width],
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dimensions are positive")
    }
}

/// Foreground wherever `p >= threshold`.
pub fn binarize(p: &[f64], width: usize, height: usize, threshold: f64) -> Result<BinaryMask> {
    BinaryMask::new(width, height, p.iter().map(|&v| v >= threshold).collect())
}

/// One mask per batch entry of a `[B, 1, H, W]` probability map.
pub fn binarize_batch(p: &Tensor, threshold: f64) -> Result<Vec<BinaryMask>> {
    let [b, c, h, w] = p.dims4("binarize")?;
    if c != 1 {
        return Err(Error::shape("binarize", format!("expected one channel, got {c}")));
    }
    p.data().chunks(h * w).take(b).map(|s| binarize(s, w, h, threshold)).collect()
}
