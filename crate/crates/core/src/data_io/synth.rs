//! Speckled ellipse phantoms standing in for ultrasound images.
//!
//! Each sample is a rotated ellipse lesion, darker than its background,
//! under multiplicative speckle `v * (1 + sigma * n)` with `n` standard
//! normal, clamped to `[0, 1]`. The mask is the exact discrete ellipse:
//! pixels whose centres satisfy the ellipse inequality.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::par;
use crate::rng;

use super::{Dataset, GrayImage, Origin, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub image_size: usize,
    /// Range of lesion major-axis lengths (twice the major semi-axis), pixels.
    pub axis_min: f64,
    pub axis_max: f64,
    /// Explicit major-axis lengths, cycled over samples; overrides the range.
    pub axes: Vec<f64>,
    /// Range of minor/major semi-axis ratios.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub lesion_mean: f64,
    pub background_mean: f64,
    pub speckle_sigma: f64,
    pub max_rotation_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 12,
            image_size: 64,
            axis_min: 16.0,
            axis_max: 40.0,
            axes: Vec::new(),
            ratio_min: 0.5,
            ratio_max: 1.0,
            lesion_mean: 0.25,
            background_mean: 0.65,
            speckle_sigma: 0.15,
            max_rotation_deg: 90.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.count == 0 || self.image_size == 0 {
            return fail(format!("count {} and image_size {} must be positive", self.count, self.image_size));
        }
        if self.speckle_sigma.is_nan() || self.speckle_sigma < 0.0 {
            return fail(format!("speckle sigma must be >= 0, got {}", self.speckle_sigma));
        }
        if !(0.0 < self.ratio_min && self.ratio_min <= self.ratio_max && self.ratio_max <= 1.0) {
            return fail(format!("axis ratio range [{}, {}] must lie in (0, 1]", self.ratio_min, self.ratio_max));
        }
        if !(2.0 <= self.axis_min && self.axis_min <= self.axis_max) {
            return fail(format!("axis range [{}, {}] invalid (min >= 2)", self.axis_min, self.axis_max));
        }
        if self.axes.iter().any(|&a| a.is_nan() || a < 2.0) {
            return fail(format!("explicit axes must be >= 2, got {:?}", self.axes));
        }
        for (name, v) in [("lesion_mean", self.lesion_mean), ("background_mean", self.background_mean)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        // Any rotation of the largest ellipse must fit inside the frame.
        let largest = if self.axes.is_empty() {
            self.axis_max
        } else {
            self.axes.iter().copied().fold(0.0, f64::max)
        };
        if largest > (self.image_size - 1) as f64 {
            return fail(format!("lesion axis {largest} does not fit a {}-pixel frame", self.image_size));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    pub rotation: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u * u) / (self.semi_major * self.semi_major) + (v * v) / (self.semi_minor * self.semi_minor) <= 1.0
    }

    pub fn rasterize(&self, size: usize) -> BinaryMask {
        BinaryMask::from_fn(size, size, |x, y| self.contains(x as f64, y as f64))
    }

    /// Half-widths of the axis-aligned bounding box.
    fn half_extent(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (a, b) = (self.semi_major, self.semi_minor);
        ((a * a * c * c + b * b * s * s).sqrt(), (a * a * s * s + b * b * c * c).sqrt())
    }
}

fn one(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    let mut rng = rng::stream(cfg.seed, &[index as u64]);
    let axis = if cfg.axes.is_empty() {
        rng.random_range(cfg.axis_min..=cfg.axis_max)
    } else {
        cfg.axes[index % cfg.axes.len()]
    };
    let semi_major = axis / 2.0;
    let semi_minor = semi_major * rng.random_range(cfg.ratio_min..=cfg.ratio_max);
    let max_rot = cfg.max_rotation_deg.to_radians();
    let rotation = if max_rot > 0.0 { rng.random_range(-max_rot..=max_rot) } else { 0.0 };
    let mut e = Ellipse { center: (0.0, 0.0), semi_major, semi_minor, rotation };
    let (hx, hy) = e.half_extent();
    let hi = (cfg.image_size - 1) as f64;
    if 2.0 * hx > hi || 2.0 * hy > hi {
        return Err(Error::Config(format!("lesion of axis {axis} does not fit sample {index}")));
    }
    let cx = if hi - hx > hx { rng.random_range(hx..=hi - hx) } else { hi / 2.0 };
    let cy = if hi - hy > hy { rng.random_range(hy..=hi - hy) } else { hi / 2.0 };
    e.center = (cx, cy);

    let size = cfg.image_size;
    let mask = e.rasterize(size);
    if mask.is_empty() {
        return Err(Error::Config(format!("sample {index}: lesion covers no pixel centre")));
    }
    let data = mask
        .bits()
        .iter()
        .map(|&inside| {
            let base = if inside { cfg.lesion_mean } else { cfg.background_mean };
            let n: f64 = rng.sample(StandardNormal);
            (base * (1.0 + cfg.speckle_sigma * n)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Sample {
        id: format!("synth_{index:04}"),
        image: GrayImage { width: size, height: size, data },
        mask,
        origin: Origin::Synthetic { semi_axes: (semi_major, semi_minor), center: (cx, cy), rotation },
        native_size: (size, size),
    })
}

/// Generates `cfg.count` phantoms; sample `i` depends only on `(seed, i)`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    par::map_range(cfg.count, |i| one(cfg, i)).into_iter().collect()
}
