//! Flat `key = value` run configuration shared by every command.
//!
//! Lines are `key = value`; blank lines and `#` comments are skipped.
//! Unknown or repeated keys are errors. Defaults target desk-scale runs
//! (64 px inputs, 8 base filters); the library-level [`ModelConfig`]
//! default keeps the full 256 px / 32 filter network.
//!
//! | key | default |
//! |-----|---------|
//! | `arch` | `stan` |
//! | `input_size` | 64 |
//! | `base_filters` | 8 |
//! | `seed` | 0 |
//! | `batch_size` | 4 |
//! | `epochs` | 50 |
//! | `learning_rate` | 1e-4 |
//! | `beta1`, `beta2`, `epsilon` | 0.9, 0.999, 1e-8 |
//! | `shift_fraction` | 0.1 |
//! | `folds` | 5 |
//! | `threshold` | 0.5 |
//! | `small_axis` | 120 |
//! | `synth_count` | 12 |
//! | `synth_image_size` | 64 |
//! | `synth_axis_min`, `synth_axis_max` | 16, 40 |
//! | `synth_axes` | empty (comma separated list) |
//! | `synth_ratio_min`, `synth_ratio_max` | 0.5, 1 |
//! | `synth_lesion_mean`, `synth_background_mean` | 0.25, 0.65 |
//! | `synth_speckle_sigma` | 0.15 |
//! | `synth_max_rotation_deg` | 90 |
//!
//! `seed` drives model initialisation, training and phantom generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data_io::SynthConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalOptions;
use crate::model::{Arch, ModelConfig};
use crate::training::{AdamConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seed = 0;
        RunConfig {
            model: ModelConfig { arch: Arch::Stan, input_size: 64, base_filters: 8, seed },
            train: TrainConfig { seed, ..TrainConfig::default() },
            synth: SynthConfig { seed, ..SynthConfig::default() },
            eval: EvalOptions::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.model.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "arch" => self.model.arch = parse(key, v)?,
            "input_size" => self.model.input_size = parse(key, v)?,
            "base_filters" => self.model.base_filters = parse(key, v)?,
            "seed" => self.set_seed(parse(key, v)?),
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "learning_rate" => self.train.adam.learning_rate = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "epsilon" => self.train.adam.epsilon = parse(key, v)?,
            "shift_fraction" => self.train.shift_fraction = parse(key, v)?,
            "folds" => self.train.folds = parse(key, v)?,
            "threshold" => self.eval.threshold = parse(key, v)?,
            "small_axis" => self.eval.small_axis = parse(key, v)?,
            "synth_count" => self.synth.count = parse(key, v)?,
            "synth_image_size" => self.synth.image_size = parse(key, v)?,
            "synth_axis_min" => self.synth.axis_min = parse(key, v)?,
            "synth_axis_max" => self.synth.axis_max = parse(key, v)?,
            "synth_axes" => {
                self.synth.axes = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "synth_ratio_min" => self.synth.ratio_min = parse(key, v)?,
            "synth_ratio_max" => self.synth.ratio_max = parse(key, v)?,
            "synth_lesion_mean" => self.synth.lesion_mean = parse(key, v)?,
            "synth_background_mean" => self.synth.background_mean = parse(key, v)?,
            "synth_speckle_sigma" => self.synth.speckle_sigma = parse(key, v)?,
            "synth_max_rotation_deg" => self.synth.max_rotation_deg = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.train.adam;
        let s = &self.synth;
        vec![
            ("arch", self.model.arch.to_string()),
            ("input_size", self.model.input_size.to_string()),
            ("base_filters", self.model.base_filters.to_string()),
            ("seed", self.seed().to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("learning_rate", learning_rate.to_string()),
            ("beta1", beta1.to_string()),
            ("beta2", beta2.to_string()),
            ("epsilon", epsilon.to_string()),
            ("shift_fraction", self.train.shift_fraction.to_string()),
            ("folds", self.train.folds.to_string()),
            ("threshold", self.eval.threshold.to_string()),
            ("small_axis", self.eval.small_axis.to_string()),
            ("synth_count", s.count.to_string()),
            ("synth_image_size", s.image_size.to_string()),
            ("synth_axis_min", s.axis_min.to_string()),
            ("synth_axis_max", s.axis_max.to_string()),
            ("synth_axes", join(&s.axes)),
            ("synth_ratio_min", s.ratio_min.to_string()),
            ("synth_ratio_max", s.ratio_max.to_string()),
            ("synth_lesion_mean", s.lesion_mean.to_string()),
            ("synth_background_mean", s.background_mean.to_string()),
            ("synth_speckle_sigma", s.speckle_sigma.to_string()),
            ("synth_max_rotation_deg", s.max_rotation_deg.to_string()),
        ]
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies the assignments in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.eval.threshold)));
        }
        if self.eval.small_axis.is_nan() || self.eval.small_axis < 0.0 {
            return Err(Error::Config(format!("small_axis must be non-negative, got {}", self.eval.small_axis)));
        }
        Ok(())
    }
}
