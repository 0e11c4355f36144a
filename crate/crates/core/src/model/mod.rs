//! STAN and U-Net builders and forward passes.
//!
//! Channel plan with base width `F`: encoder block `k` (1..=4) works at
//! `F * 2^(k-1)` channels, the central layer at `16 F`. In STAN the second
//! encoder branch runs two half-width paths (1x1 then 3x3, 5x5 then 3x3)
//! whose concatenation matches branch one's width, and the central layer
//! fuses a 5x5 path (`8 F`) with 1x1 and 3x3 paths (`4 F` each).
//!
//! Each STAN decoder block consumes three skip links from the encoder
//! block at the same resolution:
//!
//! 1. branch-one features concatenated with the upsampled map before the
//!    first 3x3 convolution,
//! 2. the same features through a 5x5 convolution, concatenated after the
//!    first 3x3 convolution,
//! 3. the fused branch-two features concatenated after the second 3x3
//!    convolution.
//!
//! The U-Net baseline keeps only branch one, a two-conv 3x3 central layer and
//! the classic single skip. Both end in a 1x1 convolution and a sigmoid.

mod weights;
mod wiring;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use weights::{load_weights, save_weights, FORMAT_VERSION, MAGIC};
pub use wiring::{SkipLink, SkipUse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Stan,
    Unet,
}

impl Arch {
    pub fn tag(self) -> u32 {
        match self {
            Arch::Stan => 0,
            Arch::Unet => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Arch::Stan),
            1 => Some(Arch::Unet),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Stan => "stan",
            Arch::Unet => "unet",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stan" => Ok(Arch::Stan),
            "unet" | "u-net" => Ok(Arch::Unet),
            other => Err(Error::Config(format!("unknown arch {other:?} (expected stan or unet)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_size: usize,
    pub base_filters: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { arch: Arch::Stan, input_size: 256, base_filters: 32, seed: 0 }
    }
}

impl ModelConfig {
    pub fn new(arch: Arch, input_size: usize, base_filters: usize, seed: u64) -> Self {
        ModelConfig { arch, input_size, base_filters, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(16) {
            return Err(Error::Config(format!(
                "input_size must be a positive multiple of 16, got {}",
                self.input_size
            )));
        }
        if self.base_filters == 0 || !self.base_filters.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "base_filters must be a positive multiple of 4, got {}",
                self.base_filters
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    /// Same-padded, stride 1, odd square kernel.
    Same { kernel: usize },
    /// 2x2 kernel, stride 2.
    Transposed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub name: String,
    pub kind: ConvKind,
    /// `[cout, cin, k, k]` for [`ConvKind::Same`], `[cin, cout, 2, 2]` for
    /// [`ConvKind::Transposed`].
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: Vec<ConvParams>,
    skips: Vec<SkipUse>,
}

pub fn build_stan(config: ModelConfig) -> Result<Model> {
    Model::build(ModelConfig { arch: Arch::Stan, ..config })
}

pub fn build_unet(config: ModelConfig) -> Result<Model> {
    Model::build(ModelConfig { arch: Arch::Unet, ..config })
}

fn trace(config: &ModelConfig) -> Result<wiring::Tracer> {
    config.validate()?;
    let mut tracer = wiring::Tracer::default();
    let input = wiring::Dims { channels: 1, size: config.input_size };
    let out = wiring::run(&mut tracer, config.arch, &input, config.base_filters)?;
    debug_assert_eq!(out, wiring::Dims { channels: 1, size: config.input_size });
    Ok(tracer)
}

impl Model {
    /// Builds the architecture named by `config.arch` with fan-in scaled
    /// uniform weights (bound `sqrt(6 / fan_in)`) drawn from `config.seed`
    /// and zero biases.
    pub fn build(config: ModelConfig) -> Result<Model> {
        let tracer = trace(&config)?;
        let mut rng = crate::rng::stream(config.seed, &[0x1417]);
        let params = tracer
            .params
            .iter()
            .map(|spec| {
                let shape = spec.weight_shape();
                let fan_in = match spec.kind {
                    ConvKind::Same { kernel } => spec.in_channels * kernel * kernel,
                    // Each upsampled pixel receives exactly one tap per input channel.
                    ConvKind::Transposed => spec.in_channels,
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weight = Tensor::from_fn(&shape, |_| rng.sample(dist));
                ConvParams {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    weight,
                    bias: Tensor::zeros(&[spec.out_channels]),
                }
            })
            .collect();
        Ok(Model { config, params, skips: tracer.skips })
    }

    /// Reassembles a model from explicit parameters, checking names and shapes
    /// against the traced layout for `config`.
    pub fn from_params(config: ModelConfig, params: Vec<ConvParams>) -> Result<Model> {
        let tracer = trace(&config)?;
        if tracer.params.len() != params.len() {
            return Err(Error::WeightMismatch(format!(
                "{} layers expected, {} given",
                tracer.params.len(),
                params.len()
            )));
        }
        for (spec, p) in tracer.params.iter().zip(&params) {
            if spec.name != p.name || spec.kind != p.kind {
                return Err(Error::WeightMismatch(format!("expected layer {}, found {}", spec.name, p.name)));
            }
            if p.weight.shape() != spec.weight_shape() || p.bias.shape() != [spec.out_channels] {
                return Err(Error::WeightMismatch(format!(
                    "{}: weight {:?} bias {:?}, expected {:?} and [{}]",
                    p.name,
                    p.weight.shape(),
                    p.bias.shape(),
                    spec.weight_shape(),
                    spec.out_channels
                )));
            }
        }
        Ok(Model { config, params, skips: tracer.skips })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[ConvParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ConvParams] {
        &mut self.params
    }

    /// Flattened `(weight, bias, weight, bias, ...)` tensors in layer order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn param_count(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    /// Every skip link consumed by the decoder, in wiring order.
    pub fn skip_links(&self) -> &[SkipUse] {
        &self.skips
    }

    /// Skip links consumed by decoder block `level` (1 = full resolution).
    pub fn skips_into(&self, level: usize) -> Vec<&SkipUse> {
        self.skips.iter().filter(|s| s.into_decoder == level).collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.input_size;
        match shape {
            [b, 1, h, w] if *b > 0 && *h == s && *w == s => Ok(()),
            _ => Err(Error::shape(
                "forward",
                format!("expected [B, 1, {s}, {s}], got {shape:?}"),
            )),
        }
    }

    /// Probability map `[B, 1, S, S]` for a batch `[B, 1, S, S]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch.shape())?;
        let mut exec = wiring::Eager::new(&self.params);
        let input = Arc::new(batch.clone());
        let out = wiring::run(&mut exec, self.config.arch, &input, self.config.base_filters)?;
        Ok(Arc::try_unwrap(out).unwrap_or_else(|shared| (*shared).clone()))
    }

    /// Records the forward pass onto `graph`. Returns the probability map and
    /// the `(weight, bias)` leaves in layer order.
    pub fn forward_graph(&self, graph: &mut Graph, input: Var) -> Result<(Var, Vec<(Var, Var)>)> {
        self.check_input(graph.value(input).shape())?;
        let mut exec = wiring::Recorder::new(graph, &self.params);
        let out = wiring::run(&mut exec, self.config.arch, &input, self.config.base_filters)?;
        Ok((out, exec.leaves))
    }
}
