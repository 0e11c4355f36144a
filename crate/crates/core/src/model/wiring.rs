//! The STAN and U-Net graphs, written once against [`Exec`].
//!
//! Three executors run the same wiring: [`Tracer`] derives parameter shapes
//! and checks every concatenation at build time, [`Eager`] evaluates plain
//! tensors, and [`Recorder`] records onto an autodiff [`Graph`].

use std::sync::Arc;

use serde::Serialize;

use crate::autodiff::{kernels, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Arch, ConvKind, ConvParams};

/// Where a skip tensor enters a decoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SkipLink {
    /// Concatenated with the upsampled map before the first convolution.
    BeforeFirstConv,
    /// Passed through a 5x5 convolution and concatenated after the first convolution.
    AfterFirstConv,
    /// Concatenated after the second convolution.
    AfterSecondConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Encoder(usize),
    Central,
    Decoder(usize),
    Head,
}

/// A skip connection as consumed by a decoder block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkipUse {
    pub from_encoder: usize,
    pub into_decoder: usize,
    pub link: SkipLink,
    pub channels: usize,
    pub resolution: usize,
}

pub(crate) trait Exec {
    type Node: Clone;

    fn stage(&mut self, _stage: Stage) {}
    fn conv(&mut self, x: &Self::Node, name: &str, out: usize, k: usize) -> Result<Self::Node>;
    fn deconv(&mut self, x: &Self::Node, name: &str, out: usize) -> Result<Self::Node>;
    fn relu(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn sigmoid(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn maxpool(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn concat(&mut self, xs: &[&Self::Node]) -> Result<Self::Node>;
    /// Marks `x` (produced by encoder `level`) as consumed through `link`.
    fn skip(&mut self, _level: usize, _link: SkipLink, x: &Self::Node) -> Self::Node {
        x.clone()
    }
}

fn conv_relu<E: Exec>(e: &mut E, x: &E::Node, name: &str, out: usize, k: usize) -> Result<E::Node> {
    let y = e.conv(x, name, out, k)?;
    e.relu(&y)
}

const LEVELS: usize = 4;

pub(crate) fn run<E: Exec>(e: &mut E, arch: Arch, image: &E::Node, base: usize) -> Result<E::Node> {
    let top = match arch {
        Arch::Stan => stan(e, image, base)?,
        Arch::Unet => unet(e, image, base)?,
    };
    e.stage(Stage::Head);
    let logits = e.conv(&top, "head.conv1", 1, 1)?;
    e.sigmoid(&logits)
}

fn stan<E: Exec>(e: &mut E, image: &E::Node, base: usize) -> Result<E::Node> {
    let mut x1 = image.clone();
    let mut x2 = image.clone();
    let mut skips = Vec::with_capacity(LEVELS);
    for k in 1..=LEVELS {
        e.stage(Stage::Encoder(k));
        let f = base << (k - 1);
        // Branch 1: two 3x3 convolutions.
        let a1 = conv_relu(e, &x1, &format!("enc{k}.b1.conv3a"), f, 3)?;
        let a2 = conv_relu(e, &a1, &format!("enc{k}.b1.conv3b"), f, 3)?;
        x1 = e.maxpool(&a2)?;
        // Branch 2: 1x1 -> 3x3 and 5x5 -> 3x3, fused.
        let p = conv_relu(e, &x2, &format!("enc{k}.b2.conv1"), f / 2, 1)?;
        let b1 = conv_relu(e, &p, &format!("enc{k}.b2.conv1_3"), f / 2, 3)?;
        let q = conv_relu(e, &x2, &format!("enc{k}.b2.conv5"), f / 2, 5)?;
        let b2 = conv_relu(e, &q, &format!("enc{k}.b2.conv5_3"), f / 2, 3)?;
        let sb = e.concat(&[&b1, &b2])?;
        x2 = e.maxpool(&sb)?;
        skips.push((a1, sb));
    }

    e.stage(Stage::Central);
    let f5 = base << LEVELS;
    let c = conv_relu(e, &x1, "central.conv5a", f5 / 2, 5)?;
    let c5 = conv_relu(e, &c, "central.conv5b", f5 / 2, 5)?;
    let c = conv_relu(e, &x2, "central.conv1a", f5 / 4, 1)?;
    let c1 = conv_relu(e, &c, "central.conv1b", f5 / 4, 1)?;
    let c = conv_relu(e, &x2, "central.conv3a", f5 / 4, 3)?;
    let c3 = conv_relu(e, &c, "central.conv3b", f5 / 4, 3)?;
    let mut u = e.concat(&[&c5, &c1, &c3])?;

    for k in (1..=LEVELS).rev() {
        e.stage(Stage::Decoder(k));
        let f = base << (k - 1);
        let (sa, sb) = &skips[k - 1];
        let up = e.deconv(&u, &format!("dec{k}.deconv"), f)?;
        let s1 = e.skip(k, SkipLink::BeforeFirstConv, sa);
        let cat = e.concat(&[&up, &s1])?;
        let t1 = conv_relu(e, &cat, &format!("dec{k}.conv3a"), f, 3)?;
        let s2 = e.skip(k, SkipLink::AfterFirstConv, sa);
        let s2 = conv_relu(e, &s2, &format!("dec{k}.skip_conv5"), f / 2, 5)?;
        let t1 = e.concat(&[&t1, &s2])?;
        let t2 = conv_relu(e, &t1, &format!("dec{k}.conv3b"), f, 3)?;
        let s3 = e.skip(k, SkipLink::AfterSecondConv, sb);
        u = e.concat(&[&t2, &s3])?;
    }
    Ok(u)
}

fn unet<E: Exec>(e: &mut E, image: &E::Node, base: usize) -> Result<E::Node> {
    let mut x = image.clone();
    let mut skips = Vec::with_capacity(LEVELS);
    for k in 1..=LEVELS {
        e.stage(Stage::Encoder(k));
        let f = base << (k - 1);
        let a1 = conv_relu(e, &x, &format!("enc{k}.conv3a"), f, 3)?;
        let a2 = conv_relu(e, &a1, &format!("enc{k}.conv3b"), f, 3)?;
        x = e.maxpool(&a2)?;
        skips.push(a2);
    }

    e.stage(Stage::Central);
    let f5 = base << LEVELS;
    let c = conv_relu(e, &x, "central.conv3a", f5, 3)?;
    let mut u = conv_relu(e, &c, "central.conv3b", f5, 3)?;

    for k in (1..=LEVELS).rev() {
        e.stage(Stage::Decoder(k));
        let f = base << (k - 1);
        let up = e.deconv(&u, &format!("dec{k}.deconv"), f)?;
        let s = e.skip(k, SkipLink::BeforeFirstConv, &skips[k - 1]);
        let cat = e.concat(&[&up, &s])?;
        let t = conv_relu(e, &cat, &format!("dec{k}.conv3a"), f, 3)?;
        u = conv_relu(e, &t, &format!("dec{k}.conv3b"), f, 3)?;
    }
    Ok(u)
}

/// Parameter layout discovered by tracing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ParamSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            ConvKind::Same { kernel } => vec![self.out_channels, self.in_channels, kernel, kernel],
            ConvKind::Transposed => vec![self.in_channels, self.out_channels, 2, 2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dims {
    pub channels: usize,
    pub size: usize,
}

/// Shape-only executor. Collects parameter specs and skip usage and rejects
/// any concatenation of mismatched spatial sizes.
#[derive(Debug, Default)]
pub(crate) struct Tracer {
    pub params: Vec<ParamSpec>,
    pub skips: Vec<SkipUse>,
    stage: Option<Stage>,
}

impl Exec for Tracer {
    type Node = Dims;

    fn stage(&mut self, stage: Stage) {
        self.stage = Some(stage);
    }

    fn conv(&mut self, x: &Dims, name: &str, out: usize, k: usize) -> Result<Dims> {
        if out == 0 {
            return Err(Error::Config(format!("{name} has zero output channels")));
        }
        self.params.push(ParamSpec {
            name: name.to_string(),
            kind: ConvKind::Same { kernel: k },
            in_channels: x.channels,
            out_channels: out,
        });
        Ok(Dims { channels: out, size: x.size })
    }

    fn deconv(&mut self, x: &Dims, name: &str, out: usize) -> Result<Dims> {
        self.params.push(ParamSpec {
            name: name.to_string(),
            kind: ConvKind::Transposed,
            in_channels: x.channels,
            out_channels: out,
        });
        Ok(Dims { channels: out, size: x.size * 2 })
    }

    fn relu(&mut self, x: &Dims) -> Result<Dims> {
        Ok(*x)
    }

    fn sigmoid(&mut self, x: &Dims) -> Result<Dims> {
        Ok(*x)
    }

    fn maxpool(&mut self, x: &Dims) -> Result<Dims> {
        if !x.size.is_multiple_of(2) {
            return Err(Error::shape("maxpool2d", format!("odd spatial extent {} at {:?}", x.size, self.stage)));
        }
        Ok(Dims { channels: x.channels, size: x.size / 2 })
    }

    fn concat(&mut self, xs: &[&Dims]) -> Result<Dims> {
        let size = xs[0].size;
        if let Some(bad) = xs.iter().find(|d| d.size != size) {
            return Err(Error::shape(
                "concat",
                format!("spatial {} vs {} at {:?}", bad.size, size, self.stage),
            ));
        }
        Ok(Dims { channels: xs.iter().map(|d| d.channels).sum(), size })
    }

    fn skip(&mut self, level: usize, link: SkipLink, x: &Dims) -> Dims {
        let into = match self.stage {
            Some(Stage::Decoder(k)) => k,
            _ => 0,
        };
        self.skips.push(SkipUse {
            from_encoder: level,
            into_decoder: into,
            link,
            channels: x.channels,
            resolution: x.size,
        });
        *x
    }
}

fn take_param<'a>(params: &'a [ConvParams], cursor: &mut usize, name: &str) -> Result<&'a ConvParams> {
    let p = params
        .get(*cursor)
        .ok_or_else(|| Error::WeightMismatch(format!("no parameter for {name}")))?;
    if p.name != name {
        return Err(Error::WeightMismatch(format!("expected {name}, found {}", p.name)));
    }
    *cursor += 1;
    Ok(p)
}

/// Evaluates the wiring on plain tensors without recording anything.
pub(crate) struct Eager<'a> {
    params: &'a [ConvParams],
    cursor: usize,
}

impl<'a> Eager<'a> {
    pub fn new(params: &'a [ConvParams]) -> Self {
        Eager { params, cursor: 0 }
    }
}

impl Exec for Eager<'_> {
    type Node = Arc<Tensor>;

    fn conv(&mut self, x: &Arc<Tensor>, name: &str, _out: usize, _k: usize) -> Result<Arc<Tensor>> {
        let p = take_param(self.params, &mut self.cursor, name)?;
        Ok(Arc::new(kernels::conv2d(x, &p.weight, &p.bias)?))
    }

    fn deconv(&mut self, x: &Arc<Tensor>, name: &str, _out: usize) -> Result<Arc<Tensor>> {
        let p = take_param(self.params, &mut self.cursor, name)?;
        Ok(Arc::new(kernels::deconv2d(x, &p.weight, &p.bias)?))
    }

    fn relu(&mut self, x: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        let data = x.data().iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        Ok(Arc::new(Tensor::new(x.shape().to_vec(), data)?))
    }

    fn sigmoid(&mut self, x: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        let data = x.data().iter().map(|&v| kernels::sigmoid_scalar(v)).collect();
        Ok(Arc::new(Tensor::new(x.shape().to_vec(), data)?))
    }

    fn maxpool(&mut self, x: &Arc<Tensor>) -> Result<Arc<Tensor>> {
        Ok(Arc::new(kernels::maxpool2d(x)?.0))
    }

    fn concat(&mut self, xs: &[&Arc<Tensor>]) -> Result<Arc<Tensor>> {
        let refs: Vec<&Tensor> = xs.iter().map(|t| t.as_ref()).collect();
        Ok(Arc::new(kernels::concat_channels(&refs)?))
    }
}

/// Records the wiring onto a graph, registering each parameter as a leaf.
pub(crate) struct Recorder<'a> {
    graph: &'a mut Graph,
    params: &'a [ConvParams],
    cursor: usize,
    /// `(weight, bias)` leaves in parameter order.
    pub leaves: Vec<(Var, Var)>,
}

impl<'a> Recorder<'a> {
    pub fn new(graph: &'a mut Graph, params: &'a [ConvParams]) -> Self {
        Recorder { graph, params, cursor: 0, leaves: Vec::with_capacity(params.len()) }
    }

    fn leaf(&mut self, name: &str) -> Result<(Var, Var)> {
        let p = take_param(self.params, &mut self.cursor, name)?;
        let w = self.graph.param(p.weight.clone());
        let b = self.graph.param(p.bias.clone());
        self.leaves.push((w, b));
        Ok((w, b))
    }
}

impl Exec for Recorder<'_> {
    type Node = Var;

    fn conv(&mut self, x: &Var, name: &str, _out: usize, _k: usize) -> Result<Var> {
        let (w, b) = self.leaf(name)?;
        self.graph.conv2d(*x, w, b)
    }

    fn deconv(&mut self, x: &Var, name: &str, _out: usize) -> Result<Var> {
        let (w, b) = self.leaf(name)?;
        self.graph.deconv2d(*x, w, b)
    }

    fn relu(&mut self, x: &Var) -> Result<Var> {
        Ok(self.graph.relu(*x))
    }

    fn sigmoid(&mut self, x: &Var) -> Result<Var> {
        Ok(self.graph.sigmoid(*x))
    }

    fn maxpool(&mut self, x: &Var) -> Result<Var> {
        self.graph.maxpool2d(*x)
    }

    fn concat(&mut self, xs: &[&Var]) -> Result<Var> {
        let vars: Vec<Var> = xs.iter().map(|v| **v).collect();
        self.graph.concat(&vars)
    }
}
