use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::kernels;

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    Deconv2d { x: Var, w: Var, b: Var },
    MaxPool2d { x: Var, argmax: Vec<u32> },
    Concat { xs: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    Relu { x: Var },
    Sigmoid { x: Var },
    Sum { x: Var },
    Mul { a: Var, b: Var },
    DiceLoss { p: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation tape.
///
/// Nodes may only reference earlier nodes, so insertion order is a
/// topological order and reverse insertion order visits each node once
/// after all of its consumers. [`Graph::backward`] may run only once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    differentiated: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the differentiated loss w.r.t. a leaf, once
    /// [`Graph::backward`] has run. `None` for constants and for leaves the
    /// loss does not depend on.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = kernels::conv2d(self.value(x), self.value(w), self.value(b))?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(y, Op::Conv2d { x, w, b }, rg))
    }

    pub fn deconv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = kernels::deconv2d(self.value(x), self.value(w), self.value(b))?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(y, Op::Deconv2d { x, w, b }, rg))
    }

    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = kernels::maxpool2d(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(y, Op::MaxPool2d { x, argmax }, rg))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let y = {
            let vals: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
            kernels::concat_channels(&vals)?
        };
        let rg = self.any_grad(xs);
        Ok(self.push(y, Op::Concat { xs: xs.to_vec() }, rg))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let y = kernels::slice_channels(self.value(x), start, len)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(y, Op::SliceChannels { x, start }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = map(self.value(x), |v| if v < 0.0 { 0.0 } else { v });
        let rg = self.any_grad(&[x]);
        self.push(y, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = map(self.value(x), kernels::sigmoid_scalar);
        let rg = self.any_grad(&[x]);
        self.push(y, Op::Sigmoid { x }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let y = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(y, Op::Mul { a, b }, rg))
    }

    /// Smoothed dice loss `1 - (1 + 2 sum p g) / (1 + sum p^2 + sum g^2)`,
    /// reduced jointly over every element (all pixels of the whole batch).
    pub fn dice_loss(&mut self, p: Var, target: &Tensor) -> Result<Var> {
        let loss = dice_loss_value(self.value(p), target)?;
        let rg = self.any_grad(&[p]);
        Ok(self.push(Tensor::scalar(loss), Op::DiceLoss { p, target: target.clone() }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`. Populates gradients of every
    /// `requires_grad` leaf; intermediate gradients are released on the way.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(Error::Backward("graph was already differentiated".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.differentiated = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(dy) = self.grads[i].take() else { continue };
            self.backprop_node(i, &dy)?;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&mut self, i: usize, dy: &Tensor) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, w, b } => {
                let need_dx = self.requires_grad(x);
                let g = kernels::conv2d_backward(self.value(x), self.value(w), self.value(b), dy, need_dx)?;
                if let Some(dx) = g.dx {
                    self.accumulate(x, dx);
                }
                self.accumulate(w, g.dw);
                self.accumulate(b, g.db);
            }
            &Op::Deconv2d { x, w, b } => {
                let need_dx = self.requires_grad(x);
                let g = kernels::deconv2d_backward(self.value(x), self.value(w), self.value(b), dy, need_dx)?;
                if let Some(dx) = g.dx {
                    self.accumulate(x, dx);
                }
                self.accumulate(w, g.dw);
                self.accumulate(b, g.db);
            }
            Op::MaxPool2d { x, argmax } => {
                let x = *x;
                let mut dx = Tensor::zeros(self.value(x).shape());
                for (&src, &g) in argmax.iter().zip(dy.data()) {
                    dx.data_mut()[src as usize] += g;
                }
                self.accumulate(x, dx);
            }
            Op::Concat { xs } => {
                let xs = xs.clone();
                let mut start = 0;
                for x in xs {
                    let c = self.value(x).shape()[1];
                    let part = kernels::slice_channels(dy, start, c)?;
                    start += c;
                    self.accumulate(x, part);
                }
            }
            &Op::SliceChannels { x, start } => {
                let [bs, c, h, w] = self.value(x).dims4("slice_channels")?;
                let len = dy.shape()[1];
                let hw = h * w;
                let mut dx = Tensor::zeros(&[bs, c, h, w]);
                for s in 0..bs {
                    dx.data_mut()[(s * c + start) * hw..(s * c + start + len) * hw]
                        .copy_from_slice(&dy.data()[s * len * hw..(s + 1) * len * hw]);
                }
                self.accumulate(x, dx);
            }
            &Op::Relu { x } => {
                let data = self.value(x).data().iter().zip(dy.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 });
                let dx = Tensor::new(dy.shape().to_vec(), data.collect())?;
                self.accumulate(x, dx);
            }
            &Op::Sigmoid { x } => {
                let data = node.value.data().iter().zip(dy.data()).map(|(&s, &g)| g * s * (1.0 - s));
                let dx = Tensor::new(dy.shape().to_vec(), data.collect())?;
                self.accumulate(x, dx);
            }
            &Op::Sum { x } => {
                let g = dy.data()[0];
                let dx = Tensor::full(self.value(x).shape(), g);
                self.accumulate(x, dx);
            }
            &Op::Mul { a, b } => {
                let (ta, tb) = (self.value(a), self.value(b));
                let da: Vec<f64> = tb.data().iter().zip(dy.data()).map(|(v, g)| v * g).collect();
                let db: Vec<f64> = ta.data().iter().zip(dy.data()).map(|(v, g)| v * g).collect();
                let shape = ta.shape().to_vec();
                self.accumulate(a, Tensor::new(shape.clone(), da)?);
                self.accumulate(b, Tensor::new(shape, db)?);
            }
            Op::DiceLoss { p, target } => {
                let p = *p;
                let up = dy.data()[0];
                let pv = self.value(p);
                let (num, den) = dice_terms(pv.data(), target.data());
                // d/dp_i [1 - num/den] = -(2 g_i den - num 2 p_i) / den^2
                let data = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&pi, &gi)| -up * (2.0 * gi * den - 2.0 * pi * num) / (den * den))
                    .collect();
                let dp = Tensor::new(pv.shape().to_vec(), data)?;
                self.accumulate(p, dp);
            }
        }
        Ok(())
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        .expect("same shape as source")
}

fn dice_terms(p: &[f64], g: &[f64]) -> (f64, f64) {
    let mut pg = 0.0;
    let mut pp = 0.0;
    let mut gg = 0.0;
    for (&pi, &gi) in p.iter().zip(g) {
        pg += pi * gi;
        pp += pi * pi;
        gg += gi * gi;
    }
    (1.0 + 2.0 * pg, 1.0 + pp + gg)
}

/// Value of the smoothed dice loss. `target` must be binary and shaped like `p`.
pub fn dice_loss_value(p: &Tensor, target: &Tensor) -> Result<f64> {
    if p.shape() != target.shape() {
        return Err(Error::shape(
            "dice_loss",
            format!("prediction {:?} vs target {:?}", p.shape(), target.shape()),
        ));
    }
    if let Some(v) = target.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("dice_loss target must be binary, found {v}")));
    }
    let (num, den) = dice_terms(p.data(), target.data());
    Ok(1.0 - num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_fn(&[2, 3, 4], |i| i as f64 - 7.0));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut g = Graph::new();
        let xt = Tensor::from_fn(&[5, 2], |i| (i as f64).sin());
        let x = g.param(xt.clone());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        for (gv, xv) in g.grad(x).unwrap().data().iter().zip(xt.data()) {
            assert_eq!(*gv, 2.0 * xv);
        }
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::Backward(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(x), Err(Error::Backward(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[3], 2.0));
        let c = g.constant(Tensor::full(&[3], 5.0));
        let m = g.mul(x, c).unwrap();
        let s = g.sum(m);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[5.0; 3]);
    }

    #[test]
    fn maxpool_routes_whole_gradient_to_one_element_per_window() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[1, 2, 4, 4], 1.0));
        let y = g.maxpool2d(x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        let dx = g.grad(x).unwrap();
        for plane in dx.data().chunks(16) {
            for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
                let win = [plane[i * 4 + j], plane[i * 4 + j + 1], plane[(i + 1) * 4 + j], plane[(i + 1) * 4 + j + 1]];
                assert_eq!(win, [1.0, 0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn dice_loss_examples() {
        let g4 = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(dice_loss_value(&g4, &g4).unwrap(), 0.0);

        let g = Tensor::new(vec![1, 1, 3, 3], vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let l = dice_loss_value(&Tensor::zeros(&[1, 1, 3, 3]), &g).unwrap();
        assert!((l - 0.8).abs() < 1e-12);

        let p = Tensor::full(&[1, 1, 2, 2], 0.5);
        let g = Tensor::new(vec![1, 1, 2, 2], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((dice_loss_value(&p, &g).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_loss_rejects_bad_targets() {
        let p = Tensor::full(&[1, 1, 2, 2], 0.5);
        assert!(dice_loss_value(&p, &Tensor::full(&[1, 1, 2, 2], 0.5)).is_err());
        assert!(matches!(dice_loss_value(&p, &Tensor::zeros(&[1, 1, 4])), Err(Error::Shape { .. })));
    }

    #[test]
    fn relu_and_maxpool_propagate_nan() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, f64::NAN, -2.0, 0.5]).unwrap());
        let r = g.relu(x);
        assert!(g.value(r).data()[1].is_nan());
        assert_eq!(g.value(r).data()[2], 0.0);
        let p = g.maxpool2d(x).unwrap();
        assert!(g.value(p).data()[0].is_nan());
    }
}
