use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Graph, Var};

fn eval<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v)?;
    g.value(out)
        .item()
        .ok_or_else(|| Error::InvalidArgument("grad_check: function is not scalar-valued".into()))
}

/// Compares the reverse-mode gradient of scalar `f` at `x` with central
/// differences of step `h` and returns the largest
/// `|analytic - numeric| / max(1, |analytic|)` over every element of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, h, &all)
}

/// [`grad_check`] restricted to the listed flat element indices.
pub fn grad_check_at<F>(f: F, x: &Tensor, h: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    g.backward(out)?;
    let analytic = g.take_grad(v).unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for &i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
