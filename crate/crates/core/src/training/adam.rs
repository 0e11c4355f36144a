use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment buffers mirroring a parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let zeros: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn for_model(model: &Model) -> Self {
        Self::new(model.tensors())
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor)>,
        grads: &[Option<Tensor>],
        cfg: &AdamConfig,
    ) -> Result<()> {
        let params: Vec<_> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            let g = g.as_ref().ok_or_else(|| Error::MissingGradient(name.to_string()))?;
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", format!("{name}: grad {:?} vs param {:?}", g.shape(), p.shape())));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (i, (_, p)) in params.into_iter().enumerate() {
            let g = grads[i].as_ref().expect("checked above");
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every model tensor, in
/// [`Model::tensors`] order.
pub fn adam_step(model: &mut Model, grads: &[Option<Tensor>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let named = model
        .params_mut()
        .iter_mut()
        .flat_map(|p| [(p.name.as_str(), &mut p.weight), (p.name.as_str(), &mut p.bias)]);
    state.step(named, grads, cfg)
}
