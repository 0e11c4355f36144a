use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data_io::Sample;
use crate::error::{Error, Result};
use crate::metrics::Aggregate;
use crate::model::Model;
use crate::par;
use crate::rng;
use crate::tensor::Tensor;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::augment::augment_shift;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub shift_fraction: f64,
    pub seed: u64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 50,
            adam: AdamConfig::default(),
            shift_fraction: 0.1,
            seed: 0,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.shift_fraction) {
            return Err(Error::Config(format!("shift_fraction must lie in [0, 0.5), got {}", self.shift_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.adam.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub seed: u64,
    pub config: TrainConfig,
    /// Mean dice loss over the steps of each epoch.
    pub epoch_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Held-out metrics, filled in by cross-validation.
    pub validation: Option<Aggregate>,
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

const SHUFFLE_STREAM: u64 = 0x5_4FF1E;
const AUGMENT_STREAM: u64 = 0xA_0637;

fn stack(items: &[Tensor]) -> Result<Tensor> {
    Tensor::stack_batch(items)
}

/// Runs `epochs x ceil(n / batch)` Adam steps on the dice loss. Each step
/// shifts its samples with streams derived from `(seed, epoch, sample)`.
pub fn train(model: Model, data: &[Sample], cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    train_with(model, data, cfg, |_| {})
}

pub fn train_with(
    mut model: Model,
    data: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    let size = model.config().input_size;
    if let Some(s) = data.iter().find(|s| s.size() != (size, size)) {
        return Err(Error::InvalidArgument(format!(
            "sample {} is {:?}, model expects {size}x{size}",
            s.id,
            s.size()
        )));
    }
    let mut history = TrainHistory {
        seed: cfg.seed,
        config: *cfg,
        epoch_loss: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
        validation: None,
    };
    if data.is_empty() || cfg.epochs == 0 {
        return Ok((model, history));
    }
    let mut state = AdamState::for_model(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut total = 0.0;
        let mut steps = 0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let shifted = par::map_slice(batch, |&i| {
                let mut r = rng::stream(cfg.seed, &[AUGMENT_STREAM, epoch as u64, i as u64]);
                let s = augment_shift(&data[i], cfg.shift_fraction, &mut r);
                (s.image.to_tensor(), s.mask.to_tensor())
            });
            let (images, masks): (Vec<_>, Vec<_>) = shifted.into_iter().unzip();

            let mut g = Graph::new();
            let x = g.constant(stack(&images)?);
            let (p, leaves) = model.forward_graph(&mut g, x)?;
            let loss = g.dice_loss(p, &stack(&masks)?)?;
            let value = g.value(loss).item().expect("scalar loss");
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss: value });
            }
            g.backward(loss)?;
            let grads: Vec<Option<Tensor>> =
                leaves.iter().flat_map(|&(w, b)| [g.take_grad(w), g.take_grad(b)]).collect();
            drop(g);
            adam_step(&mut model, &grads, &mut state, &cfg.adam)?;
            total += value;
            steps += 1;
        }
        let stats = EpochStats { epoch, mean_loss: total / steps as f64, seconds: started.elapsed().as_secs_f64() };
        history.epoch_loss.push(stats.mean_loss);
        history.epoch_seconds.push(stats.seconds);
        on_epoch(&stats);
    }
    Ok((model, history))
}
