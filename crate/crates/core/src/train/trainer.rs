use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ssan_tensor::{Graph, Tensor};

use super::adadelta::Adadelta;
use crate::checkpoint;
use crate::data::LabeledSample;
use crate::encoder::Mode;
use crate::error::{Error, Result};
use crate::model::{Prepared, Recognizer};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub rho: f64,
    pub eps: f64,
    /// Where `last.ckpt` and `best.ckpt` go; no files when `None`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            steps: 5000,
            seed: 0,
            rho: super::adadelta::DEFAULT_RHO,
            eps: super::adadelta::DEFAULT_EPSILON,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of every step.
    pub losses: Vec<f64>,
    /// Mean loss of every completed or final partial epoch.
    pub epoch_losses: Vec<f64>,
    pub best_epoch_loss: Option<f64>,
}

/// Encoded labels and prepared images, computed once.
pub struct TrainSet {
    prepared: Vec<Prepared<f32>>,
    labels: Vec<Vec<usize>>,
}

impl TrainSet {
    pub fn new(model: &Recognizer<f32>, samples: &[LabeledSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("training set is empty"));
        }
        let labels = samples.iter().map(|s| model.charset().encode(&s.label)).collect::<Result<Vec<_>>>()?;
        let prepared = samples.par_iter().map(|s| model.prepare(&s.image)).collect();
        Ok(Self { prepared, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One optimizer step on the samples at `indices`; returns the mean loss.
pub fn train_step(
    model: &mut Recognizer<f32>,
    opt: &mut Adadelta<f32>,
    set: &TrainSet,
    indices: &[usize],
    step: usize,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.params().bind(&mut g);
    let batch: Vec<&Prepared<f32>> = indices.iter().map(|&i| &set.prepared[i]).collect();
    let labels: Vec<Vec<usize>> = indices.iter().map(|&i| set.labels[i].clone()).collect();
    let (loss, bn) = model.batch_loss(&mut g, &vars, &batch, &labels, Mode::Train)?;
    let value = g.value(loss).item() as f64;
    if !value.is_finite() {
        return Err(Error::Numerical { step, detail: format!("batch loss is {}", value) });
    }
    let grads = g.backward(loss)?;
    let mut pairs: Vec<(&str, &Tensor<f32>)> = Vec::new();
    for (name, var) in vars.iter() {
        if let Some(t) = grads.get(var) {
            if !t.is_finite() {
                return Err(Error::Numerical { step, detail: format!("gradient of {} is not finite", name) });
            }
            pairs.push((name, t));
        }
    }
    opt.step(model.params_mut(), pairs)?;
    model.apply_bn_updates(&bn)?;
    Ok(value)
}

/// Adadelta on the teacher-forced loss for `config.steps` minibatches.
/// Every epoch visits the samples in a fresh seeded order. `on_step`
/// receives the step index and its loss.
pub fn train(
    model: &mut Recognizer<f32>,
    samples: &[LabeledSample],
    config: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::input("batch size must be at least 1"));
    }
    let set = TrainSet::new(model, samples)?;
    let mut opt = Adadelta::new(config.rho, config.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0;
    while step < config.steps {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_steps = 0;
        for batch in order.chunks(config.batch_size) {
            if step == config.steps {
                break;
            }
            let loss = train_step(model, &mut opt, &set, batch, step)?;
            report.losses.push(loss);
            on_step(step, loss);
            epoch_sum += loss;
            epoch_steps += 1;
            step += 1;
        }
        let epoch_loss = epoch_sum / epoch_steps as f64;
        report.epoch_losses.push(epoch_loss);
        let improved = report.best_epoch_loss.is_none_or(|b| epoch_loss < b);
        if improved {
            report.best_epoch_loss = Some(epoch_loss);
        }
        if let Some(dir) = &config.checkpoint_dir {
            checkpoint::save(model, &dir.join(LAST_CHECKPOINT))?;
            if improved {
                checkpoint::save(model, &dir.join(BEST_CHECKPOINT))?;
            }
        }
    }
    Ok(report)
}
