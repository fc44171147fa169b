//! Mini-batch gradient descent with momentum and holdout early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::{self, Activation, LayerParams};
use super::{signed_input, BnnModel, LayerSpec};
use crate::binarize::BitPlane;
use crate::error::{check_dim, Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub learning_rate: f32,
    pub momentum: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without holdout-loss improvement before stopping.
    pub patience: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 20,
            patience: 5,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub train_losses: Vec<f32>,
    /// Monitored loss per epoch: holdout loss, or training loss when no
    /// holdout set is given.
    pub holdout_losses: Vec<f32>,
}

fn target(label: bool) -> usize {
    if label {
        0
    } else {
        1
    }
}

impl BnnModel {
    /// Trains on `labels` (true = target class), keeping the weights with
    /// the lowest holdout loss. Stops after `patience` epochs without
    /// improvement.
    pub fn train(
        &mut self,
        images: &[BitPlane],
        labels: &[bool],
        holdout: &[BitPlane],
        holdout_labels: &[bool],
    ) -> Result<TrainReport> {
        self.train_params.validate()?;
        check_dim(images.len(), labels.len())?;
        check_dim(holdout.len(), holdout_labels.len())?;
        if images.is_empty() {
            return Err(Error::contract("no training images"));
        }
        images.iter().chain(holdout).try_for_each(|p| self.check_input(p))?;
        let hp = self.train_params.clone();
        let layers = self.arch.layers.clone();
        let shapes = self.arch.input_shapes();
        let trainable: Vec<bool> = layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { .. } => true,
                LayerSpec::Dense { fixed_weights, .. } => fixed_weights.is_none(),
                _ => false,
            })
            .collect();
        let dropout = layers.iter().find_map(|l| match l {
            LayerSpec::Dense { dropout, .. } if *dropout > 0.0 => Some(*dropout),
            _ => None,
        });
        let dense_inputs = {
            let (c, h, w) = *shapes.last().expect("non-empty architecture");
            c * h * w
        };

        let mut rng = rng_from_seed(derive_seed(self.seed, &[1]));
        let mut velocity: Vec<LayerParams<f32>> = self.params.iter().map(LayerParams::zeros_like).collect();
        let mut order: Vec<usize> = (0..images.len()).collect();
        let mut best = (f32::INFINITY, self.params.clone(), 0usize);
        let mut report = TrainReport {
            epochs_run: 0,
            best_epoch: 0,
            train_losses: Vec::new(),
            holdout_losses: Vec::new(),
        };
        let mut stale = 0;
        for epoch in 1..=hp.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0f64;
            for batch in order.chunks(hp.batch_size) {
                let masks: Vec<Option<Vec<f32>>> = batch
                    .iter()
                    .map(|_| {
                        dropout.map(|p| {
                            let keep = 1.0 / (1.0 - p);
                            (0..dense_inputs)
                                .map(|_| if rng.random_bool(p as f64) { 0.0 } else { keep })
                                .collect()
                        })
                    })
                    .collect();
                let params = &self.params;
                let per_image: Vec<(f32, Vec<LayerParams<f32>>)> = batch
                    .par_iter()
                    .zip(masks.par_iter())
                    .map(|(&i, mask)| {
                        let mask = mask.as_deref();
                        let tape = kernels::forward(&layers, &shapes, params, signed_input(&images[i]), Activation::Sign, mask);
                        let (loss, dl) = kernels::softmax_ce(&tape.output, target(labels[i]));
                        (loss, kernels::backward(&layers, &shapes, params, &tape, mask, dl))
                    })
                    .collect();
                let mut grads: Vec<LayerParams<f32>> = self.params.iter().map(LayerParams::zeros_like).collect();
                for (loss, g) in &per_image {
                    epoch_loss += f64::from(*loss);
                    for (acc, gi) in grads.iter_mut().zip(g) {
                        acc.add_assign(gi);
                    }
                }
                let scale = hp.learning_rate / batch.len() as f32;
                for (li, ((p, v), g)) in self.params.iter_mut().zip(&mut velocity).zip(&grads).enumerate() {
                    if !trainable[li] {
                        continue;
                    }
                    for ((x, vx), &gx) in p.w.iter_mut().zip(&mut v.w).chain(p.b.iter_mut().zip(&mut v.b)).zip(g.w.iter().chain(&g.b)) {
                        *vx = hp.momentum * *vx - scale * gx;
                        *x += *vx;
                    }
                }
            }
            let train_loss = (epoch_loss / images.len() as f64) as f32;
            let monitored = if holdout.is_empty() {
                train_loss
            } else {
                self.mean_loss(holdout, holdout_labels)
            };
            if !train_loss.is_finite() || !monitored.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            report.train_losses.push(train_loss);
            report.holdout_losses.push(monitored);
            report.epochs_run = epoch;
            log::debug!("epoch {epoch}: train loss {train_loss:.4}, holdout loss {monitored:.4}");
            if monitored < best.0 {
                best = (monitored, self.params.clone(), epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= hp.patience {
                    break;
                }
            }
        }
        self.params = best.1;
        report.best_epoch = best.2;
        self.trained = true;
        Ok(report)
    }

    /// Mean cross-entropy without dropout.
    pub fn mean_loss(&self, images: &[BitPlane], labels: &[bool]) -> f32 {
        let shapes = self.arch.input_shapes();
        let total: f64 = images
            .par_iter()
            .zip(labels.par_iter())
            .map(|(p, &l)| {
                let tape = kernels::forward(&self.arch.layers, &shapes, &self.params, signed_input(p), Activation::Sign, None);
                f64::from(kernels::softmax_ce(&tape.output, target(l)).0)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        (total / images.len().max(1) as f64) as f32
    }
}
