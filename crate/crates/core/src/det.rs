//! Fitting the mean map `D(x) = x + N(x)` with the recurrent multi-step loss.

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{clip_global_norm, default_hidden, AdamHyper, AdamState, DetSubMap, Tape};
use crate::rng::{substream, Tag};
use crate::testbed::TrajectoryDataset;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetConfig {
    /// `K`: number of composed steps in the loss.
    pub recur_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl DetConfig {
    pub fn preset(dim: usize, seed: u64) -> Self {
        DetConfig {
            recur_len: 40,
            epochs: 5000,
            batch_size: 256,
            adam: AdamHyper::new(1e-3, 0.9, 0.999),
            clip_norm: 10.0,
            hidden: default_hidden(dim),
            seed,
        }
    }

    pub fn validate(&self, window_len: usize) -> Result<()> {
        if self.recur_len == 0 || self.recur_len > window_len {
            return Err(Error::Config(format!(
                "recur_len must be in 1..={window_len}, got {}",
                self.recur_len
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("det batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) || self.clip_norm < 0.0 {
            return Err(Error::Config("det lr must be positive and clip_norm >= 0".into()));
        }
        Ok(())
    }
}

/// Rolls `D` forward `K` steps from each observed `x_0`; returns the predicted
/// states `[B, K + 1, d]` and the tape of every step.
fn rollout(map: &DetSubMap, batch: ArrayView3<f64>) -> (Array3<f64>, Vec<Tape>) {
    let (b, len, d) = batch.dim();
    let k = len - 1;
    let mut pred = Array3::zeros((b, len, d));
    pred.index_axis_mut(Axis(1), 0).assign(&batch.index_axis(Axis(1), 0));
    let mut tapes = Vec::with_capacity(k);
    for n in 0..k {
        let x = pred.index_axis(Axis(1), n).to_owned();
        let tape = map.net().forward_tape(x.view());
        let next = &x + &tape.output;
        pred.index_axis_mut(Axis(1), n + 1).assign(&next);
        tapes.push(tape);
    }
    (pred, tapes)
}

/// `(1/B) Σ_i Σ_{n=1..K} ‖x_n − D^[n](x_0)‖²` for a batch of windows `[B, K + 1, d]`.
pub fn multistep_loss(map: &DetSubMap, batch: ArrayView3<f64>) -> f64 {
    let b = batch.dim().0 as f64;
    let (pred, _) = rollout(map, batch);
    let diff = &pred.slice(s![.., 1.., ..]) - &batch.slice(s![.., 1.., ..]);
    diff.iter().map(|v| v * v).sum::<f64>() / b
}

/// Loss and its parameter gradient by backpropagation through the `K` compositions.
pub fn multistep_loss_grad(map: &DetSubMap, batch: ArrayView3<f64>) -> (f64, Vec<f64>) {
    let (b, len, d) = batch.dim();
    let k = len - 1;
    let (pred, tapes) = rollout(map, batch);
    let resid = &pred - &batch;
    let loss = resid.slice(s![.., 1.., ..]).iter().map(|v| v * v).sum::<f64>() / b as f64;

    let scale = 2.0 / b as f64;
    let mut grad = vec![0.0; map.net().params().len()];
    let mut adj = Array2::<f64>::zeros((b, d));
    for n in (1..=k).rev() {
        adj.scaled_add(scale, &resid.index_axis(Axis(1), n));
        let through = map.net().backward(&tapes[n - 1], adj.view(), Some(&mut grad));
        adj += &through;
    }
    (loss, grad)
}

#[derive(Clone, Debug)]
pub struct DetOutcome {
    pub map: DetSubMap,
    /// Entry 0 is the full-data loss at initialization, entry `e` the mean
    /// minibatch loss of epoch `e`.
    pub loss_curve: Vec<f64>,
}

fn windows(data: &TrajectoryDataset, idx: &[usize], k: usize) -> Array3<f64> {
    data.state_prefix(idx, k)
}

/// Full-data multi-step loss, evaluated in chunks.
pub fn dataset_loss(map: &DetSubMap, data: &TrajectoryDataset, k: usize) -> f64 {
    let all: Vec<usize> = (0..data.n_traj()).collect();
    let total: f64 = all
        .chunks(1000)
        .map(|c| multistep_loss(map, windows(data, c, k).view()) * c.len() as f64)
        .sum();
    total / data.n_traj() as f64
}

/// Minibatch Adam on the multi-step loss, reshuffling trajectories every epoch.
pub fn train_det(data: &TrajectoryDataset, cfg: &DetConfig) -> Result<DetOutcome> {
    let mut init = substream(cfg.seed, Tag::Init, &[0]);
    let map = DetSubMap::new(data.dim(), &cfg.hidden, &mut init)?;
    train_det_from(data, cfg, map)
}

/// Continues training from a given map.
pub fn train_det_from(
    data: &TrajectoryDataset,
    cfg: &DetConfig,
    mut map: DetSubMap,
) -> Result<DetOutcome> {
    cfg.validate(data.window_len())?;
    if data.n_traj() == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let k = cfg.recur_len;
    let mut adam = AdamState::new(map.net().params().len(), cfg.adam.clone());
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    curve.push(dataset_loss(&map, data, k));
    let mut order: Vec<usize> = (0..data.n_traj()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, Tag::DetShuffle, &[epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = windows(data, idx, k);
            let (loss, mut grad) = multistep_loss_grad(&map, batch.view());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    phase: "det",
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut grad, cfg.clip_norm);
            }
            adam.step(map.net_mut().params_mut(), &grad);
            sum += loss;
            count += 1;
        }
        curve.push(sum / count as f64);
        if (epoch + 1) % 100 == 0 {
            log::info!("det epoch {}/{}: loss {:.6e}", epoch + 1, cfg.epochs, sum / count as f64);
        }
    }
    Ok(DetOutcome {
        map,
        loss_curve: curve,
    })
}
