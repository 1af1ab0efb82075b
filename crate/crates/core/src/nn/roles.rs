use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Mlp};
use crate::{Error, Result};

/// What a network is used for; recorded in checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetRole {
    Deterministic,
    Stochastic,
    Critic,
}

fn layer_widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

/// Residual mean map `x ↦ x + N(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetSubMap {
    net: Mlp,
}

impl DetSubMap {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Mlp::new(&layer_widths(dim, hidden, dim), Activation::Tanh)?;
        net.init_glorot(rng);
        Ok(DetSubMap { net })
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(Error::InvalidInput(format!(
                "residual map needs equal input/output widths, got {:?}",
                net.widths()
            )));
        }
        Ok(DetSubMap { net })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.net.forward(x)?;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o += xi);
        Ok(out)
    }

    pub fn apply_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward_batch(x) + x
    }
}

/// Noise map `S(x, z)` with `z ~ N(0, I_{n_s})`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochSubMap {
    net: Mlp,
    noise_dim: usize,
}

impl StochSubMap {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        noise_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::InvalidInput("noise dimension must be >= 1".into()));
        }
        let mut net = Mlp::new(&layer_widths(dim + noise_dim, hidden, dim), Activation::Tanh)?;
        net.init_glorot(rng);
        Ok(StochSubMap { net, noise_dim })
    }

    pub fn from_net(net: Mlp, noise_dim: usize) -> Result<Self> {
        if noise_dim == 0 || net.input_dim() != net.output_dim() + noise_dim {
            return Err(Error::InvalidInput(format!(
                "noise map widths {:?} inconsistent with noise dimension {noise_dim}",
                net.widths()
            )));
        }
        Ok(StochSubMap { net, noise_dim })
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn apply(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.noise_dim {
            return Err(Error::InvalidInput(format!(
                "expected {} noise inputs, got {}",
                self.noise_dim,
                z.len()
            )));
        }
        let input: Vec<f64> = x.iter().chain(z).copied().collect();
        self.net.forward(&input)
    }

    /// Row-wise `[x | z]` network input.
    pub fn join(x: ArrayView2<f64>, z: ArrayView2<f64>) -> Array2<f64> {
        concatenate(Axis(1), &[x, z]).expect("state and noise batches must share rows")
    }

    pub fn apply_batch(&self, x: ArrayView2<f64>, z: ArrayView2<f64>) -> Array2<f64> {
        self.net.forward_batch(Self::join(x, z).view())
    }
}

/// Scores `(x_0, y_1, …, y_L)` sequences, flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    net: Mlp,
    dim: usize,
    horizon: usize,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        horizon: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Mlp::new(
            &layer_widths(dim * (horizon + 1), hidden, 1),
            Activation::CRITIC_DEFAULT,
        )?;
        net.init_glorot(rng);
        Ok(Critic { net, dim, horizon })
    }

    pub fn from_net(net: Mlp, dim: usize, horizon: usize) -> Result<Self> {
        if net.input_dim() != dim * (horizon + 1) || net.output_dim() != 1 {
            return Err(Error::InvalidInput(format!(
                "critic widths {:?} do not match d = {dim}, L = {horizon}",
                net.widths()
            )));
        }
        Ok(Critic { net, dim, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// One score per input row.
    pub fn score_batch(&self, inputs: ArrayView2<f64>) -> Vec<f64> {
        self.net.forward_batch(inputs).into_raw_vec_and_offset().0
    }
}
