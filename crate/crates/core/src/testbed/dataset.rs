use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SdeId, SdeSpec};
use crate::blob;
use crate::rng::{substream, StreamRng, Tag};
use crate::{Error, Result};

/// Axis-aligned box the initial states are drawn from uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl InitBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        InitBox { low, high }
    }

    /// Initial-condition region used for each catalog system's training data.
    pub fn preset(id: SdeId) -> InitBox {
        let (low, high) = match id {
            SdeId::Ou1d => (vec![0.0], vec![0.25]),
            SdeId::Gbm => (vec![0.0], vec![2.0]),
            SdeId::ExpDiffusion => (vec![-1.0], vec![1.0]),
            SdeId::Trig => (vec![0.35], vec![0.7]),
            SdeId::DoubleWell => (vec![-2.5], vec![2.5]),
            SdeId::ExpNoise => (vec![0.0], vec![1.0]),
            SdeId::LognormalOu => (vec![0.1], vec![2.0]),
            SdeId::Ou2d => (vec![-4.0, -3.0], vec![4.0, 3.0]),
            SdeId::Oscillator => (vec![-1.5, -1.5], vec![1.5, 1.5]),
        };
        InitBox { low, high }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.low.len() != dim || self.high.len() != dim {
            return Err(Error::Config(format!(
                "initial box must have {dim} components per bound"
            )));
        }
        if self.low.iter().zip(&self.high).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Config(format!(
                "initial box needs finite low < high componentwise, got {:?} / {:?}",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(&l, &h)| rng.random_range(l..h))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_traj: usize,
    pub lag: f64,
    /// Length of each integrated trajectory before windowing, in steps.
    pub solver_steps: usize,
    /// `L`: every stored window holds `L + 1` states.
    pub window_len: usize,
    pub init: InitBox,
    pub seed: u64,
}

impl DatasetConfig {
    /// 10,000 trajectories, Δ = 0.01, 100 solver steps, windows of 40 steps.
    pub fn preset(id: SdeId, seed: u64) -> Self {
        DatasetConfig {
            n_traj: 10_000,
            lag: 0.01,
            solver_steps: 100,
            window_len: 40,
            init: InitBox::preset(id),
            seed,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::Config("n_traj must be positive".into()));
        }
        if !(self.lag > 0.0 && self.lag.is_finite()) {
            return Err(Error::Config(format!("lag must be positive, got {}", self.lag)));
        }
        if self.window_len == 0 || self.window_len > self.solver_steps {
            return Err(Error::Config(format!(
                "need 1 <= window_len <= solver_steps, got {} / {}",
                self.window_len, self.solver_steps
            )));
        }
        self.init.validate(dim)
    }
}

/// `N` windows of `L + 1` states at a fixed lag.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub sde: SdeSpec,
    pub config: DatasetConfig,
    states: Array3<f64>,
    increments: Array3<f64>,
}

/// Integrates `steps` steps from `x0`, drawing noise from `rng`; returns all `steps + 1` states.
pub fn integrate(
    sde: &SdeSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    let mut noise = vec![0.0; sde.dim()];
    let mut path = Vec::with_capacity(steps + 1);
    path.push(x0.to_vec());
    for _ in 0..steps {
        sde.draw_noise(rng, &mut noise);
        let next = sde.em_step(path.last().unwrap(), dt, &noise)?;
        path.push(next);
    }
    Ok(path)
}

/// Draws every trajectory from its own `(seed, i)` substreams, so the result
/// is a pure function of the configuration.
pub fn generate_dataset(sde: &SdeSpec, cfg: &DatasetConfig) -> Result<TrajectoryDataset> {
    sde.validate()?;
    cfg.validate(sde.dim())?;
    let d = sde.dim();
    let l = cfg.window_len;
    let mut states = Array3::zeros((cfg.n_traj, l + 1, d));
    for i in 0..cfg.n_traj {
        let mut init_rng = substream(cfg.seed, Tag::DatasetInit, &[i as u64]);
        let x0 = cfg.init.sample(&mut init_rng);
        let start = init_rng.random_range(0..=cfg.solver_steps - l);
        let mut noise_rng = substream(cfg.seed, Tag::DatasetNoise, &[i as u64]);
        let path = integrate(sde, &x0, cfg.lag, cfg.solver_steps, &mut noise_rng)?;
        for (n, state) in path[start..=start + l].iter().enumerate() {
            for (k, &v) in state.iter().enumerate() {
                states[[i, n, k]] = v;
            }
        }
    }
    TrajectoryDataset::from_states(sde.clone(), cfg.clone(), states)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    format: String,
    sde: SdeSpec,
    n_traj: usize,
    window_len: usize,
    dim: usize,
    lag: f64,
    solver_steps: usize,
    init: InitBox,
    seed: u64,
    precision: String,
    byte_order: String,
    layout: String,
    blob: String,
    blob_sha256: String,
}

const DATASET_FORMAT: &str = "flowmap-dataset/1";
pub const DATASET_MANIFEST: &str = "dataset.toml";

impl TrajectoryDataset {
    pub fn from_states(sde: SdeSpec, config: DatasetConfig, states: Array3<f64>) -> Result<Self> {
        let (n, len, d) = states.dim();
        if n != config.n_traj || len != config.window_len + 1 || d != sde.dim() {
            return Err(Error::InvalidInput(format!(
                "states shape {:?} does not match [{}, {}, {}]",
                states.dim(),
                config.n_traj,
                config.window_len + 1,
                sde.dim()
            )));
        }
        let increments = &states.slice(s![.., 1.., ..]) - &states.slice(s![.., ..-1, ..]);
        Ok(TrajectoryDataset {
            sde,
            config,
            states,
            increments,
        })
    }

    pub fn states(&self) -> &Array3<f64> {
        &self.states
    }

    pub fn increments(&self) -> &Array3<f64> {
        &self.increments
    }

    pub fn n_traj(&self) -> usize {
        self.states.dim().0
    }

    pub fn window_len(&self) -> usize {
        self.states.dim().1 - 1
    }

    pub fn dim(&self) -> usize {
        self.states.dim().2
    }

    pub fn lag(&self) -> f64 {
        self.config.lag
    }

    /// Initial states of the selected trajectories, `[B, d]`.
    pub fn initial_states(&self, idx: &[usize]) -> Array2<f64> {
        self.states.select(Axis(0), idx).index_axis_move(Axis(1), 0)
    }

    /// First `k + 1` states of the selected trajectories, `[B, k + 1, d]`.
    pub fn state_prefix(&self, idx: &[usize], k: usize) -> Array3<f64> {
        self.states.slice(s![.., ..=k, ..]).select(Axis(0), idx)
    }

    /// Increments of the selected trajectories, `[B, L, d]`.
    pub fn increments_of(&self, idx: &[usize]) -> Array3<f64> {
        self.increments.select(Axis(0), idx)
    }

    /// Writes `dataset.toml` and `states.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let flat: Vec<f64> = self.states.iter().copied().collect();
        let digest = blob::write_f64_le(&dir.join("states.bin"), &flat)?;
        let manifest = DatasetManifest {
            format: DATASET_FORMAT.into(),
            sde: self.sde.clone(),
            n_traj: self.n_traj(),
            window_len: self.window_len(),
            dim: self.dim(),
            lag: self.config.lag,
            solver_steps: self.config.solver_steps,
            init: self.config.init.clone(),
            seed: self.config.seed,
            precision: blob::PRECISION.into(),
            byte_order: blob::BYTE_ORDER.into(),
            layout: "row-major [n_traj, window_len + 1, dim]".into(),
            blob: "states.bin".into(),
            blob_sha256: digest,
        };
        let path = dir.join(DATASET_MANIFEST);
        blob::write_toml(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a dataset directory; increments are recomputed from the states.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DATASET_MANIFEST);
        let m: DatasetManifest = blob::read_toml(&path)?;
        if m.format != DATASET_FORMAT {
            return Err(Error::artifact(&path, format!("unsupported format {:?}", m.format)));
        }
        if m.precision != blob::PRECISION || m.byte_order != blob::BYTE_ORDER {
            return Err(Error::artifact(&path, "only little-endian f64 blobs are supported"));
        }
        let len = m.n_traj * (m.window_len + 1) * m.dim;
        let flat = blob::read_f64_le(&dir.join(&m.blob), len)?;
        let states = Array3::from_shape_vec((m.n_traj, m.window_len + 1, m.dim), flat)
            .map_err(|e| Error::artifact(&path, e.to_string()))?;
        let config = DatasetConfig {
            n_traj: m.n_traj,
            lag: m.lag,
            solver_steps: m.solver_steps,
            window_len: m.window_len,
            init: m.init,
            seed: m.seed,
        };
        TrajectoryDataset::from_states(m.sde, config, states)
            .map_err(|e| Error::artifact(&path, e.to_string()))
    }
}
