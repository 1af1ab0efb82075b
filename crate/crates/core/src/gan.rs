//! Adversarial training of the noise map against a gradient-penalised critic.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::map::{check_rngs, row_rng, StochasticMap};
use crate::nn::checkpoint::{load_net, save_net};
use crate::nn::{default_hidden, default_noise_dim, AdamHyper, AdamState, Critic, DetSubMap, NetRole, StochSubMap, Tape};
use crate::rng::{substream, StreamRng, Tag};
use crate::testbed::TrajectoryDataset;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub recur_len: usize,
    pub noise_dim: usize,
    /// Critic steps per generator step.
    pub critic_iters: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Gradient-penalty weight λ.
    pub penalty: f64,
    pub adam: AdamHyper,
    pub gen_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl GanConfig {
    pub fn preset(dim: usize, seed: u64) -> Self {
        GanConfig {
            recur_len: 40,
            noise_dim: default_noise_dim(dim),
            critic_iters: 5,
            batch_size: 500,
            epochs: 20_000,
            penalty: 10.0,
            adam: AdamHyper::new(5e-5, 0.5, 0.999),
            gen_hidden: default_hidden(dim),
            critic_hidden: default_hidden(dim),
            seed,
        }
    }

    pub fn validate(&self, data: &TrajectoryDataset) -> Result<()> {
        if self.recur_len != data.window_len() {
            return Err(Error::Config(format!(
                "gan recur_len {} must equal the data window length {}",
                self.recur_len,
                data.window_len()
            )));
        }
        if self.critic_iters == 0 || self.noise_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "critic_iters, noise_dim and batch_size must be positive".into(),
            ));
        }
        if self.batch_size > data.n_traj() {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {} trajectories",
                self.batch_size,
                data.n_traj()
            )));
        }
        if !(self.penalty >= 0.0) || !(self.adam.lr > 0.0) {
            return Err(Error::Config("penalty must be >= 0 and lr positive".into()));
        }
        Ok(())
    }
}

/// Learned one-step map `G(x, z) = D(x) + S(x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMapModel {
    pub det: DetSubMap,
    pub stoch: StochSubMap,
    pub lag: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    format: String,
    dim: usize,
    noise_dim: usize,
    lag: f64,
    det: String,
    stoch: String,
}

const MODEL_FORMAT: &str = "flowmap-model/1";
pub const MODEL_MANIFEST: &str = "model.toml";

impl FlowMapModel {
    pub fn new(det: DetSubMap, stoch: StochSubMap, lag: f64) -> Result<Self> {
        if det.dim() != stoch.dim() {
            return Err(Error::InvalidInput(format!(
                "mean map has d = {}, noise map d = {}",
                det.dim(),
                stoch.dim()
            )));
        }
        Ok(FlowMapModel { det, stoch, lag })
    }

    pub fn noise_dim(&self) -> usize {
        self.stoch.noise_dim()
    }

    /// One step for every row with the given noise `[B, n_s]`.
    pub fn step_with_noise(&self, x: ArrayView2<f64>, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = self.det.apply_batch(x);
        out += &self.stoch.apply_batch(x, z);
        out
    }

    /// Writes `det.*`, `stoch.*` and `model.toml` into `dir`, recording the
    /// seeds each sub-map was trained from.
    pub fn save(&self, dir: &Path, det_seed: u64, stoch_seed: u64) -> Result<PathBuf> {
        save_net(dir, "det", self.det.net(), NetRole::Deterministic, None, det_seed, "train-det")?;
        save_net(
            dir,
            "stoch",
            self.stoch.net(),
            NetRole::Stochastic,
            Some(self.noise_dim()),
            stoch_seed,
            "train-gan",
        )?;
        let manifest = ModelManifest {
            format: MODEL_FORMAT.into(),
            dim: self.det.dim(),
            noise_dim: self.noise_dim(),
            lag: self.lag,
            det: "det.toml".into(),
            stoch: "stoch.toml".into(),
        };
        let path = dir.join(MODEL_MANIFEST);
        blob::write_toml(&path, &manifest)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_MANIFEST);
        let m: ModelManifest = blob::read_toml(&path)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::artifact(&path, format!("unsupported format {:?}", m.format)));
        }
        let (det, det_m) = load_net(&dir.join(&m.det))?;
        let (stoch, stoch_m) = load_net(&dir.join(&m.stoch))?;
        if det_m.role != NetRole::Deterministic || stoch_m.role != NetRole::Stochastic {
            return Err(Error::artifact(&path, "sub-map roles do not match"));
        }
        let det = DetSubMap::from_net(det).map_err(|e| Error::artifact(&path, e.to_string()))?;
        let stoch = StochSubMap::from_net(stoch, m.noise_dim)
            .map_err(|e| Error::artifact(&path, e.to_string()))?;
        if det.dim() != m.dim {
            return Err(Error::artifact(&path, "dimension mismatch"));
        }
        FlowMapModel::new(det, stoch, m.lag).map_err(|e| Error::artifact(&path, e.to_string()))
    }
}

impl StochasticMap for FlowMapModel {
    fn dim(&self) -> usize {
        self.det.dim()
    }

    fn lag(&self) -> f64 {
        self.lag
    }

    fn step_batch(&self, x: ArrayView2<f64>, rngs: &mut [StreamRng]) -> Array2<f64> {
        check_rngs(rngs, x.nrows());
        let ns = self.noise_dim();
        let mut z = Array2::zeros((x.nrows(), ns));
        for (i, mut row) in z.rows_mut().into_iter().enumerate() {
            let rng = row_rng(rngs, i);
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        }
        self.step_with_noise(x, z.view())
    }
}

/// Generated rollout kept for backpropagation into the noise map.
pub struct Rollout {
    /// `ŷ_{1..L}`, `[B, L, d]`.
    pub increments: Array3<f64>,
    det_tapes: Vec<Tape>,
    stoch_tapes: Vec<Tape>,
}

/// `L`-step rollout from `x0` with noise `z: [B, L, n_s]`:
/// `ŷ_{j+1} = D(x̂_j) − x̂_j + S(x̂_j, z_j)`, `x̂_{j+1} = x̂_j + ŷ_{j+1}`.
pub fn fake_rollout(model: &FlowMapModel, x0: ArrayView2<f64>, z: ArrayView3<f64>) -> Rollout {
    let (b, l, _) = z.dim();
    let d = model.det.dim();
    let mut increments = Array3::zeros((b, l, d));
    let mut det_tapes = Vec::with_capacity(l);
    let mut stoch_tapes = Vec::with_capacity(l);
    let mut x = x0.to_owned();
    for j in 0..l {
        let det_tape = model.det.net().forward_tape(x.view());
        let joined = StochSubMap::join(x.view(), z.index_axis(Axis(1), j));
        let stoch_tape = model.stoch.net().forward_tape(joined.view());
        let y = &det_tape.output + &stoch_tape.output;
        x += &y;
        increments.index_axis_mut(Axis(1), j).assign(&y);
        det_tapes.push(det_tape);
        stoch_tapes.push(stoch_tape);
    }
    Rollout {
        increments,
        det_tapes,
        stoch_tapes,
    }
}

/// Standard-normal rollout noise `[B, L, n_s]`, drawn sample by sample, step by step.
pub fn draw_rollout_noise(rng: &mut StreamRng, b: usize, l: usize, ns: usize) -> Array3<f64> {
    Array3::from_shape_simple_fn((b, l, ns), || rng.sample(StandardNormal))
}

/// Critic input rows `(x_0, y_1, …, y_L)`.
pub fn critic_input(x0: ArrayView2<f64>, increments: ArrayView3<f64>) -> Array2<f64> {
    let (b, l, d) = increments.dim();
    let mut u = Array2::zeros((b, d * (l + 1)));
    u.slice_mut(s![.., ..d]).assign(&x0);
    let flat = increments
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b, l * d))
        .expect("contiguous increments");
    u.slice_mut(s![.., d..]).assign(&flat);
    u
}

/// `ỹ = ε y + (1 − ε) ŷ` per row; the leading `x_0` block is copied from `real`.
pub fn interpolate(real: ArrayView2<f64>, fake: ArrayView2<f64>, eps: &[f64], dim: usize) -> Array2<f64> {
    let mut out = real.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let e = eps[i];
        for c in dim..row.len() {
            row[c] = fake[[i, c]] + e * (real[[i, c]] - fake[[i, c]]);
        }
    }
    out
}

/// Mean `(‖∇_u C(x_0, ỹ)‖ − 1)²` at the interpolates, gradient over the full input.
pub fn gradient_penalty(
    critic: &Critic,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    eps: &[f64],
) -> f64 {
    let u = interpolate(real, fake, eps, critic.dim());
    critic.net().gradient_penalty(u.view(), None, 1.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `mean C(fake) − mean C(real) + λ·GP`.
pub fn critic_loss(
    critic: &Critic,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    eps: &[f64],
    penalty: f64,
) -> f64 {
    let gp = if penalty > 0.0 {
        penalty * gradient_penalty(critic, real, fake, eps)
    } else {
        0.0
    };
    mean(&critic.score_batch(fake)) - mean(&critic.score_batch(real)) + gp
}

/// Critic loss and its parameter gradient.
pub fn critic_loss_grad(
    critic: &Critic,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    eps: &[f64],
    penalty: f64,
) -> (f64, Vec<f64>) {
    let net = critic.net();
    let b = real.nrows() as f64;
    let mut grad = vec![0.0; net.params().len()];
    let fake_tape = net.forward_tape(fake);
    let real_tape = net.forward_tape(real);
    let fill = |v: f64| Array2::from_elem((real.nrows(), 1), v);
    net.backward(&fake_tape, fill(1.0 / b).view(), Some(&mut grad));
    net.backward(&real_tape, fill(-1.0 / b).view(), Some(&mut grad));
    let mut loss = fake_tape.output.mean().unwrap() - real_tape.output.mean().unwrap();
    if penalty > 0.0 {
        let u = interpolate(real, fake, eps, critic.dim());
        loss += penalty * net.gradient_penalty(u.view(), Some(&mut grad), penalty);
    }
    (loss, grad)
}

/// `−mean C(x_0, ŷ)`.
pub fn generator_loss(critic: &Critic, fake: ArrayView2<f64>) -> f64 {
    -mean(&critic.score_batch(fake))
}

/// Generator loss and its gradient with respect to the noise-map parameters,
/// backpropagated through the whole rollout; the mean map is held fixed.
pub fn generator_loss_grad(
    critic: &Critic,
    model: &FlowMapModel,
    x0: ArrayView2<f64>,
    rollout: &Rollout,
) -> (f64, Vec<f64>) {
    let (b, l, d) = rollout.increments.dim();
    let u = critic_input(x0, rollout.increments.view());
    let tape = critic.net().forward_tape(u.view());
    let loss = -tape.output.mean().unwrap();
    let seed = Array2::from_elem((b, 1), -1.0 / b as f64);
    let u_adj = critic.net().backward(&tape, seed.view(), None);

    let mut grad = vec![0.0; model.stoch.net().params().len()];
    let mut x_adj = Array2::<f64>::zeros((b, d));
    for j in (0..l).rev() {
        let cols = d * (j + 1)..d * (j + 2);
        let y_adj = &u_adj.slice(s![.., cols]) + &x_adj;
        let through_s = model
            .stoch
            .net()
            .backward(&rollout.stoch_tapes[j], y_adj.view(), Some(&mut grad));
        if j == 0 {
            break;
        }
        let through_d = model.det.net().backward(&rollout.det_tapes[j], y_adj.view(), None);
        x_adj += &through_d;
        x_adj += &through_s.slice(s![.., ..d]);
    }
    (loss, grad)
}

#[derive(Clone, Debug)]
pub struct GanOutcome {
    pub model: FlowMapModel,
    pub critic: Critic,
    /// Mean critic loss per epoch.
    pub critic_curve: Vec<f64>,
    /// Mean generator loss per epoch (NaN for epochs without a generator step).
    pub generator_curve: Vec<f64>,
    pub generator_updates: usize,
}

/// Freshly initialised noise map and critic for `cfg`.
pub fn init_nets(dim: usize, cfg: &GanConfig) -> Result<(StochSubMap, Critic)> {
    let stoch = StochSubMap::new(
        dim,
        cfg.noise_dim,
        &cfg.gen_hidden,
        &mut substream(cfg.seed, Tag::Init, &[1]),
    )?;
    let critic = Critic::new(
        dim,
        cfg.recur_len,
        &cfg.critic_hidden,
        &mut substream(cfg.seed, Tag::Init, &[2]),
    )?;
    Ok((stoch, critic))
}

/// Adversarial training with the mean map frozen.
///
/// Batches are consecutive slices of the trajectory list; each batch takes one
/// critic step and every `critic_iters`-th batch overall also takes one
/// generator step on the same rollout.
pub fn train_gan(data: &TrajectoryDataset, det: &DetSubMap, cfg: &GanConfig) -> Result<GanOutcome> {
    cfg.validate(data)?;
    let (stoch, critic) = init_nets(data.dim(), cfg)?;
    let model = FlowMapModel::new(det.clone(), stoch, data.lag())?;
    train_gan_from(data, model, critic, cfg)
}

pub fn train_gan_from(
    data: &TrajectoryDataset,
    mut model: FlowMapModel,
    mut critic: Critic,
    cfg: &GanConfig,
) -> Result<GanOutcome> {
    cfg.validate(data)?;
    let b = cfg.batch_size;
    let n_batches = data.n_traj() / b;
    let l = cfg.recur_len;
    let mut critic_adam = AdamState::new(critic.net().params().len(), cfg.adam.clone());
    let mut gen_adam = AdamState::new(model.stoch.net().params().len(), cfg.adam.clone());
    let mut critic_curve = Vec::with_capacity(cfg.epochs);
    let mut generator_curve = Vec::with_capacity(cfg.epochs);
    let mut updates = 0;

    // Real critic inputs never change; build them once.
    let all: Vec<usize> = (0..n_batches * b).collect();
    let real_all = critic_input(
        data.initial_states(&all).view(),
        data.increments_of(&all).view(),
    );

    for epoch in 0..cfg.epochs {
        let (mut c_sum, mut g_sum, mut g_count) = (0.0, 0.0, 0);
        for bi in 0..n_batches {
            let rows = bi * b..(bi + 1) * b;
            let real = real_all.slice(s![rows.clone(), ..]);
            let x0 = real.slice(s![.., ..data.dim()]);
            let counter = [epoch as u64, bi as u64];
            let z = draw_rollout_noise(
                &mut substream(cfg.seed, Tag::GanNoise, &counter),
                b,
                l,
                cfg.noise_dim,
            );
            let rollout = fake_rollout(&model, x0, z.view());
            let fake = critic_input(x0, rollout.increments.view());
            let mut eps_rng = substream(cfg.seed, Tag::GanInterp, &counter);
            let eps: Vec<f64> = (0..b).map(|_| eps_rng.random::<f64>()).collect();

            let (c_loss, c_grad) = critic_loss_grad(&critic, real, fake.view(), &eps, cfg.penalty);
            if !c_loss.is_finite() {
                return Err(Error::Divergence {
                    phase: "gan-critic",
                    epoch,
                    batch: bi,
                    loss: c_loss,
                });
            }
            critic_adam.step(critic.net_mut().params_mut(), &c_grad);
            c_sum += c_loss;

            if (epoch * n_batches + bi + 1) % cfg.critic_iters == 0 {
                let (g_loss, g_grad) = generator_loss_grad(&critic, &model, x0, &rollout);
                if !g_loss.is_finite() || g_grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence {
                        phase: "gan-generator",
                        epoch,
                        batch: bi,
                        loss: g_loss,
                    });
                }
                gen_adam.step(model.stoch.net_mut().params_mut(), &g_grad);
                updates += 1;
                g_sum += g_loss;
                g_count += 1;
            }
        }
        critic_curve.push(c_sum / n_batches as f64);
        generator_curve.push(if g_count > 0 { g_sum / g_count as f64 } else { f64::NAN });
        if (epoch + 1) % 100 == 0 {
            log::info!(
                "gan epoch {}/{}: critic {:.5e}",
                epoch + 1,
                cfg.epochs,
                critic_curve.last().unwrap()
            );
        }
    }
    Ok(GanOutcome {
        model,
        critic,
        critic_curve,
        generator_curve,
        generator_updates: updates,
    })
}
