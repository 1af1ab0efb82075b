use serde::{Deserialize, Serialize};

use crate::blob::sha256_hex;
use crate::det::DetConfig;
use crate::gan::GanConfig;
use crate::rng::{derive_seed, Tag};
use crate::testbed::{DatasetConfig, InitBox, SdeId, SdeSpec};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Which one-step estimator pair the drift/diffusion diagnostic uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Standard,
    Lognormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Initial state of the long-horizon simulations.
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub n_paths: usize,
    /// Paths written out in full for plotting.
    pub sample_paths: usize,
    /// Times at which marginal distributions are compared.
    pub pdf_times: Vec<f64>,
    /// Drift/diffusion grid for scalar systems; `None` uses the initial box.
    pub grid: Option<GridSpec>,
    pub drift_samples: usize,
    pub estimator: Estimator,
    /// States at which one-step conditional laws are compared.
    pub probes: Vec<Vec<f64>>,
    pub probe_samples: usize,
    pub bins: usize,
    pub spectrum_paths: usize,
    /// Upper bound on the length of the spectrum time series; longer horizons are strided.
    pub spectrum_max_len: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    /// Master seed every sub-seed is derived from.
    pub seed: u64,
    pub sde: SdeSpec,
    pub dataset: DatasetConfig,
    pub det: DetConfig,
    pub gan: GanConfig,
    pub ensemble_size: usize,
    pub diagnostics: DiagnosticsConfig,
}

/// Training budget of a preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Full budget: 100,000 GAN epochs, 5000 mean-map epochs.
    Full,
    /// 20,000 GAN epochs; a single CPU core finishes in hours.
    Desk,
    /// Tiny budgets that only exercise the plumbing.
    Smoke,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            "smoke" => Ok(Scale::Smoke),
            _ => Err(Error::Config(format!("unknown scale {s:?} (full, desk, smoke)"))),
        }
    }
}

struct Setting {
    x0: Vec<f64>,
    horizon: f64,
    probe: Vec<f64>,
    pdf_times: Vec<f64>,
    grid: Option<GridSpec>,
    estimator: Estimator,
}

fn setting(id: SdeId) -> Setting {
    let base = |x0: Vec<f64>, horizon: f64, probe: Vec<f64>| Setting {
        x0,
        horizon,
        probe,
        pdf_times: vec![],
        grid: None,
        estimator: Estimator::Standard,
    };
    match id {
        SdeId::Ou1d => Setting {
            grid: Some(GridSpec {
                low: 0.8,
                high: 1.6,
                points: 41,
            }),
            ..base(vec![1.5], 4.0, vec![0.8])
        },
        SdeId::Gbm => base(vec![0.5], 1.0, vec![6.0]),
        SdeId::ExpDiffusion => base(vec![-0.4], 10.0, vec![-0.3]),
        SdeId::Trig => base(vec![0.6], 10.0, vec![0.5]),
        SdeId::DoubleWell => Setting {
            pdf_times: vec![0.5, 10.0, 30.0, 100.0],
            ..base(vec![1.5], 300.0, vec![1.0])
        },
        SdeId::ExpNoise => base(vec![0.4], 5.0, vec![0.34]),
        SdeId::LognormalOu => Setting {
            estimator: Estimator::Lognormal,
            ..base(vec![1.5], 5.0, vec![0.4])
        },
        SdeId::Ou2d => base(vec![0.3, 0.4], 5.0, vec![0.0, 0.0]),
        SdeId::Oscillator => base(vec![0.3, 0.4], 6.5, vec![-0.5, -0.5]),
    }
}

impl ExperimentConfig {
    /// Catalog parameters and training settings for one benchmark.
    pub fn preset(id: SdeId, scale: Scale, seed: u64) -> Self {
        let sde = SdeSpec::preset(id);
        let d = sde.dim();
        let mut dataset = DatasetConfig::preset(id, 0);
        let mut det = DetConfig::preset(d, 0);
        let mut gan = GanConfig::preset(d, 0);
        if id == SdeId::Oscillator {
            // 100 recurrent steps need windows spanning the whole trajectory.
            dataset.window_len = 100;
            det.recur_len = 100;
            gan.recur_len = 100;
            gan.gen_hidden = vec![80; 4];
        }
        let s = setting(id);
        let long = s.horizon / dataset.lag > 10_000.0;
        let mut diagnostics = DiagnosticsConfig {
            x0: s.x0,
            horizon: s.horizon,
            n_paths: if long { 10_000 } else { 100_000 },
            sample_paths: 20,
            pdf_times: s.pdf_times,
            grid: s.grid,
            drift_samples: 1_000_000,
            estimator: s.estimator,
            probes: vec![s.probe],
            probe_samples: 100_000,
            bins: 60,
            spectrum_paths: if long { 2_000 } else { 10_000 },
            spectrum_max_len: 401,
            seed: 0,
        };
        match scale {
            Scale::Full => gan.epochs = 100_000,
            Scale::Desk => {
                det.epochs = 300;
                gan.epochs = 20_000;
            }
            Scale::Smoke => {
                dataset.n_traj = 200;
                det.epochs = 3;
                det.recur_len = det.recur_len.min(5);
                gan.epochs = 2;
                gan.batch_size = 50;
                diagnostics.n_paths = 2000;
                diagnostics.drift_samples = 1000;
                diagnostics.probe_samples = 2000;
                diagnostics.spectrum_paths = 500;
                diagnostics.spectrum_max_len = 51;
                diagnostics.horizon = diagnostics.horizon.min(1.0);
                diagnostics.pdf_times.retain(|&t| t <= 1.0);
                if let Some(g) = diagnostics.grid.as_mut() {
                    g.points = 5;
                }
            }
        }
        let scale_name = match scale {
            Scale::Full => "full",
            Scale::Desk => "desk",
            Scale::Smoke => "smoke",
        };
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            name: format!("{}-{scale_name}", id.name()),
            seed,
            sde,
            dataset,
            det,
            gan,
            ensemble_size: 1,
            diagnostics,
        }
        .with_seed(seed)
    }

    /// Sets the master seed and re-derives every stage seed from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = derive_seed(seed, Tag::DatasetNoise, 0);
        self.det.seed = derive_seed(seed, Tag::Init, 0);
        self.gan.seed = derive_seed(seed, Tag::GanNoise, 0);
        self.diagnostics.seed = derive_seed(seed, Tag::Simulate, 0);
        self
    }

    /// Seeds of ensemble member `i`; member 0 uses the configured ones.
    pub fn member_seeds(&self, i: usize) -> (u64, u64) {
        if i == 0 {
            (self.det.seed, self.gan.seed)
        } else {
            let s = derive_seed(self.seed, Tag::Ensemble, i as u64);
            (derive_seed(s, Tag::Init, 0), derive_seed(s, Tag::GanNoise, 0))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        self.sde.validate().map_err(|e| Error::Config(e.to_string()))?;
        let d = self.sde.dim();
        self.dataset.validate(d)?;
        self.det.validate(self.dataset.window_len)?;
        if self.gan.recur_len != self.dataset.window_len {
            return Err(Error::Config(format!(
                "gan.recur_len {} must equal dataset.window_len {}",
                self.gan.recur_len, self.dataset.window_len
            )));
        }
        if self.gan.batch_size == 0 || self.gan.batch_size > self.dataset.n_traj {
            return Err(Error::Config("gan.batch_size must be in 1..=n_traj".into()));
        }
        if self.gan.critic_iters == 0 || self.gan.noise_dim == 0 || !(self.gan.penalty >= 0.0) {
            return Err(Error::Config("gan needs critic_iters, noise_dim >= 1 and penalty >= 0".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Config("ensemble_size must be >= 1".into()));
        }
        let g = &self.diagnostics;
        if g.x0.len() != d || g.probes.iter().any(|p| p.len() != d) {
            return Err(Error::Config(format!("diagnostic states must have {d} components")));
        }
        if !(g.horizon > 0.0) || g.n_paths < 2 || g.spectrum_paths < 2 || g.bins == 0 {
            return Err(Error::Config(
                "diagnostics need horizon > 0, at least 2 paths and bins >= 1".into(),
            ));
        }
        if g.drift_samples < 1000 {
            return Err(Error::Config("drift_samples must be >= 1000".into()));
        }
        if g.pdf_times.iter().any(|&t| !(t >= 0.0 && t <= g.horizon)) {
            return Err(Error::Config("pdf_times must lie within the horizon".into()));
        }
        if let Some(grid) = &g.grid {
            if !(grid.low < grid.high) || grid.points < 2 {
                return Err(Error::Config("grid needs low < high and >= 2 points".into()));
            }
        }
        if g.estimator == Estimator::Lognormal && d != 1 {
            return Err(Error::Config("lognormal estimators are scalar only".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// sha256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.diagnostics.horizon / self.dataset.lag).round() as usize
    }

    /// Scalar drift/diffusion grid points.
    pub fn drift_grid(&self) -> Option<(f64, f64, usize)> {
        if self.sde.dim() != 1 {
            return None;
        }
        Some(match &self.diagnostics.grid {
            Some(g) => (g.low, g.high, g.points),
            None => {
                let InitBox { low, high } = &self.dataset.init;
                (low[0], high[0], 41)
            }
        })
    }
}
