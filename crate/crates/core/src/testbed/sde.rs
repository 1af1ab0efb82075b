use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifier of a catalog system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeId {
    Ou1d,
    Gbm,
    ExpDiffusion,
    Trig,
    DoubleWell,
    ExpNoise,
    LognormalOu,
    Ou2d,
    Oscillator,
}

impl SdeId {
    pub const ALL: [SdeId; 9] = [
        SdeId::Ou1d,
        SdeId::Gbm,
        SdeId::ExpDiffusion,
        SdeId::Trig,
        SdeId::DoubleWell,
        SdeId::ExpNoise,
        SdeId::LognormalOu,
        SdeId::Ou2d,
        SdeId::Oscillator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SdeId::Ou1d => "ou1d",
            SdeId::Gbm => "gbm",
            SdeId::ExpDiffusion => "exp_diffusion",
            SdeId::Trig => "trig",
            SdeId::DoubleWell => "double_well",
            SdeId::ExpNoise => "exp_noise",
            SdeId::LognormalOu => "lognormal_ou",
            SdeId::Ou2d => "ou2d",
            SdeId::Oscillator => "oscillator",
        }
    }
}

impl std::str::FromStr for SdeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SdeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown system {s:?}")))
    }
}

/// Law of the standardized noise draw fed to a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseLaw {
    Gaussian,
    /// Density `e^{-x}` on `x ≥ 0`.
    ExponentialUnit,
    /// `exp(N(0, 1))`.
    LognormalUnit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    AdditiveEm,
    MultiplicativeLognormal,
}

/// Ground-truth system with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum SdeSpec {
    /// `dx = θ(μ − x) dt + σ dW`
    Ou1d { theta: f64, mu: f64, sigma: f64 },
    /// `dx = μx dt + σx dW`
    Gbm { mu: f64, sigma: f64 },
    /// `dx = −μx dt + σ e^{−x²} dW`
    ExpDiffusion { mu: f64, sigma: f64 },
    /// `dx = sin(2kπx) dt + σ cos(2kπx) dW`
    Trig { k: f64, sigma: f64 },
    /// `dx = (x − x³) dt + σ dW`
    DoubleWell { sigma: f64 },
    /// `dx = μx dt + σ√dt η`, `η ~ Exp(1)`
    ExpNoise { mu: f64, sigma: f64 },
    /// `d ln x = (ln m − θ ln x) dt + σ dW`
    LognormalOu { m: f64, theta: f64, sigma: f64 },
    /// `dx = Bx dt + Σ dW`
    Ou2d { b: [[f64; 2]; 2], sigma: [[f64; 2]; 2] },
    /// `ẋ₁ = x₂, ẋ₂ = −x₁ + σẆ`
    Oscillator { sigma: f64 },
}

impl SdeSpec {
    /// Catalog parameters of each benchmark.
    pub fn preset(id: SdeId) -> SdeSpec {
        match id {
            SdeId::Ou1d => SdeSpec::Ou1d {
                theta: 1.0,
                mu: 1.2,
                sigma: 0.3,
            },
            SdeId::Gbm => SdeSpec::Gbm { mu: 2.0, sigma: 1.0 },
            SdeId::ExpDiffusion => SdeSpec::ExpDiffusion { mu: 5.0, sigma: 0.5 },
            SdeId::Trig => SdeSpec::Trig { k: 1.0, sigma: 0.5 },
            SdeId::DoubleWell => SdeSpec::DoubleWell { sigma: 0.5 },
            SdeId::ExpNoise => SdeSpec::ExpNoise {
                mu: -2.0,
                sigma: 0.1,
            },
            SdeId::LognormalOu => SdeSpec::LognormalOu {
                m: (-0.5f64).exp(),
                theta: 1.0,
                sigma: 0.3,
            },
            SdeId::Ou2d => SdeSpec::Ou2d {
                b: [[-1.0, -0.5], [-1.0, -1.0]],
                sigma: [[1.0, 0.0], [0.0, 0.5]],
            },
            SdeId::Oscillator => SdeSpec::Oscillator { sigma: 0.1 },
        }
    }

    pub fn id(&self) -> SdeId {
        match self {
            SdeSpec::Ou1d { .. } => SdeId::Ou1d,
            SdeSpec::Gbm { .. } => SdeId::Gbm,
            SdeSpec::ExpDiffusion { .. } => SdeId::ExpDiffusion,
            SdeSpec::Trig { .. } => SdeId::Trig,
            SdeSpec::DoubleWell { .. } => SdeId::DoubleWell,
            SdeSpec::ExpNoise { .. } => SdeId::ExpNoise,
            SdeSpec::LognormalOu { .. } => SdeId::LognormalOu,
            SdeSpec::Ou2d { .. } => SdeId::Ou2d,
            SdeSpec::Oscillator { .. } => SdeId::Oscillator,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SdeSpec::Ou2d { .. } | SdeSpec::Oscillator { .. } => 2,
            _ => 1,
        }
    }

    pub fn noise_law(&self) -> NoiseLaw {
        match self {
            SdeSpec::ExpNoise { .. } => NoiseLaw::ExponentialUnit,
            SdeSpec::LognormalOu { .. } => NoiseLaw::LognormalUnit,
            _ => NoiseLaw::Gaussian,
        }
    }

    pub fn update_rule(&self) -> UpdateRule {
        match self {
            SdeSpec::LognormalOu { .. } => UpdateRule::MultiplicativeLognormal,
            _ => UpdateRule::AdditiveEm,
        }
    }

    /// Same system with every noise amplitude set to zero.
    pub fn without_noise(&self) -> SdeSpec {
        let mut out = self.clone();
        match &mut out {
            SdeSpec::Ou1d { sigma, .. }
            | SdeSpec::Gbm { sigma, .. }
            | SdeSpec::ExpDiffusion { sigma, .. }
            | SdeSpec::Trig { sigma, .. }
            | SdeSpec::DoubleWell { sigma }
            | SdeSpec::ExpNoise { sigma, .. }
            | SdeSpec::LognormalOu { sigma, .. }
            | SdeSpec::Oscillator { sigma } => *sigma = 0.0,
            SdeSpec::Ou2d { sigma, .. } => *sigma = [[0.0; 2]; 2],
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            SdeSpec::Ou1d { theta, mu, sigma } => [*theta, *mu, *sigma].iter().all(|v| v.is_finite()),
            SdeSpec::Gbm { mu, sigma }
            | SdeSpec::ExpDiffusion { mu, sigma }
            | SdeSpec::ExpNoise { mu, sigma } => mu.is_finite() && sigma.is_finite(),
            SdeSpec::Trig { k, sigma } => k.is_finite() && sigma.is_finite(),
            SdeSpec::DoubleWell { sigma } | SdeSpec::Oscillator { sigma } => sigma.is_finite(),
            SdeSpec::LognormalOu { m, theta, sigma } => {
                if *m <= 0.0 {
                    return Err(Error::Config(format!("lognormal_ou needs m > 0, got {m}")));
                }
                [*m, *theta, *sigma].iter().all(|v| v.is_finite())
            }
            SdeSpec::Ou2d { b, sigma } => b.iter().chain(sigma).flatten().all(|v| v.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::Config(format!("non-finite parameter in {self:?}")))
        }
    }

    /// Drift `a(x)` of the additive systems.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            SdeSpec::Ou1d { theta, mu, .. } => vec![theta * (mu - x[0])],
            SdeSpec::Gbm { mu, .. } => vec![mu * x[0]],
            SdeSpec::ExpDiffusion { mu, .. } => vec![-mu * x[0]],
            SdeSpec::Trig { k, .. } => vec![(2.0 * k * PI * x[0]).sin()],
            SdeSpec::DoubleWell { .. } => vec![x[0] - x[0].powi(3)],
            SdeSpec::ExpNoise { mu, .. } => vec![mu * x[0]],
            SdeSpec::LognormalOu { m, theta, .. } => vec![(m * x[0].powf(-theta)).ln()],
            SdeSpec::Ou2d { b, .. } => vec![
                b[0][0] * x[0] + b[0][1] * x[1],
                b[1][0] * x[0] + b[1][1] * x[1],
            ],
            SdeSpec::Oscillator { .. } => vec![x[1], -x[0]],
        }
    }

    /// Diffusion matrix `b(x)` (row-major, `d × d`), applied to standardized noise.
    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            SdeSpec::Ou1d { sigma, .. }
            | SdeSpec::DoubleWell { sigma }
            | SdeSpec::ExpNoise { sigma, .. }
            | SdeSpec::LognormalOu { sigma, .. } => vec![sigma],
            SdeSpec::Gbm { sigma, .. } => vec![sigma * x[0]],
            SdeSpec::ExpDiffusion { sigma, .. } => vec![sigma * (-x[0] * x[0]).exp()],
            SdeSpec::Trig { k, sigma } => vec![sigma * (2.0 * k * PI * x[0]).cos()],
            SdeSpec::Ou2d { sigma, .. } => vec![sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]],
            SdeSpec::Oscillator { sigma } => vec![0.0, 0.0, 0.0, sigma],
        }
    }

    /// Standardized noise for one step, drawn from [`Self::noise_law`].
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self.noise_law() {
            NoiseLaw::Gaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            NoiseLaw::ExponentialUnit => out.iter_mut().for_each(|v| *v = rng.sample(Exp1)),
            NoiseLaw::LognormalUnit => out
                .iter_mut()
                .for_each(|v| *v = rng.sample::<f64, _>(StandardNormal).exp()),
        }
    }

    /// One Euler–Maruyama step (or the multiplicative lognormal scheme).
    pub fn em_step(&self, x: &[f64], dt: f64, noise: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x.len() != d || noise.len() != d {
            return Err(Error::InvalidInput(format!(
                "state/noise length must be {d}, got {}/{}",
                x.len(),
                noise.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
        }
        if x.iter().chain(noise).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite state {x:?} or noise {noise:?}"
            )));
        }
        let sqrt_dt = dt.sqrt();
        if let SdeSpec::LognormalOu { m, theta, sigma } = *self {
            if x[0] <= 0.0 {
                return Err(Error::Domain(format!(
                    "lognormal update needs a positive state, got {}",
                    x[0]
                )));
            }
            if noise[0] <= 0.0 {
                return Err(Error::Domain(format!(
                    "lognormal noise must be positive, got {}",
                    noise[0]
                )));
            }
            return Ok(vec![
                m.powf(dt) * x[0].powf(1.0 - theta * dt) * noise[0].powf(sigma * sqrt_dt),
            ]);
        }
        let a = self.drift(x);
        let b = self.diffusion(x);
        Ok((0..d)
            .map(|i| {
                let kick: f64 = (0..d).map(|j| b[i * d + j] * noise[j]).sum();
                x[i] + a[i] * dt + kick * sqrt_dt
            })
            .collect())
    }

    /// Reference per-step drift and diffusion as measured by the one-step
    /// estimators: `E[x₁ − x₀]/Δ` and `Std[x₁]/√Δ` componentwise. For the
    /// lognormal system these are the log-drift and the raw one-step std.
    pub fn reference_drift_diffusion(&self, x: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
        match *self {
            SdeSpec::ExpNoise { mu, sigma } => (vec![mu * x[0] + sigma / dt.sqrt()], vec![sigma]),
            SdeSpec::LognormalOu { m, theta, sigma } => {
                let a = (m * x[0].powf(-theta)).ln() + sigma * sigma / 2.0;
                let b = ((sigma * sigma * dt).exp() - 1.0).sqrt()
                    * (m * (sigma * sigma / 2.0).exp()).powf(dt)
                    * (1.0 - theta * dt)
                    * x[0];
                (vec![a], vec![b])
            }
            _ => {
                let d = self.dim();
                let b = self.diffusion(x);
                let diff = (0..d)
                    .map(|i| (0..d).map(|j| b[i * d + j].powi(2)).sum::<f64>().sqrt())
                    .collect();
                (self.drift(x), diff)
            }
        }
    }
}
