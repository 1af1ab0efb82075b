use ndarray::{Array2, Axis};

use crate::map::StochasticMap;
use crate::rng::{substream, Tag};
use crate::testbed::SdeSpec;
use crate::{Error, Result};

pub const MIN_SAMPLES: usize = 1000;

/// `n` equispaced points from `low` to `high` inclusive.
pub fn grid_1d(low: f64, high: f64, n: usize) -> Vec<Vec<f64>> {
    match n {
        0 => vec![],
        1 => vec![vec![low]],
        _ => (0..n)
            .map(|i| vec![low + (high - low) * i as f64 / (n - 1) as f64])
            .collect(),
    }
}

/// `n` draws of `G(x, ·)` from substream `(seed, OneStep, index)`.
pub fn one_step_samples<M: StochasticMap + ?Sized>(
    map: &M,
    x: &[f64],
    n: usize,
    seed: u64,
    index: u64,
) -> Array2<f64> {
    let xs = Array2::from_shape_fn((n, x.len()), |(_, j)| x[j]);
    let mut rng = substream(seed, Tag::OneStep, &[index]);
    map.step_batch(xs.view(), std::slice::from_mut(&mut rng))
}

/// Per-point drift and diffusion estimates, componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftDiffusionTable {
    pub grid: Vec<Vec<f64>>,
    pub a_hat: Vec<Vec<f64>>,
    pub b_hat: Vec<Vec<f64>>,
    /// Monte Carlo standard error of each drift estimate.
    pub a_se: Vec<Vec<f64>>,
    pub n_samples: usize,
}

fn check(map_dim: usize, grid: &[Vec<f64>], n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples per point, got {n}"
        )));
    }
    if grid.iter().any(|x| x.len() != map_dim) {
        return Err(Error::InvalidInput(format!("grid points must have {map_dim} components")));
    }
    Ok(())
}

/// `â(x) = mean(G(x) − x)/Δ`, `b̂(x) = std(G(x))/√Δ`.
pub fn effective_drift_diffusion<M: StochasticMap + ?Sized>(
    map: &M,
    grid: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<DriftDiffusionTable> {
    check(map.dim(), grid, n_samples)?;
    let dt = map.lag();
    let mut table = DriftDiffusionTable {
        grid: grid.to_vec(),
        a_hat: vec![],
        b_hat: vec![],
        a_se: vec![],
        n_samples,
    };
    for (g, x) in grid.iter().enumerate() {
        let draws = one_step_samples(map, x, n_samples, seed, g as u64);
        let mean = draws.mean_axis(Axis(0)).unwrap();
        let std = draws.std_axis(Axis(0), 1.0);
        table.a_hat.push(mean.iter().zip(x).map(|(m, xi)| (m - xi) / dt).collect());
        table.b_hat.push(std.iter().map(|s| s / dt.sqrt()).collect());
        table
            .a_se
            .push(std.iter().map(|s| s / (n_samples as f64).sqrt() / dt).collect());
    }
    Ok(table)
}

/// Estimators for multiplicative dynamics: `â(x) = ln(mean(G(x)/x))/Δ`,
/// `b̂(x) = std(G(x))`.
pub fn lognormal_drift_diffusion<M: StochasticMap + ?Sized>(
    map: &M,
    grid: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<DriftDiffusionTable> {
    check(map.dim(), grid, n_samples)?;
    if grid.iter().flatten().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("lognormal estimators need a positive grid".into()));
    }
    let dt = map.lag();
    let mut table = DriftDiffusionTable {
        grid: grid.to_vec(),
        a_hat: vec![],
        b_hat: vec![],
        a_se: vec![],
        n_samples,
    };
    for (g, x) in grid.iter().enumerate() {
        let draws = one_step_samples(map, x, n_samples, seed, g as u64);
        let mean = draws.mean_axis(Axis(0)).unwrap();
        let std = draws.std_axis(Axis(0), 1.0);
        table.a_hat.push(mean.iter().zip(x).map(|(m, xi)| (m / xi).ln() / dt).collect());
        table.b_hat.push(std.to_vec());
        // Delta method: se(ln r) ≈ se(r)/r.
        table.a_se.push(
            std.iter()
                .zip(&mean)
                .map(|(s, m)| s / (n_samples as f64).sqrt() / m / dt)
                .collect(),
        );
    }
    Ok(table)
}

/// Analytic drift and diffusion of the ground truth on the same grid.
pub fn reference_table(sde: &SdeSpec, grid: &[Vec<f64>], dt: f64) -> DriftDiffusionTable {
    let (a, b): (Vec<_>, Vec<_>) = grid.iter().map(|x| sde.reference_drift_diffusion(x, dt)).unzip();
    DriftDiffusionTable {
        grid: grid.to_vec(),
        a_se: vec![vec![0.0; sde.dim()]; grid.len()],
        a_hat: a,
        b_hat: b,
        n_samples: 0,
    }
}
