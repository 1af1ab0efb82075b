//! Uniform mixtures of independently trained flow maps.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::gan::FlowMapModel;
use crate::map::{check_rngs, row_rng, StochasticMap};
use crate::rng::{substream, StreamRng, Tag};
use crate::{Error, Result};

/// Samples a member uniformly at random on every call, then steps with it.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleGenerator<M = FlowMapModel> {
    members: Vec<M>,
}

impl<M: StochasticMap> EnsembleGenerator<M> {
    pub fn new(members: Vec<M>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidInput("an ensemble needs at least one member".into()));
        };
        let (d, lag) = (first.dim(), first.lag());
        if members.iter().any(|m| m.dim() != d || m.lag() != lag) {
            return Err(Error::InvalidInput(
                "ensemble members must share dimension and lag".into(),
            ));
        }
        Ok(EnsembleGenerator { members })
    }

    pub fn members(&self) -> &[M] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Member index for the next call; a single member consumes no randomness.
    fn pick(&self, rng: &mut StreamRng) -> usize {
        match self.members.len() {
            1 => 0,
            m => rng.random_range(0..m),
        }
    }

    /// One step from `x` with a freshly drawn member.
    pub fn ensemble_step(&self, x: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let k = self.pick(rng);
        let row = ArrayView2::from_shape((1, x.len()), x).expect("state row");
        self.members[k]
            .step_batch(row, std::slice::from_mut(rng))
            .into_raw_vec_and_offset()
            .0
    }
}

impl<M: StochasticMap> StochasticMap for EnsembleGenerator<M> {
    fn dim(&self) -> usize {
        self.members[0].dim()
    }

    fn lag(&self) -> f64 {
        self.members[0].lag()
    }

    fn step_batch(&self, x: ArrayView2<f64>, rngs: &mut [StreamRng]) -> Array2<f64> {
        check_rngs(rngs, x.nrows());
        let n = x.nrows();
        if rngs.len() == 1 && n > 1 {
            // Shared stream: sample rows one after another.
            let mut out = Array2::zeros(x.raw_dim());
            for (i, row) in x.rows().into_iter().enumerate() {
                let next = self.ensemble_step(&row.to_vec(), &mut rngs[0]);
                out.row_mut(i).assign(&Array1::from(next));
            }
            return out;
        }
        let picks: Vec<usize> = (0..n).map(|i| self.pick(row_rng(rngs, i))).collect();
        let mut out = Array2::zeros(x.raw_dim());
        for (k, member) in self.members.iter().enumerate() {
            let rows: Vec<usize> = (0..n).filter(|&i| picks[i] == k).collect();
            if rows.is_empty() {
                continue;
            }
            let mut sub_rngs: Vec<StreamRng> = rows.iter().map(|&i| rngs[i].clone()).collect();
            let next = member.step_batch(x.select(Axis(0), &rows).view(), &mut sub_rngs);
            for (j, &i) in rows.iter().enumerate() {
                out.row_mut(i).assign(&next.row(j));
                rngs[i] = sub_rngs[j].clone();
            }
        }
        out
    }
}

/// Monte Carlo estimate of `E[G(x)]` from `n` one-step draws.
pub fn cond_mean<M: StochasticMap + ?Sized>(map: &M, x: &[f64], n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let xs = Array2::from_shape_fn((n, x.len()), |(_, j)| x[j]);
    let out = map.step_batch(xs.view(), std::slice::from_mut(rng));
    out.mean_axis(Axis(0)).expect("n >= 1").to_vec()
}

/// Stratified estimate of the mixture mean: `n / M` draws per member, averaged.
pub fn ensemble_cond_mean<M: StochasticMap>(
    ens: &EnsembleGenerator<M>,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Vec<f64> {
    let m = ens.size();
    let per = (n_samples / m).max(1);
    let mut acc = vec![0.0; x.len()];
    for (k, member) in ens.members().iter().enumerate() {
        let mut rng = substream(seed, Tag::Ensemble, &[k as u64]);
        let mk = cond_mean(member, x, per, &mut rng);
        acc.iter_mut().zip(mk).for_each(|(a, v)| *a += v / m as f64);
    }
    acc
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleManifest {
    format: String,
    dim: usize,
    lag: f64,
    /// Member model directories, relative to the manifest.
    members: Vec<String>,
}

const ENSEMBLE_FORMAT: &str = "flowmap-ensemble/1";
pub const ENSEMBLE_MANIFEST: &str = "ensemble.toml";

impl EnsembleGenerator<FlowMapModel> {
    /// Writes `ensemble.toml` into `dir`, listing member directories relative to it.
    pub fn save_manifest(&self, dir: &Path, member_dirs: &[String]) -> Result<PathBuf> {
        if member_dirs.len() != self.size() {
            return Err(Error::InvalidInput("one directory per member required".into()));
        }
        let manifest = EnsembleManifest {
            format: ENSEMBLE_FORMAT.into(),
            dim: self.dim(),
            lag: self.lag(),
            members: member_dirs.to_vec(),
        };
        let path = dir.join(ENSEMBLE_MANIFEST);
        blob::write_toml(&path, &manifest)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ENSEMBLE_MANIFEST);
        let m: EnsembleManifest = blob::read_toml(&path)?;
        if m.format != ENSEMBLE_FORMAT {
            return Err(Error::artifact(&path, format!("unsupported format {:?}", m.format)));
        }
        let members = m
            .members
            .iter()
            .map(|p| FlowMapModel::load(&dir.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let ens = EnsembleGenerator::new(members).map_err(|e| Error::artifact(&path, e.to_string()))?;
        if ens.dim() != m.dim || ens.lag() != m.lag {
            return Err(Error::artifact(&path, "members disagree with the manifest"));
        }
        Ok(ens)
    }
}
