use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use crate::map::StochasticMap;
use crate::rng::{substream, StreamRng, Tag};
use crate::{Error, Result};

/// Recorded states of many simulated paths.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    /// `[n_paths, steps.len(), d]`.
    pub paths: Array3<f64>,
    /// Step index of every recorded time slice.
    pub steps: Vec<usize>,
    pub lag: f64,
    /// Initial state of each kept path.
    pub initial: Array2<f64>,
    /// Paths dropped after reaching a non-finite state.
    pub excluded: usize,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.dim().0
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|&n| n as f64 * self.lag).collect()
    }

    /// Values of one component at recorded slice `t`.
    pub fn slice(&self, t: usize, component: usize) -> Vec<f64> {
        self.paths.slice(s![.., t, component]).to_vec()
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub seed: u64,
    /// Path `i` draws from substream `(seed, tag, i)`.
    pub tag: Tag,
    /// Steps to record; every step when `None`.
    pub record: Option<Vec<usize>>,
    pub chunk: usize,
}

impl SimOptions {
    pub fn new(seed: u64) -> Self {
        SimOptions {
            seed,
            tag: Tag::Simulate,
            record: None,
            chunk: 4096,
        }
    }
}

/// Iterates `map` for `n_steps` steps from each row of `initial`.
pub fn simulate<M: StochasticMap + ?Sized>(
    map: &M,
    initial: ArrayView2<f64>,
    n_steps: usize,
    opts: &SimOptions,
) -> Result<PathEnsemble> {
    let (n, d) = initial.dim();
    if d != map.dim() {
        return Err(Error::InvalidInput(format!(
            "initial states have {d} components, map has {}",
            map.dim()
        )));
    }
    let steps: Vec<usize> = match &opts.record {
        Some(r) => {
            if r.iter().any(|&t| t > n_steps) || r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(
                    "recorded steps must be increasing and <= n_steps".into(),
                ));
            }
            r.clone()
        }
        None => (0..=n_steps).collect(),
    };
    let mut paths = Array3::zeros((n, steps.len(), d));
    let mut finite = vec![true; n];
    let chunk = opts.chunk.max(1);
    for start in (0..n).step_by(chunk) {
        let end = (start + chunk).min(n);
        let mut rngs: Vec<StreamRng> = (start..end)
            .map(|i| substream(opts.seed, opts.tag, &[i as u64]))
            .collect();
        let mut x = initial.slice(s![start..end, ..]).to_owned();
        let mut next_rec = 0;
        for step in 0..=n_steps {
            if step > 0 {
                x = map.step_batch(x.view(), &mut rngs);
            }
            if next_rec < steps.len() && steps[next_rec] == step {
                paths.slice_mut(s![start..end, next_rec, ..]).assign(&x);
                next_rec += 1;
            }
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            finite[start + i] = row.iter().all(|v| v.is_finite());
        }
    }
    // A path that blew up stays non-finite; also catch recorded blow-ups.
    for (i, f) in finite.iter_mut().enumerate() {
        *f = *f && paths.index_axis(Axis(0), i).iter().all(|v| v.is_finite());
    }
    let keep: Vec<usize> = (0..n).filter(|&i| finite[i]).collect();
    let excluded = n - keep.len();
    if excluded > 0 {
        log::warn!("{excluded} of {n} paths became non-finite and were excluded");
    }
    Ok(PathEnsemble {
        paths: paths.select(Axis(0), &keep),
        steps,
        lag: map.lag(),
        initial: initial.select(Axis(0), &keep),
        excluded,
    })
}

/// `n_paths` paths all started at `x0`.
pub fn simulate_from<M: StochasticMap + ?Sized>(
    map: &M,
    x0: &[f64],
    n_paths: usize,
    n_steps: usize,
    opts: &SimOptions,
) -> Result<PathEnsemble> {
    let initial = Array2::from_shape_fn((n_paths, x0.len()), |(_, j)| x0[j]);
    simulate(map, initial.view(), n_steps, opts)
}

/// Cross-path mean and `(n − 1)`-normalised standard deviation per recorded slice.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMoments {
    /// `[slices, d]`.
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
}

pub fn path_moments(ens: &PathEnsemble) -> Result<PathMoments> {
    if ens.n_paths() < 2 {
        return Err(Error::NotAvailable(format!(
            "standard deviation needs at least 2 paths, have {}",
            ens.n_paths()
        )));
    }
    let mean = ens.paths.mean_axis(Axis(0)).expect("nonempty");
    let std = ens.paths.std_axis(Axis(0), 1.0);
    Ok(PathMoments { mean, std })
}
