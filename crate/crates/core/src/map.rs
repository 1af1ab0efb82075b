//! One-step samplers: anything that advances a batch of states by one lag.

use ndarray::{Array2, ArrayView2};

use crate::rng::StreamRng;
use crate::testbed::SdeSpec;

/// A random one-step map `x ↦ G(x, ω)` acting on batches.
///
/// `rngs` holds either one stream shared by all rows (consumed row by row in
/// order) or one stream per row. Rows whose step fails come back as NaN.
pub trait StochasticMap {
    fn dim(&self) -> usize;
    fn lag(&self) -> f64;
    fn step_batch(&self, x: ArrayView2<f64>, rngs: &mut [StreamRng]) -> Array2<f64>;
}

/// Stream used for row `i`.
pub(crate) fn row_rng(rngs: &mut [StreamRng], i: usize) -> &mut StreamRng {
    match rngs.len() {
        1 => &mut rngs[0],
        _ => &mut rngs[i],
    }
}

pub(crate) fn check_rngs(rngs: &[StreamRng], rows: usize) {
    assert!(
        rngs.len() == 1 || rngs.len() == rows,
        "need one shared stream or one per row, got {} for {rows} rows",
        rngs.len()
    );
}

/// Ground-truth system sampled with its own Euler–Maruyama scheme at a fixed lag.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerMaruyama {
    pub sde: SdeSpec,
    pub dt: f64,
}

impl EulerMaruyama {
    pub fn new(sde: SdeSpec, dt: f64) -> Self {
        EulerMaruyama { sde, dt }
    }
}

impl StochasticMap for EulerMaruyama {
    fn dim(&self) -> usize {
        self.sde.dim()
    }

    fn lag(&self) -> f64 {
        self.dt
    }

    fn step_batch(&self, x: ArrayView2<f64>, rngs: &mut [StreamRng]) -> Array2<f64> {
        check_rngs(rngs, x.nrows());
        let d = self.sde.dim();
        let mut out = Array2::zeros(x.raw_dim());
        let mut noise = vec![0.0; d];
        for (i, row) in x.rows().into_iter().enumerate() {
            self.sde.draw_noise(row_rng(rngs, i), &mut noise);
            let state = row.to_vec();
            match self.sde.em_step(&state, self.dt, &noise) {
                Ok(next) => out.row_mut(i).assign(&ndarray::ArrayView1::from(&next)),
                Err(_) => out.row_mut(i).fill(f64::NAN),
            }
        }
        out
    }
}
