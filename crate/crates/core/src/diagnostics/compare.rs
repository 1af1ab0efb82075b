use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Axis;

use super::PathEnsemble;
use crate::{Error, Result};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical Wasserstein-1 distance between two samples on the line.
///
/// Equal sizes use the sorted coupling `mean |a_(i) − b_(i)|`; otherwise the
/// exact distance `∫ |F_a − F_b|` between the empirical distribution functions.
pub fn w1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("W1 needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("W1 samples must be finite".into()));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    if sa.len() == sb.len() {
        let sum: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(sum / sa.len() as f64);
    }
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = sa[0].min(sb[0]);
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < sa.len() && sa[i] == next {
            i += 1;
        }
        while j < sb.len() && sb[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Probability mass per bin on a shared set of edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

fn pooled_edges(sets: &[&[f64]], bins: usize) -> Vec<f64> {
    let all = sets.iter().flat_map(|s| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let mut edges: Vec<f64> = (0..bins)
        .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
        .collect();
    edges.push(hi);
    edges
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    if !(v >= lo && v <= hi) {
        return None;
    }
    Some((((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1))
}

impl Histogram {
    /// Histograms of every sample set over `bins` equal bins spanning their pooled range.
    pub fn pooled(sets: &[&[f64]], bins: usize) -> Result<Vec<Histogram>> {
        if bins == 0 || sets.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInput("need bins >= 1 and nonempty samples".into()));
        }
        let edges = pooled_edges(sets, bins);
        Ok(sets.iter().map(|s| Histogram::on_edges(s, &edges)).collect())
    }

    pub fn on_edges(samples: &[f64], edges: &[f64]) -> Histogram {
        let mut mass = vec![0.0; edges.len() - 1];
        for &v in samples {
            if let Some(k) = bin_of(edges, v) {
                mass[k] += 1.0;
            }
        }
        mass.iter_mut().for_each(|m| *m /= samples.len() as f64);
        Histogram {
            edges: edges.to_vec(),
            mass,
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass divided by bin width.
    pub fn density(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .zip(&self.mass)
            .map(|(w, m)| m / (w[1] - w[0]))
            .collect()
    }
}

/// Joint counts of two components on a rectangular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2d {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major `[x_bin][y_bin]` probability mass.
    pub mass: Vec<Vec<f64>>,
}

impl Histogram2d {
    /// Joint histograms of several `(x, y)` sample sets over pooled edges.
    pub fn pooled(sets: &[(&[f64], &[f64])], bins: usize) -> Result<Vec<Histogram2d>> {
        if bins == 0 || sets.iter().any(|(x, y)| x.is_empty() || x.len() != y.len()) {
            return Err(Error::InvalidInput("need bins >= 1 and paired nonempty samples".into()));
        }
        let xs: Vec<&[f64]> = sets.iter().map(|s| s.0).collect();
        let ys: Vec<&[f64]> = sets.iter().map(|s| s.1).collect();
        let (x_edges, y_edges) = (pooled_edges(&xs, bins), pooled_edges(&ys, bins));
        Ok(sets
            .iter()
            .map(|(x, y)| {
                let mut mass = vec![vec![0.0; bins]; bins];
                for (&u, &v) in x.iter().zip(y.iter()) {
                    if let (Some(i), Some(j)) = (bin_of(&x_edges, u), bin_of(&y_edges, v)) {
                        mass[i][j] += 1.0 / x.len() as f64;
                    }
                }
                Histogram2d {
                    x_edges: x_edges.clone(),
                    y_edges: y_edges.clone(),
                    mass,
                }
            })
            .collect())
    }
}

/// Eigenvalues, descending, of the sample covariance of one component's
/// recorded time series, treating each path as one random vector.
pub fn covariance_spectrum(ens: &PathEnsemble, component: usize) -> Result<Vec<f64>> {
    let n = ens.n_paths();
    if n < 2 {
        return Err(Error::NotAvailable("covariance needs at least 2 paths".into()));
    }
    if component >= ens.paths.dim().2 {
        return Err(Error::InvalidInput(format!("no component {component}")));
    }
    let series = ens.paths.index_axis(Axis(2), component);
    let centered = &series - &series.mean_axis(Axis(0)).unwrap();
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let t = cov.nrows();
    let m = DMatrix::from_fn(t, t, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let mut eig: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        // Round-off can leave PSD eigenvalues at -1e-17.
        .map(|&v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}
