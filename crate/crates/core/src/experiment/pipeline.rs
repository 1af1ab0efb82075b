use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{Estimator, ExperimentConfig};
use super::report::build_report;
use crate::blob::{self, sha256_file};
use crate::det::{train_det, DetOutcome};
use crate::diagnostics::tables::{columns, per_component, write_csv};
use crate::diagnostics::{
    covariance_spectrum, effective_drift_diffusion, grid_1d, lognormal_drift_diffusion,
    one_step_samples, path_moments, reference_table, simulate_from, w1_distance, Histogram,
    Histogram2d, PathEnsemble, SimOptions,
};
use crate::ensemble::{EnsembleGenerator, ENSEMBLE_MANIFEST};
use crate::gan::{train_gan, FlowMapModel, GanConfig, MODEL_MANIFEST};
use crate::map::{EulerMaruyama, StochasticMap};
use crate::nn::checkpoint::{load_net, save_net};
use crate::nn::{DetSubMap, NetRole};
use crate::rng::{derive_seed, Tag};
use crate::testbed::{generate_dataset, TrajectoryDataset, DATASET_MANIFEST};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    TrainDet,
    TrainGan,
    Simulate,
    Diagnose,
    Report,
    All,
}

impl Stage {
    pub const PIPELINE: [Stage; 6] = [
        Stage::Generate,
        Stage::TrainDet,
        Stage::TrainGan,
        Stage::Simulate,
        Stage::Diagnose,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::TrainDet => "train-det",
            Stage::TrainGan => "train-gan",
            Stage::Simulate => "simulate",
            Stage::Diagnose => "diagnose",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .iter()
            .chain(std::iter::once(&Stage::All))
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Replace artifacts produced under a different configuration.
    pub override_hash: bool,
    /// Skip stages whose manifest matches the configuration and whose artifacts are intact.
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub artifacts: Vec<ArtifactDigest>,
}

pub const CONFIG_FILE: &str = "config.toml";
const HASH_FILE: &str = "config.sha256";

fn manifest_path(out: &Path, stage: Stage) -> PathBuf {
    out.join("manifests").join(format!("{}.toml", stage.name()))
}

pub fn member_dir(out: &Path, i: usize) -> PathBuf {
    out.join("models").join(format!("m{i}"))
}

/// Refuses to mix artifacts of different configurations unless overridden.
fn guard_config(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<()> {
    let hash = cfg.hash();
    let hash_path = out.join(HASH_FILE);
    if let Ok(existing) = std::fs::read_to_string(&hash_path) {
        if existing.trim() != hash && !opts.override_hash {
            return Err(Error::Config(format!(
                "{} holds artifacts of config {} but this config hashes to {hash}; pass --override to replace them",
                out.display(),
                existing.trim()
            )));
        }
    }
    blob::write_bytes(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    blob::write_bytes(&hash_path, format!("{hash}\n").as_bytes())
}

/// True when the stage manifest matches `cfg` and every listed artifact is intact.
pub fn stage_complete(cfg: &ExperimentConfig, out: &Path, stage: Stage) -> bool {
    let Ok(m) = blob::read_toml::<RunManifest>(&manifest_path(out, stage)) else {
        return false;
    };
    m.config_hash == cfg.hash()
        && m.artifacts
            .iter()
            .all(|a| sha256_file(&out.join(&a.path)).is_ok_and(|h| h == a.sha256))
}

/// `path` must exist; otherwise names the stage that produces it.
fn require(path: PathBuf, producer: Stage) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            stage: producer.name(),
        })
    }
}

/// Runs one stage (or all of them in order) and returns the artifacts written.
pub fn run_stage(cfg: &ExperimentConfig, out: &Path, stage: Stage, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    guard_config(cfg, out, opts)?;
    let stages: Vec<Stage> = match stage {
        Stage::All => Stage::PIPELINE.to_vec(),
        s => vec![s],
    };
    let mut written = Vec::new();
    for st in stages {
        if opts.resume && st != Stage::Report && stage_complete(cfg, out, st) {
            log::info!("stage {} already complete, skipping", st.name());
            continue;
        }
        log::info!("stage {} starting", st.name());
        let start = Instant::now();
        let artifacts = match st {
            Stage::Generate => stage_generate(cfg, out)?,
            Stage::TrainDet => stage_train_det(cfg, out)?,
            Stage::TrainGan => stage_train_gan(cfg, out)?,
            Stage::Simulate => stage_simulate(cfg, out)?,
            Stage::Diagnose => stage_diagnose(cfg, out)?,
            Stage::Report => build_report(cfg, out)?,
            Stage::All => unreachable!(),
        };
        let wall = start.elapsed().as_secs_f64();
        let digests = artifacts
            .iter()
            .map(|p| {
                Ok(ArtifactDigest {
                    path: p
                        .strip_prefix(out)
                        .unwrap_or(p)
                        .to_string_lossy()
                        .into_owned(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            stage: st.name().into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            wall_time_s: wall,
            artifacts: digests,
        };
        blob::write_toml(&manifest_path(out, st), &manifest)?;
        log::info!("stage {} done in {wall:.1} s", st.name());
        written.extend(artifacts);
    }
    Ok(written)
}

fn load_dataset(out: &Path) -> Result<TrajectoryDataset> {
    let dir = out.join("dataset");
    require(dir.join(DATASET_MANIFEST), Stage::Generate)?;
    TrajectoryDataset::load(&dir)
}

fn stage_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = generate_dataset(&cfg.sde, &cfg.dataset)?;
    let dir = out.join("dataset");
    let manifest = ds.save(&dir)?;
    Ok(vec![manifest, dir.join("states.bin")])
}

fn curve_csv(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    write_csv(
        path,
        &[],
        &columns(&["epoch", name]),
        values.iter().enumerate().map(|(e, &v)| vec![e as f64, v]),
    )
}

fn stage_train_det(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(out)?;
    let mut written = Vec::new();
    for i in 0..cfg.ensemble_size {
        let (det_seed, _) = cfg.member_seeds(i);
        let det_cfg = crate::det::DetConfig {
            seed: det_seed,
            ..cfg.det.clone()
        };
        let DetOutcome { map, loss_curve } = train_det(&ds, &det_cfg)?;
        let dir = member_dir(out, i);
        let m = save_net(&dir, "det", map.net(), NetRole::Deterministic, None, det_seed, "train-det")?;
        let curve = dir.join("det_loss.csv");
        curve_csv(&curve, "loss", &loss_curve)?;
        written.extend([m, dir.join("det.bin"), curve]);
    }
    Ok(written)
}

fn stage_train_gan(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(out)?;
    let mut written = Vec::new();
    let mut members = Vec::new();
    let mut dirs = Vec::new();
    for i in 0..cfg.ensemble_size {
        let (det_seed, gan_seed) = cfg.member_seeds(i);
        let dir = member_dir(out, i);
        let (det_net, det_m) = load_net(&require(dir.join("det.toml"), Stage::TrainDet)?)?;
        if det_m.role != NetRole::Deterministic {
            return Err(Error::artifact(dir.join("det.toml"), "not a mean-map checkpoint"));
        }
        let det = DetSubMap::from_net(det_net)?;
        let gan_cfg = GanConfig {
            seed: gan_seed,
            ..cfg.gan.clone()
        };
        let outcome = train_gan(&ds, &det, &gan_cfg)?;
        outcome.model.save(&dir, det_seed, gan_seed)?;
        let critic = save_net(&dir, "critic", outcome.critic.net(), NetRole::Critic, None, gan_seed, "train-gan")?;
        curve_csv(&dir.join("critic_loss.csv"), "critic_loss", &outcome.critic_curve)?;
        curve_csv(&dir.join("generator_loss.csv"), "generator_loss", &outcome.generator_curve)?;
        for f in ["stoch.toml", "stoch.bin", "critic.bin", MODEL_MANIFEST, "critic_loss.csv", "generator_loss.csv"] {
            written.push(dir.join(f));
        }
        written.push(critic);
        members.push(outcome.model);
        dirs.push(format!("m{i}"));
    }
    let ens = EnsembleGenerator::new(members)?;
    written.push(ens.save_manifest(&out.join("models"), &dirs)?);
    Ok(written)
}

fn load_ensemble(out: &Path) -> Result<EnsembleGenerator<FlowMapModel>> {
    let dir = out.join("models");
    require(dir.join(ENSEMBLE_MANIFEST), Stage::TrainGan)?;
    EnsembleGenerator::load(&dir)
}

/// Recorded step indices: at most ~200 evenly strided slices plus the pdf times.
fn moment_steps(n_steps: usize, lag: f64, pdf_times: &[f64]) -> Vec<usize> {
    let stride = n_steps.div_ceil(200).max(1);
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    steps.push(n_steps);
    steps.extend(pdf_times.iter().map(|t| ((t / lag).round() as usize).min(n_steps)));
    steps.sort_unstable();
    steps.dedup();
    steps
}

fn fmt_state(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn stage_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let learned = load_ensemble(out)?;
    let truth = EulerMaruyama::new(cfg.sde.clone(), cfg.dataset.lag);
    let g = &cfg.diagnostics;
    let d = cfg.sde.dim();
    let n_steps = cfg.horizon_steps();
    let dir = out.join("sim");
    let mut written = Vec::new();

    let record = moment_steps(n_steps, cfg.dataset.lag, &g.pdf_times);
    let opts = |k: u64| SimOptions {
        record: Some(record.clone()),
        ..SimOptions::new(derive_seed(g.seed, Tag::Simulate, k))
    };
    let learned_paths = simulate_from(&learned, &g.x0, g.n_paths, n_steps, &opts(0))?;
    let true_paths = simulate_from(&truth, &g.x0, g.n_paths, n_steps, &opts(1))?;
    let ml = path_moments(&learned_paths)?;
    let mt = path_moments(&true_paths)?;
    let exact = cfg.sde.has_closed_form();
    let mut header = vec!["t".to_string()];
    for k in 0..d {
        for name in ["mean_learned", "std_learned", "mean_true", "std_true"] {
            header.push(format!("{name}_{k}"));
        }
        if exact {
            header.push(format!("mean_exact_{k}"));
            header.push(format!("std_exact_{k}"));
        }
    }
    let times = learned_paths.times();
    let mut rows = Vec::with_capacity(times.len());
    for (s, &t) in times.iter().enumerate() {
        let mut row = vec![t];
        let closed = if exact {
            Some(cfg.sde.closed_form_moments(&g.x0, t)?)
        } else {
            None
        };
        for k in 0..d {
            row.extend([ml.mean[[s, k]], ml.std[[s, k]], mt.mean[[s, k]], mt.std[[s, k]]]);
            if let Some(c) = &closed {
                row.extend([c.mean[k], c.variance[k].sqrt()]);
            }
        }
        rows.push(row);
    }
    let comments = vec![
        format!("x0={}", fmt_state(&g.x0)),
        format!("n_paths_learned={} excluded_learned={}", learned_paths.n_paths(), learned_paths.excluded),
        format!("n_paths_true={} excluded_true={}", true_paths.n_paths(), true_paths.excluded),
        "std is (n-1)-normalised".into(),
    ];
    let p = dir.join("moments.csv");
    write_csv(&p, &comments, &header, rows)?;
    written.push(p);

    for (name, ens) in [("samples_learned.csv", &learned_paths), ("samples_true.csv", &true_paths)] {
        let p = dir.join(name);
        write_samples(&p, ens, g.sample_paths)?;
        written.push(p);
    }

    // Marginal laws at the requested times and at the horizon.
    let mut check_times: Vec<f64> = g.pdf_times.clone();
    check_times.push(n_steps as f64 * cfg.dataset.lag);
    let mut w1_rows = Vec::new();
    for &t in &check_times {
        let step = ((t / cfg.dataset.lag).round() as usize).min(n_steps);
        let s = record.iter().position(|&r| r == step).expect("recorded");
        for k in 0..d {
            let a = learned_paths.slice(s, k);
            let b = true_paths.slice(s, k);
            w1_rows.push(vec![t, k as f64, w1_distance(&a, &b)?]);
            if g.pdf_times.contains(&t) {
                let p = dir.join(format!("pdf_t{t}_c{k}.csv"));
                write_histograms(&p, &a, &b, g.bins, &[format!("t={t}")])?;
                written.push(p);
            }
        }
    }
    let p = dir.join("w1_marginals.csv");
    write_csv(&p, &[], &columns(&["t", "component", "w1"]), w1_rows)?;
    written.push(p);
    drop(learned_paths);
    drop(true_paths);

    // Covariance spectra of the strided time series.
    let stride = n_steps.div_ceil(g.spectrum_max_len.saturating_sub(1).max(1)).max(1);
    let spec_steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    let spec_opts = |k: u64| SimOptions {
        record: Some(spec_steps.clone()),
        ..SimOptions::new(derive_seed(g.seed, Tag::Simulate, k))
    };
    let sl = simulate_from(&learned, &g.x0, g.spectrum_paths, n_steps, &spec_opts(2))?;
    let st = simulate_from(&truth, &g.x0, g.spectrum_paths, n_steps, &spec_opts(3))?;
    for k in 0..d {
        let el = covariance_spectrum(&sl, k)?;
        let et = covariance_spectrum(&st, k)?;
        let p = dir.join(format!("spectrum_c{k}.csv"));
        write_csv(
            &p,
            &[
                format!("paths={} series_len={} stride_steps={stride}", g.spectrum_paths, spec_steps.len()),
                format!("x0={}", fmt_state(&g.x0)),
            ],
            &columns(&["index", "eig_learned", "eig_true"]),
            el.iter().zip(&et).enumerate().map(|(i, (a, b))| vec![i as f64, *a, *b]),
        )?;
        written.push(p);
    }
    Ok(written)
}

fn write_samples(path: &Path, ens: &PathEnsemble, n: usize) -> Result<()> {
    let n = n.min(ens.n_paths());
    let d = ens.paths.dim().2;
    let mut header = vec!["t".to_string()];
    for i in 0..n {
        header.extend(per_component(&format!("path{i}"), d));
    }
    let times = ens.times();
    let rows = times.iter().enumerate().map(|(s, &t)| {
        let mut row = vec![t];
        for i in 0..n {
            row.extend((0..d).map(|k| ens.paths[[i, s, k]]));
        }
        row
    });
    write_csv(path, &[], &header, rows)
}

fn write_histograms(path: &Path, a: &[f64], b: &[f64], bins: usize, comments: &[String]) -> Result<()> {
    let h = Histogram::pooled(&[a, b], bins)?;
    let (dl, dt) = (h[0].density(), h[1].density());
    let rows = h[0]
        .centers()
        .into_iter()
        .enumerate()
        .map(|(i, c)| vec![c, h[0].mass[i], h[1].mass[i], dl[i], dt[i]]);
    write_csv(
        path,
        comments,
        &columns(&["center", "mass_learned", "mass_true", "density_learned", "density_true"]),
        rows,
    )
}

fn stage_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let learned = load_ensemble(out)?;
    let truth = EulerMaruyama::new(cfg.sde.clone(), cfg.dataset.lag);
    let g = &cfg.diagnostics;
    let d = cfg.sde.dim();
    let dir = out.join("diag");
    let mut written = Vec::new();

    if let Some((low, high, points)) = cfg.drift_grid() {
        let grid = grid_1d(low, high, points);
        let estimate = |map: &dyn StochasticMap, seed: u64| match g.estimator {
            Estimator::Standard => effective_drift_diffusion(map, &grid, g.drift_samples, seed),
            Estimator::Lognormal => lognormal_drift_diffusion(map, &grid, g.drift_samples, seed),
        };
        let tl = estimate(&learned, derive_seed(g.seed, Tag::OneStep, 0))?;
        let tt = estimate(&truth, derive_seed(g.seed, Tag::OneStep, 1))?;
        let tr = reference_table(&cfg.sde, &grid, cfg.dataset.lag);
        let rows = (0..grid.len()).map(|i| {
            vec![
                grid[i][0],
                tl.a_hat[i][0],
                tl.b_hat[i][0],
                tt.a_hat[i][0],
                tt.b_hat[i][0],
                tr.a_hat[i][0],
                tr.b_hat[i][0],
                tl.a_se[i][0],
            ]
        });
        let estimator = match g.estimator {
            Estimator::Standard => "a=mean(G-x)/dt b=std(G)/sqrt(dt)",
            Estimator::Lognormal => "a=ln(mean(G/x))/dt b=std(G)",
        };
        let p = dir.join("drift_diffusion.csv");
        write_csv(
            &p,
            &[format!("estimator: {estimator}"), format!("samples_per_point={}", g.drift_samples)],
            &columns(&["x", "a_learned", "b_learned", "a_true_mc", "b_true_mc", "a_ref", "b_ref", "a_learned_se"]),
            rows,
        )?;
        written.push(p);
    }

    let mut w1_rows = Vec::new();
    let mut w1_header = vec!["probe".to_string()];
    w1_header.extend(per_component("x", d));
    w1_header.extend(columns(&["component", "w1", "mean_learned", "mean_true", "std_learned", "std_true"]));
    for (j, x) in g.probes.iter().enumerate() {
        let sl = one_step_samples(&learned, x, g.probe_samples, derive_seed(g.seed, Tag::OneStep, 2), j as u64);
        let st = one_step_samples(&truth, x, g.probe_samples, derive_seed(g.seed, Tag::OneStep, 3), j as u64);
        for k in 0..d {
            let a = sl.column(k).to_vec();
            let b = st.column(k).to_vec();
            let p = dir.join(format!("cond_hist_p{j}_c{k}.csv"));
            write_histograms(&p, &a, &b, g.bins, &[format!("probe={}", fmt_state(x))])?;
            written.push(p);
            let mut row = vec![j as f64];
            row.extend(x);
            row.extend([k as f64, w1_distance(&a, &b)?, mean(&a), mean(&b), std(&a), std(&b)]);
            w1_rows.push(row);
        }
        if d == 2 {
            let p = dir.join(format!("cond_joint_p{j}.csv"));
            write_joint(&p, &sl, &st, (g.bins / 2).max(1), x)?;
            written.push(p);
        }
    }
    let p = dir.join("w1_probes.csv");
    write_csv(&p, &[], &w1_header, w1_rows)?;
    written.push(p);
    Ok(written)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn write_joint(path: &Path, a: &Array2<f64>, b: &Array2<f64>, bins: usize, x: &[f64]) -> Result<()> {
    let cols = |s: &Array2<f64>, k: usize| s.index_axis(Axis(1), k).to_vec();
    let (a0, a1, b0, b1) = (cols(a, 0), cols(a, 1), cols(b, 0), cols(b, 1));
    let h = Histogram2d::pooled(&[(&a0, &a1), (&b0, &b1)], bins)?;
    let centers = |e: &[f64]| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>();
    let (cx, cy) = (centers(&h[0].x_edges), centers(&h[0].y_edges));
    let mut rows = Vec::new();
    for i in 0..bins {
        for j in 0..bins {
            rows.push(vec![cx[i], cy[j], h[0].mass[i][j], h[1].mass[i][j]]);
        }
    }
    write_csv(
        path,
        &[format!("probe={}", fmt_state(x))],
        &columns(&["x_0", "x_1", "mass_learned", "mass_true"]),
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_steps_cover_ends_and_pdf_times() {
        let s = moment_steps(30_000, 0.01, &[0.5, 10.0]);
        assert_eq!(s[0], 0);
        assert_eq!(*s.last().unwrap(), 30_000);
        assert!(s.contains(&50) && s.contains(&1000));
        assert!(s.len() <= 203);
        assert_eq!(moment_steps(400, 0.01, &[]).len(), 201);
    }

    #[test]
    fn stage_names_parse() {
        for st in Stage::PIPELINE {
            assert_eq!(st.name().parse::<Stage>().unwrap(), st);
        }
        assert_eq!("all".parse::<Stage>().unwrap(), Stage::All);
        assert!("train".parse::<Stage>().is_err());
    }
}
