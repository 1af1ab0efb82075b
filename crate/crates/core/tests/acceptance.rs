//! Acceptance gate: one PASS/FAIL/SKIPPED line per criterion.
//!
//! Criteria 4 and 5 need trained desk-scale models. They are cached under the
//! cargo target directory keyed by config hash; training is only started when
//! `FLOWMAP_ACCEPTANCE_SLOW=1`. `FLOWMAP_ACCEPTANCE_ONLY=1,3` restricts the run.
//! The verdicts are a report; the process exits nonzero on a FAIL only with
//! `FLOWMAP_ACCEPTANCE_STRICT=1`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowmap_core::blob;
use flowmap_core::det::{multistep_loss, multistep_loss_grad, train_det, DetConfig};
use flowmap_core::diagnostics::tables::read_csv;
use flowmap_core::diagnostics::{path_moments, simulate_from, w1_distance, Histogram, SimOptions};
use flowmap_core::ensemble::{cond_mean, ensemble_cond_mean, EnsembleGenerator};
use flowmap_core::experiment::{run_stage, stage_complete, ExperimentConfig, RunManifest, RunOptions, Scale, Stage};
use flowmap_core::gan::{
    critic_input, critic_loss, critic_loss_grad, draw_rollout_noise, fake_rollout, generator_loss,
    generator_loss_grad, gradient_penalty, interpolate, train_gan, FlowMapModel, GanConfig,
};
use flowmap_core::map::{EulerMaruyama, StochasticMap};
use flowmap_core::nn::gradcheck::{central_difference, max_relative_error};
use flowmap_core::nn::{Activation, Critic, DetSubMap, Mlp, StochSubMap};
use flowmap_core::rng::{substream, StreamRng, Tag};
use flowmap_core::testbed::{generate_dataset, DatasetConfig, Moments, SdeId, SdeSpec, TrajectoryDataset};
use ndarray::{s, Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

/// Collects named checks; the criterion passes when all of them do.
#[derive(Default)]
struct Checks {
    lines: Vec<String>,
    failed: bool,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failed = true;
            self.lines.push(format!("[x] {what}"));
        } else {
            self.lines.push(what);
        }
    }

    fn verdict(self) -> Verdict {
        let text = self.lines.join("; ");
        if self.failed {
            Verdict::Fail(text)
        } else {
            Verdict::Pass(text)
        }
    }
}

fn slow_enabled() -> bool {
    std::env::var("FLOWMAP_ACCEPTANCE_SLOW").is_ok_and(|v| v == "1")
}

fn cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(format!("{}-{}", cfg.name, &cfg.hash()[..12]))
}

// ---------------------------------------------------------------- criterion 1

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn oracle_suite() -> Verdict {
    let mut c = Checks::default();
    let ou = SdeSpec::preset(SdeId::Ou1d);
    let gbm = SdeSpec::preset(SdeId::Gbm);
    let step = |sde: &SdeSpec, x: f64, eta: f64| sde.em_step(&[x], 0.01, &[eta]).unwrap()[0];
    c.check(step(&ou, 1.2, 0.0) == 1.2, "em ou1d at mean");
    c.check(close(step(&ou, 0.0, 0.0), 0.012, 1e-15), "em ou1d x=0");
    c.check(close(step(&ou, 1.0, 0.5), 1.0 + 0.2 * 0.01 + 0.3 * 0.1 * 0.5, 1e-15), "em ou1d noise");
    c.check(close(step(&gbm, 0.5, 0.0), 0.51, 1e-15), "em gbm");
    c.check(
        close(step(&SdeSpec::preset(SdeId::DoubleWell), 2.0, 0.0), 2.0 - 6.0 * 0.01, 1e-15),
        "em double well",
    );

    // Moments of 10^5 Euler-Maruyama paths at t = 0.4.
    let n = 100_000;
    for (id, x0) in [(SdeId::Ou1d, vec![1.5]), (SdeId::Gbm, vec![0.5]), (SdeId::Ou2d, vec![0.3, 0.4])] {
        let sde = SdeSpec::preset(id);
        let em = EulerMaruyama::new(sde.clone(), 0.01);
        let paths = simulate_from(&em, &x0, n, 40, &SimOptions { record: Some(vec![40]), ..SimOptions::new(77) }).unwrap();
        let m = path_moments(&paths).unwrap();
        let exact = match sde {
            // Euler-Maruyama is biased at O(Δ) for GBM at this resolution; use the
            // scheme's own moments, E x_n = x0 (1+μΔ)^n, E x_n² = x0² ((1+μΔ)² + σ²Δ)^n.
            SdeSpec::Gbm { mu, sigma } => {
                let m1 = x0[0] * (1.0 + mu * 0.01).powi(40);
                let m2 = x0[0].powi(2) * ((1.0 + mu * 0.01).powi(2) + sigma * sigma * 0.01).powi(40);
                Moments { mean: vec![m1], variance: vec![m2 - m1 * m1] }
            }
            _ => sde.closed_form_moments(&x0, 0.4).unwrap(),
        };
        for k in 0..x0.len() {
            let sample: Vec<f64> = paths.slice(0, k);
            let var = m.std[[0, k]].powi(2);
            let mean_se = (var / n as f64).sqrt();
            // SE of the sample variance from the fourth central moment.
            let mu4 = sample.iter().map(|v| (v - m.mean[[0, k]]).powi(4)).sum::<f64>() / n as f64;
            let var_se = ((mu4 - var * var) / n as f64).sqrt();
            let zm = (m.mean[[0, k]] - exact.mean[k]) / mean_se;
            let zv = (var - exact.variance[k]) / var_se;
            c.check(zm.abs() <= 4.0 && zv.abs() <= 4.0, format!("{} c{k} z=({zm:.2},{zv:.2})", id.name()));
        }
    }

    let w = |a: &[f64], b: &[f64]| w1_distance(a, b).unwrap();
    c.check(close(w(&[0.0, 1.0], &[1.0, 2.0]), 1.0, 1e-12), "w1 shift");
    c.check(close(w(&[0.0, 0.0, 3.0], &[3.0, 0.0, 0.0]), 0.0, 1e-12), "w1 permutation");
    c.check(close(w(&[0.0], &[0.0, 1.0]), 0.5, 1e-12), "w1 unequal sizes");
    c.check(close(w(&[0.25, 0.75], &[0.0, 1.0]), 0.25, 1e-12), "w1 spread");

    let weights = [0.5, -1.0, 2.0, 0.25, -0.75];
    let mut p = weights.to_vec();
    p.push(0.1);
    let critic = Critic::from_net(Mlp::with_params(&[5, 1], Activation::CRITIC_DEFAULT, p).unwrap(), 1, 4).unwrap();
    let mut rng = substream(5, Tag::Misc, &[]);
    let real = Array2::from_shape_fn((16, 5), |_| rng.random_range(-1.0..1.0));
    let fake = Array2::from_shape_fn((16, 5), |_| rng.random_range(-1.0..1.0));
    let eps: Vec<f64> = (0..16).map(|_| rng.random()).collect();
    let norm = weights.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gp = gradient_penalty(&critic, real.view(), fake.view(), &eps);
    c.check(close(gp, (norm - 1.0).powi(2), 1e-10), format!("affine penalty {gp:.12}"));
    c.verdict()
}

// ---------------------------------------------------------------- criterion 2

fn random_mlp(widths: &[usize], act: Activation, rng: &mut StreamRng) -> Mlp {
    let mut net = Mlp::new(widths, act).unwrap();
    net.init_glorot(rng);
    for p in net.params_mut() {
        *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    net
}

fn differentiation_suite() -> Verdict {
    let mut c = Checks::default();
    let h = 1e-5;
    let mut worst = [0.0f64; 4];
    for seed in 0..6u64 {
        let mut rng = substream(seed, Tag::Misc, &[42]);
        let dim = 1 + seed as usize % 2;

        // Mean map through the multistep loss.
        let det = DetSubMap::from_net(random_mlp(&[dim, 6, 5, dim], Activation::Tanh, &mut rng)).unwrap();
        let batch = Array3::from_shape_fn((4, 5, dim), |_| rng.random_range(-1.0..1.0));
        let (_, g) = multistep_loss_grad(&det, batch.view());
        let fd = central_difference(det.net().params(), h, |p| {
            let mut m = det.clone();
            m.net_mut().params_mut().copy_from_slice(p);
            multistep_loss(&m, batch.view())
        });
        worst[0] = worst[0].max(max_relative_error(&g, &fd));

        // Critic loss with the penalty, for both activations.
        let horizon = 3;
        let width = dim * (horizon + 1);
        for act in [Activation::CRITIC_DEFAULT, Activation::Tanh] {
            let critic = Critic::from_net(random_mlp(&[width, 7, 6, 1], act, &mut rng), dim, horizon).unwrap();
            let real = Array2::from_shape_fn((6, width), |_| rng.random_range(-1.0..1.0));
            let fake = Array2::from_shape_fn((6, width), |_| rng.random_range(-1.0..1.0));
            let eps: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let (_, g) = critic_loss_grad(&critic, real.view(), fake.view(), &eps, 10.0);
            let fd = central_difference(critic.net().params(), h, |p| {
                let mut cr = critic.clone();
                cr.net_mut().params_mut().copy_from_slice(p);
                critic_loss(&cr, real.view(), fake.view(), &eps, 10.0)
            });
            worst[1] = worst[1].max(max_relative_error(&g, &fd));
        }

        // Generator loss back through the rollout.
        let ns = dim + 2;
        let stoch = StochSubMap::from_net(random_mlp(&[dim + ns, 6, 5, dim], Activation::Tanh, &mut rng), ns).unwrap();
        let model = FlowMapModel::new(det.clone(), stoch, 0.01).unwrap();
        let critic = Critic::from_net(random_mlp(&[width, 7, 1], Activation::CRITIC_DEFAULT, &mut rng), dim, horizon).unwrap();
        let x0 = Array2::from_shape_fn((5, dim), |_| rng.random_range(-1.0..1.0));
        let z = draw_rollout_noise(&mut rng, 5, horizon, ns);
        let r = fake_rollout(&model, x0.view(), z.view());
        let (_, g) = generator_loss_grad(&critic, &model, x0.view(), &r);
        let fd = central_difference(model.stoch.net().params(), h, |p| {
            let mut m = model.clone();
            m.stoch.net_mut().params_mut().copy_from_slice(p);
            let r = fake_rollout(&m, x0.view(), z.view());
            generator_loss(&critic, critic_input(x0.view(), r.increments.view()).view())
        });
        worst[2] = worst[2].max(max_relative_error(&g, &fd));

        // Raw penalty parameter gradient, tanh network with curvature.
        let net = random_mlp(&[width, 5, 5, 1], Activation::Tanh, &mut rng);
        let u = Array2::from_shape_fn((7, width), |_| rng.random_range(-1.0..1.0));
        let mut g = vec![0.0; net.params().len()];
        net.gradient_penalty(u.view(), Some(&mut g), 1.0);
        let fd = central_difference(net.params(), h, |p| {
            let mut n2 = net.clone();
            n2.params_mut().copy_from_slice(p);
            n2.gradient_penalty(u.view(), None, 1.0)
        });
        worst[3] = worst[3].max(max_relative_error(&g, &fd));
    }
    for (name, w) in ["mean-map loss", "critic loss + penalty", "generator loss", "penalty (tanh)"].iter().zip(worst) {
        c.check(w <= 1e-4, format!("{name} max rel err {w:.2e}"));
    }
    c.verdict()
}

// ---------------------------------------------------------------- criterion 3

fn mean_map_fit() -> Verdict {
    let mut c = Checks::default();
    let start = Instant::now();
    let (theta, mu, dt) = (1.0, 1.2, 0.01);
    let euler = |x: f64| x + theta * (mu - x) * dt;
    let cfg = DetConfig {
        epochs: 300,
        ..DetConfig::preset(1, 21)
    };
    for sigma in [0.0, 0.3] {
        let sde = SdeSpec::Ou1d { theta, mu, sigma };
        let data = generate_dataset(&sde, &DatasetConfig::preset(SdeId::Ou1d, 20)).unwrap();
        let fit = train_det(&data, &cfg).unwrap().map;
        let (lo, hi, tol) = if sigma == 0.0 {
            let s = data.states();
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, 1e-3)
        } else {
            (0.8, 1.6, 5e-3)
        };
        let n = 161;
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let ms: f64 = xs
            .iter()
            .map(|&x| (fit.apply(&[x]).unwrap()[0] - euler(x)).powi(2))
            .sum::<f64>()
            / n as f64;
        let rms = ms.sqrt();
        c.check(rms <= tol, format!("sigma={sigma} rms {rms:.2e} on [{lo:.3}, {hi:.3}]"));
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs <= 600.0, format!("{secs:.0} s"));
    c.verdict()
}

// ---------------------------------------------------------------- criterion 4

/// Trains (or reuses) the upstream stages of a desk run.
fn trained_run(cfg: &ExperimentConfig) -> Result<PathBuf, String> {
    let dir = cache_dir(cfg);
    let cached = [Stage::Generate, Stage::TrainDet, Stage::TrainGan]
        .iter()
        .all(|&s| stage_complete(cfg, &dir, s));
    if !cached && !slow_enabled() {
        return Err(format!(
            "no trained model in {}; set FLOWMAP_ACCEPTANCE_SLOW=1 to train one",
            dir.display()
        ));
    }
    let opts = RunOptions {
        resume: true,
        ..RunOptions::default()
    };
    for s in [Stage::Generate, Stage::TrainDet, Stage::TrainGan] {
        run_stage(cfg, &dir, s, &opts).map_err(|e| e.to_string())?;
    }
    Ok(dir)
}

fn training_minutes(dir: &Path) -> f64 {
    ["train-det", "train-gan"]
        .iter()
        .filter_map(|s| blob::read_toml::<RunManifest>(&dir.join("manifests").join(format!("{s}.toml"))).ok())
        .map(|m| m.wall_time_s / 60.0)
        .sum()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path).unwrap();
    let j = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("{name} not in {}", path.display()));
    rows.iter().map(|r| r[j]).collect()
}

fn sup_rel(est: &[f64], reference: &[f64]) -> f64 {
    let num = est.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    num / reference.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn end_to_end_ou() -> Verdict {
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Desk, 0);
    let dir = match trained_run(&cfg) {
        Ok(d) => d,
        Err(e) => return Verdict::Skipped(e),
    };
    for s in [Stage::Simulate, Stage::Diagnose] {
        if let Err(e) = run_stage(&cfg, &dir, s, &RunOptions::default()) {
            return Verdict::Fail(e.to_string());
        }
    }
    let mut c = Checks::default();
    let moments = dir.join("sim/moments.csv");
    let t = column(&moments, "t");
    let last = t.iter().position(|&v| (v - 4.0).abs() < 1e-9).unwrap();
    let mean = column(&moments, "mean_learned_0")[last];
    let std = column(&moments, "std_learned_0")[last];
    c.check((mean - 1.2055).abs() <= 0.05, format!("mean(4) {mean:.4}"));
    c.check((std - 0.2121).abs() <= 0.04, format!("std(4) {std:.4}"));
    let drift = dir.join("diag/drift_diffusion.csv");
    let ea = sup_rel(&column(&drift, "a_learned"), &column(&drift, "a_ref"));
    let eb = sup_rel(&column(&drift, "b_learned"), &column(&drift, "b_ref"));
    c.check(ea <= 0.15, format!("drift rel err {ea:.3}"));
    c.check(eb <= 0.15, format!("diffusion rel err {eb:.3}"));
    let w1 = column(&dir.join("diag/w1_probes.csv"), "w1")[0];
    c.check(w1 <= 0.015, format!("W1 at x=0.8 {w1:.4}"));
    let minutes = training_minutes(&dir);
    c.check(minutes <= 150.0, format!("training {minutes:.0} min"));
    c.verdict()
}

// ---------------------------------------------------------------- criterion 5

fn double_well() -> Verdict {
    let cfg = ExperimentConfig::preset(SdeId::DoubleWell, Scale::Desk, 0);
    let dir = match trained_run(&cfg) {
        Ok(d) => d,
        Err(e) => return Verdict::Skipped(e),
    };
    let model = match FlowMapModel::load(&dir.join("models/m0")) {
        Ok(m) => m,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let mut c = Checks::default();
    let paths = simulate_from(&model, &[1.5], 100, 30_000, &SimOptions::new(501)).unwrap();
    let crossed = (0..paths.n_paths())
        .filter(|&i| paths.paths.slice(s![i, .., 0]).iter().any(|&v| v < 0.0))
        .count();
    let frac = crossed as f64 / paths.n_paths() as f64;
    c.check(frac >= 0.2, format!("{crossed}/{} paths cross 0", paths.n_paths()));
    drop(paths);

    let at = |map: &dyn StochasticMap, n: usize, seed: u64| {
        simulate_from(map, &[1.5], n, 10_000, &SimOptions { record: Some(vec![10_000]), ..SimOptions::new(seed) })
            .unwrap()
            .slice(0, 0)
    };
    let learned = at(&model, 10_000, 502);
    let truth = at(&EulerMaruyama::new(cfg.sde.clone(), 0.01), 100_000, 503);
    let edges: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
    let h = Histogram::on_edges(&learned, &edges);
    let centers = h.centers();
    let mode = |range: std::ops::Range<usize>| range.max_by(|&a, &b| h.mass[a].total_cmp(&h.mass[b])).unwrap();
    let (left, right) = (mode(0..20), mode(20..40));
    let dip = (left..=right).map(|i| h.mass[i]).fold(f64::INFINITY, f64::min);
    let bimodal = dip < 0.5 * h.mass[left].min(h.mass[right]);
    c.check(
        bimodal && (centers[left] + 1.0).abs() <= 0.25 && (centers[right] - 1.0).abs() <= 0.25,
        format!("modes {:.2}, {:.2} dip ratio {:.2}", centers[left], centers[right], dip / h.mass[left].min(h.mass[right])),
    );
    let w1 = w1_distance(&learned, &truth).unwrap();
    c.check(w1 <= 0.1, format!("W1(T=100) {w1:.4}"));
    c.verdict()
}

// ---------------------------------------------------------------- criterion 6

/// `x ↦ x + m + s·ξ`, ξ standard normal.
struct GaussShift {
    m: f64,
    s: f64,
}

impl StochasticMap for GaussShift {
    fn dim(&self) -> usize {
        1
    }

    fn lag(&self) -> f64 {
        0.01
    }

    fn step_batch(&self, x: ArrayView2<f64>, rngs: &mut [StreamRng]) -> Array2<f64> {
        let shared = rngs.len() == 1;
        let mut out = x.to_owned();
        for (i, v) in out.iter_mut().enumerate() {
            let rng = if shared { &mut rngs[0] } else { &mut rngs[i] };
            *v += self.m + self.s * rng.sample::<f64, _>(StandardNormal);
        }
        out
    }
}

fn ensemble_proposition() -> Verdict {
    let mut c = Checks::default();
    let laws = [(-1.0, 0.5), (0.3, 0.2), (1.5, 1.0)];
    let members: Vec<GaussShift> = laws.iter().map(|&(m, s)| GaussShift { m, s }).collect();
    let ens = EnsembleGenerator::new(members).unwrap();
    let n = 100_000;
    let x = Array2::zeros((n, 1));
    let mixture = ens.step_batch(x.view(), &mut [substream(60, Tag::Misc, &[])]).column(0).to_vec();
    let member_draws: Vec<Vec<f64>> = ens
        .members()
        .iter()
        .enumerate()
        .map(|(k, m)| m.step_batch(x.view(), &mut [substream(61, Tag::Misc, &[k as u64])]).column(0).to_vec())
        .collect();
    let edges: Vec<f64> = (0..=30).map(|i| -3.0 + 0.2 * i as f64).collect();
    let hm = Histogram::on_edges(&mixture, &edges);
    let hk: Vec<Histogram> = member_draws.iter().map(|d| Histogram::on_edges(d, &edges)).collect();
    let nf = n as f64;
    let mut worst_z: f64 = 0.0;
    for b in 0..hm.mass.len() {
        let avg = hk.iter().map(|h| h.mass[b]).sum::<f64>() / 3.0;
        let var_avg = hk.iter().map(|h| h.mass[b] * (1.0 - h.mass[b]) / nf).sum::<f64>() / 9.0;
        let var_mix = hm.mass[b] * (1.0 - hm.mass[b]) / nf;
        let se = (var_avg + var_mix).sqrt();
        if se > 0.0 {
            worst_z = worst_z.max((hm.mass[b] - avg).abs() / se);
        }
    }
    c.check(worst_z <= 4.0, format!("max bin z {worst_z:.2} over {} bins", hm.mass.len()));

    let x0 = [0.4];
    let strat = ensemble_cond_mean(&ens, &x0, 3 * n, 62)[0];
    let per_member: Vec<f64> = ens
        .members()
        .iter()
        .enumerate()
        .map(|(k, m)| cond_mean(m, &x0, n, &mut substream(63, Tag::Misc, &[k as u64]))[0])
        .collect();
    let avg = per_member.iter().sum::<f64>() / 3.0;
    let exact = x0[0] + laws.iter().map(|l| l.0).sum::<f64>() / 3.0;
    let se = (laws.iter().map(|l| l.1 * l.1 / nf).sum::<f64>()).sqrt() / 3.0;
    let z = (strat - avg) / (se * 2f64.sqrt());
    c.check(z.abs() <= 4.0, format!("stratified {strat:.5} vs member avg {avg:.5} (z {z:.2})"));
    c.check(((strat - exact) / se).abs() <= 4.0, format!("vs exact {exact:.5}"));
    c.verdict()
}

// ---------------------------------------------------------------- criterion 7

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Verdict {
    let mut c = Checks::default();
    let tmp = tempfile::tempdir().unwrap();
    for id in [SdeId::Ou1d, SdeId::Ou2d] {
        let mut cfg = ExperimentConfig::preset(id, Scale::Smoke, 11);
        cfg.gan.epochs = 4;
        let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| tmp.path().join(format!("{}-{r}", id.name()))).collect();
        for dir in &runs {
            run_stage(&cfg, dir, Stage::All, &RunOptions::default()).unwrap();
        }
        let files = files_under(&runs[0]);
        // Run manifests record wall time, everything else must match byte for byte.
        let compared: Vec<&PathBuf> = files.iter().filter(|f| !f.starts_with("manifests")).collect();
        let differing: Vec<String> = compared
            .iter()
            .filter(|f| std::fs::read(runs[0].join(f)).ok() != std::fs::read(runs[1].join(f)).ok())
            .map(|f| f.display().to_string())
            .collect();
        let kinds = ["dataset/states.bin", "models/m0/det.bin", "models/m0/stoch.bin", "sim/moments.csv", "diag/w1_probes.csv"];
        let covered = kinds.iter().all(|k| compared.iter().any(|f| f.ends_with(k)));
        c.check(
            covered && differing.is_empty() && files == files_under(&runs[1]),
            format!("{}: {} files identical{}", id.name(), compared.len(), if differing.is_empty() { String::new() } else { format!(", differ: {differing:?}") }),
        );
    }
    c.verdict()
}

// ---------------------------------------------------------------- criterion 8

fn small_data(n: usize, l: usize) -> TrajectoryDataset {
    let cfg = DatasetConfig {
        n_traj: n,
        window_len: l,
        ..DatasetConfig::preset(SdeId::Ou1d, 80)
    };
    generate_dataset(&SdeSpec::preset(SdeId::Ou1d), &cfg).unwrap()
}

fn structural_checks() -> Verdict {
    let mut c = Checks::default();
    let mut rng = substream(81, Tag::Misc, &[]);
    let det = DetSubMap::from_net(random_mlp(&[1, 6, 1], Activation::Tanh, &mut rng)).unwrap();
    let before = det.net().params().to_vec();
    for (n, b, epochs, n_ct) in [(120, 50, 7, 5), (100, 20, 3, 4), (90, 30, 5, 3)] {
        let data = small_data(n, 4);
        let cfg = GanConfig {
            recur_len: 4,
            batch_size: b,
            epochs,
            critic_iters: n_ct,
            gen_hidden: vec![6],
            critic_hidden: vec![6],
            ..GanConfig::preset(1, 82)
        };
        let out = train_gan(&data, &det, &cfg).unwrap();
        let total = epochs * (n / b);
        let frozen = out.model.det.net().params().iter().zip(&before).all(|(a, b)| a.to_bits() == b.to_bits());
        c.check(frozen, format!("mean map bit-identical (N={n}, B={b})"));
        c.check(
            out.generator_updates == total / n_ct,
            format!("{} generator updates for {total} batches, n_ct={n_ct}", out.generator_updates),
        );
    }

    let dim = 2;
    let real = Array2::from_shape_fn((8, dim * 4), |_| rng.random_range(-1.0..1.0));
    let mut fake = Array2::from_shape_fn((8, dim * 4), |_| rng.random_range(-1.0..1.0));
    fake.slice_mut(s![.., ..dim]).assign(&real.slice(s![.., ..dim]));
    let eps: Vec<f64> = (0..8).map(|_| rng.random()).collect();
    let u = interpolate(real.view(), fake.view(), &eps, dim);
    let untouched = u
        .slice(s![.., ..dim])
        .iter()
        .zip(real.slice(s![.., ..dim]))
        .all(|(a, b)| a.to_bits() == b.to_bits());
    c.check(untouched, "interpolation keeps x0");
    // A critic reading only x0 has input gradient (w0, 0, ...); the penalty sees it.
    let mut w = vec![0.0; dim * 4 + 1];
    w[0] = 3.0;
    let critic = Critic::from_net(Mlp::with_params(&[dim * 4, 1], Activation::CRITIC_DEFAULT, w).unwrap(), dim, 3).unwrap();
    let gp = gradient_penalty(&critic, real.view(), fake.view(), &eps);
    c.check((gp - 4.0).abs() < 1e-12, format!("penalty over full input {gp}"));
    let full_grad = critic_input_gradient_norms(&critic, u.view());
    c.check(full_grad.iter().all(|g| (g - 3.0).abs() < 1e-12), "input gradient spans x0");
    c.verdict()
}

fn critic_input_gradient_norms(critic: &Critic, u: ArrayView2<f64>) -> Vec<f64> {
    critic
        .net()
        .input_gradient(u)
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect()
}

// ---------------------------------------------------------------- driver

fn main() {
    let only: Option<Vec<usize>> = std::env::var("FLOWMAP_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "oracle suite", oracle_suite),
        (2, "differentiation suite", differentiation_suite),
        (3, "mean-map fit", mean_map_fit),
        (4, "end-to-end OU", end_to_end_ou),
        (5, "double-well qualitative", double_well),
        (6, "ensemble proposition", ensemble_proposition),
        (7, "reproducibility", reproducibility),
        (8, "training-loop structure", structural_checks),
    ];
    let mut tally = [0usize; 3];
    for (k, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (slot, tag, detail) = match verdict {
            Verdict::Pass(d) => (0, "PASS", d),
            Verdict::Fail(d) => (1, "FAIL", d),
            Verdict::Skipped(d) => (2, "SKIPPED", d),
        };
        tally[slot] += 1;
        println!("criterion {k} {tag} ({name}, {secs:.1} s): {detail}");
    }
    println!("acceptance: {} passed, {} failed, {} skipped", tally[0], tally[1], tally[2]);
    let strict = std::env::var("FLOWMAP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && tally[1] > 0 {
        std::process::exit(1);
    }
}
