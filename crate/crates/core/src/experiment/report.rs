use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::pipeline::member_dir;
use crate::blob;
use crate::diagnostics::tables::read_csv;
use crate::Result;

/// Headline numbers, also written as `report/summary.toml`.
pub type Summary = BTreeMap<String, f64>;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Option<Table> {
        read_csv(path).ok().map(|(header, rows)| Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

fn sup_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    sup_abs(a.iter().zip(b).map(|(x, y)| x - y))
}

fn last_finite(v: &[f64]) -> Option<f64> {
    v.iter().rev().copied().find(|x| x.is_finite())
}

/// Collects stage outputs into `report/index.md`; absent inputs are listed as gaps.
pub fn build_report(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let d = cfg.sde.dim();
    let mut md = String::new();
    let mut gaps = Vec::new();
    let mut summary = Summary::new();
    let _ = writeln!(md, "# {}\n", cfg.name);
    let _ = writeln!(md, "- system: `{}` (d = {d})", cfg.sde.id().name());
    let _ = writeln!(md, "- config sha256: `{}`", cfg.hash());
    let _ = writeln!(md, "- seed: {}", cfg.seed);
    let _ = writeln!(
        md,
        "- data: {} trajectories of {} states, lag {}",
        cfg.dataset.n_traj, cfg.dataset.window_len, cfg.dataset.lag
    );
    let _ = writeln!(md, "- ensemble size: {}\n", cfg.ensemble_size);

    let _ = writeln!(md, "## Training\n");
    let _ = writeln!(md, "| member | final mean-map loss | final critic loss | final generator loss |");
    let _ = writeln!(md, "|---|---|---|---|");
    for i in 0..cfg.ensemble_size {
        let dir = member_dir(out, i);
        let mut cell = |file: &str, col: &str, key: &str| match Table::read(&dir.join(file))
            .and_then(|t| t.col(col))
            .and_then(|c| last_finite(&c))
        {
            Some(v) => {
                summary.insert(format!("m{i}.{key}"), v);
                format!("{v:.4e}")
            }
            None => {
                gaps.push(format!("models/m{i}/{file}"));
                "n/a".into()
            }
        };
        let det = cell("det_loss.csv", "loss", "det_loss");
        let critic = cell("critic_loss.csv", "critic_loss", "critic_loss");
        let gen = cell("generator_loss.csv", "generator_loss", "generator_loss");
        let _ = writeln!(md, "| m{i} | {det} | {critic} | {gen} |");
    }

    let _ = writeln!(md, "\n## Trajectory statistics\n");
    match Table::read(&out.join("sim/moments.csv")) {
        Some(t) => {
            let _ = writeln!(md, "Sup over recorded times of the learned-minus-reference gap:\n");
            let _ = writeln!(md, "| component | reference | mean gap | std gap |");
            let _ = writeln!(md, "|---|---|---|---|");
            for k in 0..d {
                for reference in ["true", "exact"] {
                    let cols = (
                        t.col(&format!("mean_learned_{k}")),
                        t.col(&format!("std_learned_{k}")),
                        t.col(&format!("mean_{reference}_{k}")),
                        t.col(&format!("std_{reference}_{k}")),
                    );
                    if let (Some(ml), Some(sl), Some(mr), Some(sr)) = cols {
                        let (gm, gs) = (sup_diff(&ml, &mr), sup_diff(&sl, &sr));
                        summary.insert(format!("moments.{reference}.mean_gap_{k}"), gm);
                        summary.insert(format!("moments.{reference}.std_gap_{k}"), gs);
                        let _ = writeln!(md, "| {k} | {reference} | {gm:.4e} | {gs:.4e} |");
                    }
                }
            }
        }
        None => gaps.push("sim/moments.csv".into()),
    }
    match Table::read(&out.join("sim/w1_marginals.csv")) {
        Some(t) => {
            let _ = writeln!(md, "\nW1 between learned and true marginals:\n");
            let _ = writeln!(md, "| t | component | W1 |");
            let _ = writeln!(md, "|---|---|---|");
            for r in &t.rows {
                let _ = writeln!(md, "| {} | {} | {:.4e} |", r[0], r[1], r[2]);
                summary.insert(format!("w1_marginal.t{}.c{}", r[0], r[1]), r[2]);
            }
        }
        None => gaps.push("sim/w1_marginals.csv".into()),
    }
    for k in 0..d {
        let file = format!("sim/spectrum_c{k}.csv");
        match Table::read(&out.join(&file)) {
            Some(t) => {
                let (l, r) = (t.col("eig_learned").unwrap_or_default(), t.col("eig_true").unwrap_or_default());
                let _ = writeln!(md, "\nLeading covariance eigenvalues, component {k} (learned / true):\n");
                for i in 0..l.len().min(5) {
                    let _ = writeln!(md, "- {:.4e} / {:.4e}", l[i], r[i]);
                }
            }
            None => gaps.push(file),
        }
    }

    let _ = writeln!(md, "\n## One-step diagnostics\n");
    if cfg.drift_grid().is_some() {
        match Table::read(&out.join("diag/drift_diffusion.csv")) {
            Some(t) => {
                let get = |c: &str| t.col(c).unwrap_or_default();
                let (al, ar, bl, br) = (get("a_learned"), get("a_ref"), get("b_learned"), get("b_ref"));
                let ea = sup_diff(&al, &ar) / sup_abs(ar.iter().copied());
                let eb = sup_diff(&bl, &br) / sup_abs(br.iter().copied());
                summary.insert("drift.rel_err".into(), ea);
                summary.insert("diffusion.rel_err".into(), eb);
                let _ = writeln!(md, "- drift: sup|a_learned - a_ref| / sup|a_ref| = {ea:.4}");
                let _ = writeln!(md, "- diffusion: sup|b_learned - b_ref| / sup|b_ref| = {eb:.4}");
            }
            None => gaps.push("diag/drift_diffusion.csv".into()),
        }
    }
    match Table::read(&out.join("diag/w1_probes.csv")) {
        Some(t) => {
            let _ = writeln!(md, "\n| probe | component | W1 | mean learned | mean true | std learned | std true |");
            let _ = writeln!(md, "|---|---|---|---|---|---|---|");
            for r in &t.rows {
                let tail = &r[1 + d..];
                let _ = writeln!(
                    md,
                    "| {:?} | {} | {:.4e} | {:.4} | {:.4} | {:.4} | {:.4} |",
                    &r[1..1 + d],
                    tail[0],
                    tail[1],
                    tail[2],
                    tail[3],
                    tail[4],
                    tail[5]
                );
                summary.insert(format!("w1_probe.p{}.c{}", r[0], tail[0]), tail[1]);
            }
        }
        None => gaps.push("diag/w1_probes.csv".into()),
    }

    if !gaps.is_empty() {
        let _ = writeln!(md, "\n## Gaps\n");
        for g in &gaps {
            let _ = writeln!(md, "- not available: `{g}`");
        }
    }
    let dir = out.join("report");
    let index = dir.join("index.md");
    blob::write_bytes(&index, md.as_bytes())?;
    let sum = dir.join("summary.toml");
    blob::write_toml(&sum, &summary)?;
    Ok(vec![index, sum])
}
