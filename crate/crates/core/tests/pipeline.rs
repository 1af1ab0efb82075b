use std::fs;

use flowmap_core::diagnostics::tables::read_csv;
use flowmap_core::experiment::{build_report, run_stage, stage_complete, ExperimentConfig, RunOptions, Scale, Stage};
use flowmap_core::testbed::{SdeId, TrajectoryDataset};
use flowmap_core::Error;

#[test]
fn generate_on_ou_defaults_writes_full_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Desk, 0);
    let written = run_stage(&cfg, tmp.path(), Stage::Generate, &RunOptions::default()).unwrap();
    assert!(written.iter().any(|p| p.ends_with("dataset/dataset.toml")));
    let ds = TrajectoryDataset::load(&tmp.path().join("dataset")).unwrap();
    assert_eq!((ds.n_traj(), ds.window_len(), ds.dim()), (10_000, 40, 1));
    assert!(stage_complete(&cfg, tmp.path(), Stage::Generate));
    assert!(!stage_complete(&cfg, tmp.path(), Stage::TrainDet));
}

#[test]
fn stages_need_their_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Smoke, 0);
    let opts = RunOptions::default();
    for (stage, file, producer) in [
        (Stage::TrainDet, "dataset.toml", "generate"),
        (Stage::Simulate, "ensemble.toml", "train-gan"),
        (Stage::Diagnose, "ensemble.toml", "train-gan"),
    ] {
        match run_stage(&cfg, tmp.path(), stage, &opts) {
            Err(Error::MissingArtifact { path, stage }) => {
                assert!(path.ends_with(file), "{}", path.display());
                assert_eq!(stage, producer);
            }
            other => panic!("{other:?}"),
        }
    }
    run_stage(&cfg, tmp.path(), Stage::Generate, &opts).unwrap();
    assert!(matches!(
        run_stage(&cfg, tmp.path(), Stage::TrainGan, &opts),
        Err(Error::MissingArtifact { stage: "train-det", .. })
    ));
}

#[test]
fn all_with_two_members_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset(SdeId::Ou2d, Scale::Smoke, 4);
    cfg.ensemble_size = 2;
    cfg.diagnostics.probes.push(vec![0.5, -0.5]);
    run_stage(&cfg, tmp.path(), Stage::All, &RunOptions::default()).unwrap();
    let m0 = fs::read(tmp.path().join("models/m0/stoch.bin")).unwrap();
    let m1 = fs::read(tmp.path().join("models/m1/stoch.bin")).unwrap();
    assert_ne!(m0, m1, "members use distinct seeds");
    // One row per probe and component.
    let (_, rows) = read_csv(&tmp.path().join("diag/w1_probes.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 2);
    for f in ["sim/spectrum_c1.csv", "diag/cond_joint_p1.csv", "report/index.md", "report/summary.toml"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let index = fs::read_to_string(tmp.path().join("report/index.md")).unwrap();
    assert!(index.contains("| m1 |") && !index.contains("Gaps"));
    // Planar systems get no drift table.
    assert!(!tmp.path().join("diag/drift_diffusion.csv").exists());
}

#[test]
fn report_lists_missing_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Smoke, 0);
    run_stage(&cfg, tmp.path(), Stage::All, &RunOptions::default()).unwrap();
    fs::remove_file(tmp.path().join("diag/w1_probes.csv")).unwrap();
    fs::remove_file(tmp.path().join("models/m0/critic_loss.csv")).unwrap();
    build_report(&cfg, tmp.path()).unwrap();
    let index = fs::read_to_string(tmp.path().join("report/index.md")).unwrap();
    assert!(index.contains("not available: `diag/w1_probes.csv`"));
    assert!(index.contains("not available: `models/m0/critic_loss.csv`"));
    assert!(index.contains("drift: sup|a_learned - a_ref|"));
}

#[test]
fn resume_skips_intact_stages_and_reruns_damaged_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Smoke, 2);
    let opts = RunOptions {
        resume: true,
        ..RunOptions::default()
    };
    run_stage(&cfg, tmp.path(), Stage::All, &opts).unwrap();
    let again = run_stage(&cfg, tmp.path(), Stage::All, &opts).unwrap();
    assert!(again.iter().all(|p| p.starts_with(tmp.path().join("report"))), "{again:?}");
    fs::write(tmp.path().join("models/m0/det.bin"), b"garbage").unwrap();
    assert!(!stage_complete(&cfg, tmp.path(), Stage::TrainDet));
    let redo = run_stage(&cfg, tmp.path(), Stage::All, &opts).unwrap();
    assert!(redo.iter().any(|p| p.ends_with("models/m0/det.bin")));
}

#[test]
fn changed_config_is_refused_without_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::preset(SdeId::Ou1d, Scale::Smoke, 0);
    run_stage(&cfg, tmp.path(), Stage::Generate, &RunOptions::default()).unwrap();
    let other = cfg.clone().with_seed(1);
    assert!(matches!(
        run_stage(&other, tmp.path(), Stage::Generate, &RunOptions::default()),
        Err(Error::Config(_))
    ));
    let forced = RunOptions {
        override_hash: true,
        ..RunOptions::default()
    };
    run_stage(&other, tmp.path(), Stage::Generate, &forced).unwrap();
    assert!(stage_complete(&other, tmp.path(), Stage::Generate));
}
