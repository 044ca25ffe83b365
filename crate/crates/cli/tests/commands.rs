use std::path::{Path, PathBuf};
use std::process::Command;

use ibc_cli::commands::{self, checkpoint_path};
use ibc_cli::{CliError, RunConfig};
use ibc_core::data::{ActionBounds, GazeVector, Observation};
use ibc_core::eval::{Column, MetricSet, MetricsReport, RowGroup};
use ibc_core::nn::{Activation, Checkpoint, Mlp, MlpConfig, NormalizationStats};
use ibc_core::policy::{MsePolicy, PolicyKind};
use tempfile::TempDir;

const SMALL: &str = "\
data.sessions = 7
data.length = 300
train.steps = 20
train.batch_size = 16
train.hidden_dims = 16
train.eval_every = 0
langevin.n_samples = 8
langevin.n_mcmc = 3
infer.n_mcmc = 5
";

fn config(root: &Path, extra: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(&format!("{SMALL}{extra}"), Path::new("test.ini")).unwrap();
    cfg.io.data_dir = root.join("data");
    cfg.io.run_dir = root.join("run");
    cfg
}

fn write_config(root: &Path, extra: &str) -> PathBuf {
    let path = root.join("run.ini");
    let text = format!(
        "{SMALL}{extra}io.data_dir = {}\nio.run_dir = {}\n",
        root.join("data").display(),
        root.join("run").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ibc-gaze")).args(args).output().unwrap()
}

fn session_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("session_"))
        .collect();
    files.sort();
    files
}

#[test]
fn gen_data_writes_sessions_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "");
    let files = commands::gen_data(&cfg, false).unwrap();
    assert_eq!(files.len(), 7);
    assert_eq!(session_files(&cfg.io.data_dir), files);
    let manifest = std::fs::read_to_string(cfg.io.data_dir.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 8);
    assert_eq!(manifest.lines().next().unwrap(), commands::MANIFEST_HEADER);
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == 13));
        assert_eq!(text.lines().count(), 301);
    }
}

#[test]
fn gen_data_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (ca, cb) = (config(a.path(), ""), config(b.path(), ""));
    commands::gen_data(&ca, false).unwrap();
    commands::gen_data(&cb, false).unwrap();
    for (x, y) in session_files(&ca.io.data_dir).iter().zip(session_files(&cb.io.data_dir)) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(&y).unwrap());
    }
    let mut other = config(TempDir::new().unwrap().path(), "");
    other.seed = 1;
    let files = commands::gen_data(&other, false).unwrap();
    assert_ne!(
        std::fs::read(&files[0]).unwrap(),
        std::fs::read(&session_files(&ca.io.data_dir)[0]).unwrap()
    );
}

#[test]
fn gen_data_refuses_to_overwrite() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "");
    commands::gen_data(&cfg, false).unwrap();
    assert!(matches!(commands::gen_data(&cfg, false), Err(CliError::Validation(_))));
    commands::gen_data(&cfg, true).unwrap();
}

#[test]
fn gen_data_leaves_named_fold_file_alone() {
    let tmp = TempDir::new().unwrap();
    let folds = tmp.path().join("my_folds.csv");
    let text = "fold,role,session_id\n1,train,session_00\n1,test,session_01\n";
    std::fs::write(&folds, text).unwrap();
    let mut cfg = config(tmp.path(), "");
    cfg.io.folds = Some(folds.clone());
    commands::gen_data(&cfg, true).unwrap();
    assert_eq!(std::fs::read_to_string(&folds).unwrap(), text);
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = config(tmp.path(), "");
    cfg.data.participants = 0;
    assert!(commands::gen_data(&cfg, false).is_err());
    assert!(!cfg.io.data_dir.exists());
}

#[test]
fn train_and_eval_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "");
    commands::gen_data(&cfg, false).unwrap();
    let summaries = commands::train(&cfg, false).unwrap();
    assert_eq!(summaries.len(), 2);
    for s in &summaries {
        assert_eq!((s.fold, s.train_sessions), (1, 4));
        assert!(s.final_loss.is_finite());
        assert!(checkpoint_path(&cfg, 1, s.kind).exists());
    }
    assert!(matches!(commands::train(&cfg, false), Err(CliError::Validation(_))));

    let again = commands::train(&cfg, true).unwrap();
    for (a, b) in summaries.iter().zip(&again) {
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
    }

    let out = commands::eval(&cfg, &[], None, false).unwrap();
    assert_eq!(out.aborted, 0);
    let text = out.report.render_text();
    assert!(text.lines().next().unwrap().contains("Implicit BC"));
    assert!(text.lines().next().unwrap().contains("Explicit BC"));
    for kind in PolicyKind::ALL {
        assert!(out.report.get(RowGroup::Average, Column::Policy(kind)).is_some());
    }
    let csv = std::fs::read_to_string(cfg.io.run_dir.join("report.csv")).unwrap();
    assert_eq!(csv, out.report.to_csv());
    assert!(cfg.io.run_dir.join("run_manifest_eval.txt").exists());

    let asm_only = "asm".parse::<MetricSet>().unwrap();
    let out = commands::eval(&cfg, &[], Some(asm_only), true).unwrap();
    assert!(out.report.rows.iter().all(|r| r.asm.is_some()
        && r.r2_pitch.is_none()
        && r.r2_yaw.is_none()
        && r.sparc_pitch.is_none()
        && r.sparc_yaw.is_none()));
    let text = std::fs::read_to_string(cfg.io.run_dir.join("report.txt")).unwrap();
    assert!(text.starts_with("Average success metric"));
    assert!(!text.lines().any(|l| l.starts_with("SPARC") || l.starts_with("R²")));

    let rendered = commands::report(&cfg.io.run_dir.join("report.csv"), None).unwrap();
    assert_eq!(rendered, MetricsReport::load_csv(&cfg.io.run_dir.join("report.csv")).unwrap().render_text());
}

#[test]
fn regression_checkpoint_evaluates_alone() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "train.policy = mse\n");
    commands::gen_data(&cfg, false).unwrap();
    commands::train(&cfg, false).unwrap();
    assert!(!checkpoint_path(&cfg, 1, PolicyKind::Ibc).exists());
    let ck = Checkpoint::load(&checkpoint_path(&cfg, 1, PolicyKind::Mse)).unwrap();
    assert_eq!(ck.kind, PolicyKind::Mse);
    let out = commands::eval(&cfg, &[], None, false).unwrap();
    assert_eq!(out.report.columns(), vec![Column::Policy(PolicyKind::Mse)]);
}

/// A regression model whose output is `inf - inf`.
fn nan_checkpoint(participants: usize) -> Checkpoint {
    let dim = Observation::dim(participants, false);
    let cfg = MlpConfig {
        hidden_dims: vec![2, 2],
        activation: Activation::Relu,
        dropout_rate: 0.0,
        ..MlpConfig::new(dim, 2)
    };
    let mut mlp = Mlp::new(cfg, &mut ibc_core::rng::seeded(0)).unwrap();
    for l in &mut mlp.params.layers {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    mlp.params.layers[0].bias.fill(1e308);
    mlp.params.layers[1].weights[[0, 0]] = 10.0;
    mlp.params.layers[1].weights[[1, 1]] = 10.0;
    mlp.params.layers[2].weights[[0, 0]] = 1.0;
    mlp.params.layers[2].weights[[0, 1]] = -1.0;
    let bounds = ActionBounds::new(GazeVector::new(-0.1, -0.1), GazeVector::new(0.1, 0.1)).unwrap();
    MsePolicy::from_parts(mlp, NormalizationStats::identity(dim, 2), bounds, participants, false)
        .unwrap()
        .to_checkpoint()
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let ini = write_config(tmp.path(), "train.policy = mse\n");
    let ini = ini.to_str().unwrap();

    let missing = cli(&["--config", "/nonexistent/run.ini", "gen-data"]);
    assert_eq!(missing.status.code(), Some(3));
    let bad = cli(&["--config", ini, "--set", "train.steps=zero", "gen-data"]);
    assert_eq!(bad.status.code(), Some(1));

    assert!(cli(&["--config", ini, "gen-data"]).status.success());
    assert_eq!(cli(&["--config", ini, "gen-data"]).status.code(), Some(1));
    assert!(cli(&["--config", ini, "train"]).status.success());
    let mse = checkpoint_path(&config(tmp.path(), ""), 1, PolicyKind::Mse);

    let mismatch = cli(&[
        "--config",
        ini,
        "--set",
        "train.policy=ibc",
        "eval",
        "--ibc-checkpoint",
        mse.to_str().unwrap(),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("expected ibc"));

    let broken = tmp.path().join("broken.ibck");
    nan_checkpoint(5).save(&broken).unwrap();
    let aborted = cli(&["--config", ini, "eval", "--mse-checkpoint", broken.to_str().unwrap()]);
    assert_eq!(aborted.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&aborted.stderr).contains("aborted"));

    let ok = cli(&["--config", ini, "--force", "eval", "--metrics", "asm"]);
    assert!(ok.status.success());
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("Explicit BC") && !stdout.contains("SPARC"));

    let dump = cli(&[
        "--config",
        ini,
        "rollout",
        "--checkpoint",
        mse.to_str().unwrap(),
        "--session",
        "session_04",
    ]);
    assert!(dump.status.success());
    assert!(String::from_utf8_lossy(&dump.stdout).starts_with("step,gaze_yaw"));
}
