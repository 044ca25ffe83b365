use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ibc_core::data::{
    compute_velocities, extract_episodes, generate_synthetic_session, load_session,
    split_folds, write_session, Episode, EpisodeConfig, FacilitatorType, FoldSpec,
    SessionRecording, SyntheticConfig,
};
use ibc_core::env::rollout;
use ibc_core::eval::{evaluate, write_plot_data, EvalConfig, MetricSet, MetricsReport, PolicyEvaluation};
use ibc_core::nn::{Checkpoint, FORMAT_VERSION};
use ibc_core::policy::{AnyPolicy, PolicyKind};
use ibc_core::rng::derive;
use ibc_core::train::{write_log, Trainer};

use crate::config::{DataSource, FoldSelection, RunConfig};
use crate::error::{io_err, CliError, CliResult};

pub const MANIFEST_HEADER: &str = "session_id,file,facilitator_type,scenario,seed";
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const SESSION_FORMAT_VERSION: u32 = 1;

fn validation(m: impl Into<String>) -> CliError {
    CliError::Validation(m.into())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Refuses to touch existing files unless `force` is set.
fn check_writable(paths: &[PathBuf], force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(validation(format!(
            "{} already exists (use --force to overwrite)",
            p.display()
        ))),
        None => Ok(()),
    }
}

/// Writes `run_manifest.txt` describing how the outputs in `dir` were made.
pub fn write_run_manifest(dir: &Path, cfg: &RunConfig, command: &str) -> CliResult<()> {
    let mut out = String::new();
    let _ = writeln!(out, "command = {command}");
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "config_sha256 = {}", cfg.hash());
    let _ = writeln!(out, "checkpoint_format = {FORMAT_VERSION}");
    let _ = writeln!(out, "report_format = {REPORT_FORMAT_VERSION}");
    let _ = writeln!(out, "session_format = {SESSION_FORMAT_VERSION}");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    out.push_str("\n# resolved configuration\n");
    out.push_str(&cfg.canonical());
    write_file(&dir.join(format!("run_manifest_{command}.txt")), &out)
}

fn session_id(i: usize) -> String {
    format!("session_{i:02}")
}

/// Writes synthetic sessions, `manifest.csv` and a two-fold `folds.csv` into
/// the data directory. A fold file named by `io.folds` is left alone.
pub fn gen_data(cfg: &RunConfig, force: bool) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.data.source != DataSource::Synthetic {
        return Err(validation("gen-data requires data.source = synthetic"));
    }
    let dir = &cfg.io.data_dir;
    let ids: Vec<String> = (0..cfg.data.sessions).map(session_id).collect();
    let files: Vec<PathBuf> = ids.iter().map(|id| dir.join(format!("{id}.csv"))).collect();
    let manifest = dir.join("manifest.csv");
    let folds = dir.join("folds.csv");
    let mut targets = files.clone();
    targets.extend([manifest.clone(), folds.clone()]);
    check_writable(&targets, force)?;

    let seed = cfg.data_seed();
    let mut sessions = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let facilitator_type = cfg.data.facilitator_types[i % cfg.data.facilitator_types.len()];
        let syn = SyntheticConfig {
            participants: cfg.data.participants,
            length: cfg.data.length,
            fps: cfg.data.fps,
            scenario: cfg.data.scenario,
            noise_std: cfg.data.noise_std,
            facilitator_type,
            ..SyntheticConfig::default()
        };
        sessions.push(generate_synthetic_session(id, &syn, &mut derive(seed, i as u64))?);
    }

    create_dir(dir)?;
    let mut listing = format!("{MANIFEST_HEADER}\n");
    for ((session, file), id) in sessions.iter().zip(&files).zip(&ids) {
        write_session(file, session)?;
        let name = file.file_name().expect("file name").to_string_lossy();
        let _ = writeln!(
            listing,
            "{id},{name},{},{},{seed}",
            session.facilitator_type.key(),
            cfg.data.scenario.key()
        );
    }
    write_file(&manifest, &listing)?;
    if let Some(parent) = folds.parent() {
        create_dir(parent)?;
    }
    write_file(&folds, &FoldSpec::two_fold(&ids).to_text())?;
    write_run_manifest(dir, cfg, "gen-data")?;
    Ok(files)
}

struct ManifestEntry {
    id: String,
    file: PathBuf,
    facilitator_type: FacilitatorType,
}

fn read_manifest(dir: &Path) -> CliResult<Vec<ManifestEntry>> {
    let path = dir.join("manifest.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(validation(format!(
            "{}:1: header must be '{MANIFEST_HEADER}'",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(validation(format!("{}:{}: expected 5 columns", path.display(), i + 2)));
        }
        let facilitator_type = f[2]
            .parse()
            .map_err(|e| validation(format!("{}:{}: {e}", path.display(), i + 2)))?;
        out.push(ManifestEntry {
            id: f[0].to_owned(),
            file: dir.join(f[1]),
            facilitator_type,
        });
    }
    Ok(out)
}

/// Sessions listed in `manifest.csv`, or every other CSV in the directory.
pub fn load_sessions(cfg: &RunConfig) -> CliResult<Vec<SessionRecording>> {
    let dir = &cfg.io.data_dir;
    if !dir.is_dir() {
        return Err(validation(format!("data directory {} not found", dir.display())));
    }
    let entries = if dir.join("manifest.csv").exists() {
        read_manifest(dir)?
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "csv")
                    && p.file_name().is_some_and(|n| n != "folds.csv")
            })
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|file| ManifestEntry {
                id: file.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                file,
                facilitator_type: FacilitatorType::Synthetic,
            })
            .collect()
    };
    if entries.is_empty() {
        return Err(validation(format!("no sessions in {}", dir.display())));
    }
    entries
        .into_iter()
        .map(|e| {
            let mut s = load_session(&e.file, cfg.data.participants)?;
            s.id = e.id;
            s.facilitator_type = e.facilitator_type;
            s.fps = cfg.data.fps;
            Ok(compute_velocities(s)?)
        })
        .collect()
}

fn episode_config(cfg: &RunConfig) -> EpisodeConfig {
    EpisodeConfig {
        length: cfg.data.episode_length,
        stride: cfg.data.stride,
        include_prev_action: cfg.data.include_prev_action,
    }
}

/// Train and test episodes of every fold, in fold order.
pub fn fold_episodes(cfg: &RunConfig) -> CliResult<Vec<(u32, Vec<Episode>, Vec<Episode>)>> {
    let sessions = load_sessions(cfg)?;
    let ids: Vec<String> = sessions.iter().map(|s| s.id.clone()).collect();
    let folds_path = cfg.folds_path();
    let spec = if folds_path.exists() {
        FoldSpec::load(&folds_path)?
    } else {
        FoldSpec::two_fold(&ids)
    };
    let ep_cfg = episode_config(cfg);
    let splits = split_folds(&sessions, &spec, |s| s.id.as_str())?;
    let mut out = Vec::new();
    for split in splits {
        let episodes = |set: &[&SessionRecording]| -> CliResult<Vec<Episode>> {
            let mut all = Vec::new();
            for s in set {
                all.extend(extract_episodes(s, &ep_cfg)?);
            }
            Ok(all)
        };
        out.push((split.fold, episodes(&split.train)?, episodes(&split.test)?));
    }
    Ok(out)
}

fn selected_folds(
    cfg: &RunConfig,
    all: Vec<(u32, Vec<Episode>, Vec<Episode>)>,
) -> CliResult<Vec<(u32, Vec<Episode>, Vec<Episode>)>> {
    match cfg.train.fold {
        FoldSelection::All => Ok(all),
        FoldSelection::One(f) => {
            let found: Vec<_> = all.into_iter().filter(|(k, _, _)| *k == f).collect();
            if found.is_empty() {
                Err(validation(format!("fold {f} is not defined")))
            } else {
                Ok(found)
            }
        }
    }
}

pub fn checkpoint_path(cfg: &RunConfig, fold: u32, kind: PolicyKind) -> PathBuf {
    cfg.io.run_dir.join(format!("fold{fold}_{}.ibck", kind.key()))
}

pub fn log_path(cfg: &RunConfig, fold: u32, kind: PolicyKind) -> PathBuf {
    cfg.io.run_dir.join(format!("fold{fold}_{}_log.csv", kind.key()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub fold: u32,
    pub kind: PolicyKind,
    pub train_sessions: usize,
    pub train_pairs: usize,
    pub final_loss: f64,
    pub skipped: usize,
}

/// Trains every configured policy on the selected folds.
pub fn train(cfg: &RunConfig, force: bool) -> CliResult<Vec<TrainSummary>> {
    cfg.validate()?;
    let folds = selected_folds(cfg, fold_episodes(cfg)?)?;
    let mut targets = Vec::new();
    for (fold, _, _) in &folds {
        for &kind in &cfg.train.policies {
            targets.push(checkpoint_path(cfg, *fold, kind));
            targets.push(log_path(cfg, *fold, kind));
        }
    }
    check_writable(&targets, force)?;
    for (fold, train, _) in &folds {
        if train.is_empty() {
            return Err(validation(format!("fold {fold} has no training episodes")));
        }
    }
    create_dir(&cfg.io.run_dir)?;
    write_run_manifest(&cfg.io.run_dir, cfg, "train")?;

    let mut summaries = Vec::new();
    for (fold, train_eps, test_eps) in &folds {
        let sessions: std::collections::BTreeSet<&str> =
            train_eps.iter().map(|e| e.session_id.as_str()).collect();
        for &kind in &cfg.train.policies {
            let tc = cfg.train_config(*fold, kind);
            log::info!(
                "training {kind} on fold {fold}: {} sessions, {} episodes",
                sessions.len(),
                train_eps.len()
            );
            let mut trainer = Trainer::new(kind, train_eps, test_eps, tc, cfg.env)?;
            let pairs: usize = train_eps.iter().map(|e| e.expert_actions.len()).sum();
            trainer.run()?;
            trainer.checkpoint().save(&checkpoint_path(cfg, *fold, kind))?;
            write_log(&log_path(cfg, *fold, kind), trainer.log())?;
            summaries.push(TrainSummary {
                fold: *fold,
                kind,
                train_sessions: sessions.len(),
                train_pairs: pairs,
                final_loss: trainer.log().last().map_or(f64::NAN, |r| r.loss),
                skipped: trainer.skipped(),
            });
        }
    }
    Ok(summaries)
}

/// Loads a checkpoint and checks it holds the expected policy kind.
pub fn load_policy(path: &Path, kind: PolicyKind, cfg: &RunConfig) -> CliResult<AnyPolicy> {
    if !path.exists() {
        return Err(validation(format!("checkpoint {} not found", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    if ck.kind != kind {
        return Err(validation(format!(
            "{} holds a {} policy, expected {kind}",
            path.display(),
            ck.kind
        )));
    }
    let mut policy = AnyPolicy::from_checkpoint(&ck)?;
    if let AnyPolicy::Ibc(p) = &mut policy {
        p.sampler = cfg.sampler(kind);
    }
    Ok(policy)
}

pub struct EvalOutput {
    pub report: MetricsReport,
    pub evaluations: Vec<PolicyEvaluation>,
    pub aborted: usize,
}

/// Evaluates every configured policy on its folds' test sessions and writes
/// `report.txt` and `report.csv` into the run directory.
pub fn eval(
    cfg: &RunConfig,
    overrides: &[(PolicyKind, PathBuf)],
    metrics: Option<MetricSet>,
    force: bool,
) -> CliResult<EvalOutput> {
    cfg.validate()?;
    let folds = selected_folds(cfg, fold_episodes(cfg)?)?;
    let run = &cfg.io.run_dir;
    let text_path = run.join("report.txt");
    let csv_path = run.join("report.csv");
    check_writable(&[text_path.clone(), csv_path.clone()], force)?;
    let mut policies = Vec::new();
    for &kind in &cfg.train.policies {
        for (fold, _, test) in &folds {
            if test.is_empty() {
                return Err(validation(format!("fold {fold} has no test episodes")));
            }
            let path = overrides
                .iter()
                .find(|(k, _)| *k == kind)
                .map_or_else(|| checkpoint_path(cfg, *fold, kind), |(_, p)| p.clone());
            policies.push((kind, *fold, load_policy(&path, kind, cfg)?));
        }
    }
    create_dir(run)?;

    let mut evaluations: Vec<PolicyEvaluation> = Vec::new();
    for (kind, fold, policy) in &policies {
        let (_, _, test) = folds.iter().find(|(f, _, _)| f == fold).expect("fold exists");
        let ec = EvalConfig {
            sparc: cfg.eval.sparc,
            seed: ibc_core::rng::mix(cfg.seed, *fold as u64),
            jobs: cfg.jobs,
        };
        let ev = evaluate(policy, *kind, test, &cfg.env, &ec)?;
        match evaluations.iter_mut().find(|e| e.kind == *kind) {
            Some(existing) => existing.episodes.extend(ev.episodes),
            None => evaluations.push(ev),
        }
    }
    let set = metrics.unwrap_or(cfg.eval.metrics);
    let report = MetricsReport::aggregate(&evaluations).filtered(set);
    let mut text = report.render_text();
    for ev in &evaluations {
        let _ = writeln!(
            text,
            "\n{}: {} episodes, {} aborted, {} without R², {} without SPARC, {} no-motion, {} shorter than {} steps",
            ev.kind.label(),
            ev.episodes.len(),
            ev.aborted(),
            ev.r2_excluded(),
            ev.sparc_excluded(),
            ev.no_motion(),
            ev.short_alignment(),
            ibc_core::eval::SHORT_ALIGNMENT
        );
    }
    write_file(&text_path, &text)?;
    write_file(&csv_path, &report.to_csv())?;
    if cfg.eval.plot_data {
        write_plot_data(&run.join("plot_data"), &evaluations)?;
    }
    write_run_manifest(run, cfg, "eval")?;
    let aborted = evaluations.iter().map(|e| e.aborted()).sum();
    Ok(EvalOutput {
        report,
        evaluations,
        aborted,
    })
}

/// Rolls one episode out and returns the trajectory CSV.
pub fn rollout_one(
    cfg: &RunConfig,
    checkpoint: &Path,
    session: &str,
    start_frame: usize,
) -> CliResult<String> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut policy = AnyPolicy::from_checkpoint(&ck)?;
    if let AnyPolicy::Ibc(p) = &mut policy {
        p.sampler = cfg.sampler(PolicyKind::Ibc);
    }
    let sessions = load_sessions(cfg)?;
    let s = sessions
        .iter()
        .find(|s| s.id == session)
        .ok_or_else(|| validation(format!("unknown session '{session}'")))?;
    let episodes = extract_episodes(s, &episode_config(cfg))?;
    let ep = episodes
        .iter()
        .find(|e| e.start_frame == start_frame)
        .ok_or_else(|| validation(format!("no episode starts at frame {start_frame}")))?;
    let t = rollout(&policy, ep, &cfg.env, &mut derive(cfg.seed, start_frame as u64))?;
    if let Some(reason) = &t.aborted {
        return Err(CliError::Runtime(format!("rollout aborted: {reason}")));
    }
    Ok(t.to_csv())
}

/// Re-renders a report CSV as text tables.
pub fn report(input: &Path, metrics: Option<MetricSet>) -> CliResult<String> {
    if !input.exists() {
        return Err(validation(format!("{} not found", input.display())));
    }
    let report = MetricsReport::load_csv(input)?;
    Ok(match metrics {
        Some(set) => report.filtered(set).render_text(),
        None => report.render_text(),
    })
}
