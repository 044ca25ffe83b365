//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` or `;` are comments. Every key has a default, so
//! an empty file is valid. Unknown keys are rejected.
//!
//! `train.*` and `langevin.*` keys may be prefixed with a policy (`ibc.` or
//! `mse.`) to apply to that policy only. `infer.*` keys replace sampler
//! settings at evaluation and rollout time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ibc_core::data::{FacilitatorType, Scenario};
use ibc_core::env::EnvConfig;
use ibc_core::eval::{MetricSet, SparcConfig};
use ibc_core::nn::Activation;
use ibc_core::policy::{LangevinConfig, PolicyKind};
use ibc_core::train::TrainConfig;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSelection {
    One(u32),
    All,
}

impl FromStr for FoldSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FoldSelection::All);
        }
        s.parse::<u32>()
            .ok()
            .filter(|&f| f >= 1)
            .map(FoldSelection::One)
            .ok_or_else(|| format!("expected a fold number >= 1 or 'all', got '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    pub participants: usize,
    pub sessions: usize,
    pub scenario: Scenario,
    pub length: usize,
    pub fps: f64,
    pub noise_std: f64,
    /// Cycled over generated sessions.
    pub facilitator_types: Vec<FacilitatorType>,
    pub episode_length: usize,
    pub stride: usize,
    pub include_prev_action: bool,
    /// Overrides the run seed for data generation.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub policies: Vec<PolicyKind>,
    pub fold: FoldSelection,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub sparc: SparcConfig,
    pub metrics: MetricSet,
    pub plot_data: bool,
}

/// Sampler settings used at evaluation time; `None` keeps the training value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InferSection {
    pub n_samples: Option<usize>,
    pub n_mcmc: Option<usize>,
    pub noise_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoSection {
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
    /// Defaults to `folds.csv` inside the data directory.
    pub folds: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub data: DataSection,
    pub train: TrainSection,
    pub env: EnvConfig,
    pub eval: EvalSection,
    pub infer: InferSection,
    pub io: IoSection,
    /// Policy-scoped `(policy, key, value)` settings, applied over the shared ones.
    pub scoped: Vec<(PolicyKind, String, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            data: DataSection {
                source: DataSource::Synthetic,
                participants: 5,
                sessions: 7,
                scenario: Scenario::AttendSpeaker,
                length: 3000,
                fps: 30.0,
                noise_std: 0.002,
                facilitator_types: vec![FacilitatorType::Synthetic],
                episode_length: 50,
                stride: 50,
                include_prev_action: false,
                seed: None,
            },
            train: TrainSection {
                policies: vec![PolicyKind::Ibc, PolicyKind::Mse],
                fold: FoldSelection::One(1),
                config: TrainConfig::default(),
            },
            env: EnvConfig::default(),
            eval: EvalSection {
                sparc: SparcConfig::default(),
                metrics: MetricSet::ALL,
                plot_data: false,
            },
            infer: InferSection::default(),
            io: IoSection {
                data_dir: PathBuf::from("data"),
                run_dir: PathBuf::from("run"),
                folds: None,
            },
            scoped: Vec::new(),
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{key}: {e}"))
}

fn boolean(key: &str, v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got '{v}'")),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num::<T>(key, s))
        .collect::<Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err(format!("{key}: empty list"));
    }
    Ok(items)
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if v.is_empty() {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn show<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one `section.key`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        if let Some((prefix, rest)) = key.trim().split_once('.') {
            if let Ok(kind) = prefix.parse::<PolicyKind>() {
                return self.set_scoped(kind, rest, v);
            }
        }
        let d = &mut self.data;
        let t = &mut self.train.config;
        let l = &mut t.langevin;
        let e = &mut self.env;
        let s = &mut self.eval.sparc;
        match key.trim() {
            "run.seed" => self.seed = num(key, v)?,
            "run.jobs" => self.jobs = num(key, v)?,
            "data.source" => {
                d.source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "files" => DataSource::Files,
                    _ => return Err(format!("{key}: expected synthetic or files")),
                }
            }
            "data.participants" => d.participants = num(key, v)?,
            "data.sessions" => d.sessions = num(key, v)?,
            "data.scenario" => d.scenario = v.parse().map_err(|e| format!("{key}: {e}"))?,
            "data.length" => d.length = num(key, v)?,
            "data.fps" => d.fps = num(key, v)?,
            "data.noise_std" => d.noise_std = num(key, v)?,
            "data.facilitator_types" => {
                d.facilitator_types = list::<FacilitatorType>(key, v)?
            }
            "data.episode_length" => d.episode_length = num(key, v)?,
            "data.stride" => d.stride = num(key, v)?,
            "data.include_prev_action" => d.include_prev_action = boolean(key, v)?,
            "data.seed" => d.seed = Some(num(key, v)?),
            "train.policy" => {
                self.train.policies = if v == "both" {
                    vec![PolicyKind::Ibc, PolicyKind::Mse]
                } else {
                    list::<PolicyKind>(key, v)?
                }
            }
            "train.fold" => self.train.fold = num(key, v)?,
            "train.batch_size" => t.batch_size = num(key, v)?,
            "train.steps" => t.steps = num(key, v)?,
            "train.learning_rate" => t.adam.learning_rate = num(key, v)?,
            "train.beta1" => t.adam.beta1 = num(key, v)?,
            "train.beta2" => t.adam.beta2 = num(key, v)?,
            "train.epsilon" => t.adam.epsilon = num(key, v)?,
            "train.hidden_dims" => t.hidden_dims = list(key, v)?,
            "train.activation" => t.activation = num::<Activation>(key, v)?,
            "train.dropout_rate" => t.dropout_rate = num(key, v)?,
            "train.eval_every" => t.eval_every = num(key, v)?,
            "train.heldout_episodes" => t.heldout_episodes = num(key, v)?,
            "train.checkpoint_dir" => {
                t.checkpoint_dir = (!v.is_empty()).then(|| PathBuf::from(v))
            }
            "langevin.n_mcmc" => l.n_mcmc = num(key, v)?,
            "langevin.n_samples" => l.n_samples = num(key, v)?,
            "langevin.eta_init" => l.eta_init = num(key, v)?,
            "langevin.eta_final" => l.eta_final = num(key, v)?,
            "langevin.decay" => l.decay = num(key, v)?,
            "langevin.noise_scale" => l.noise_scale = num(key, v)?,
            "langevin.grad_clip" => l.grad_clip = num(key, v)?,
            "infer.n_samples" => self.infer.n_samples = optional(key, v)?,
            "infer.n_mcmc" => self.infer.n_mcmc = optional(key, v)?,
            "infer.noise_scale" => self.infer.noise_scale = optional(key, v)?,
            "env.dt" => e.dt = num(key, v)?,
            "env.kp" => e.kp = num(key, v)?,
            "env.kd" => e.kd = num(key, v)?,
            "env.max_steps" => e.max_steps = num(key, v)?,
            "env.success_threshold" => e.success_threshold = num(key, v)?,
            "env.action_limit" => e.action_limit = num(key, v)?,
            "eval.sample_rate" => s.sample_rate = num(key, v)?,
            "eval.padding_factor" => s.padding_factor = num(key, v)?,
            "eval.cutoff_freq" => s.cutoff_freq = num(key, v)?,
            "eval.amplitude_threshold" => s.amplitude_threshold = num(key, v)?,
            "eval.metrics" => self.eval.metrics = num(key, v)?,
            "eval.plot_data" => self.eval.plot_data = boolean(key, v)?,
            "io.data_dir" => self.io.data_dir = PathBuf::from(v),
            "io.run_dir" => self.io.run_dir = PathBuf::from(v),
            "io.folds" => self.io.folds = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    fn set_scoped(&mut self, kind: PolicyKind, key: &str, v: &str) -> Result<(), String> {
        let allowed = (key.starts_with("train.") || key.starts_with("langevin."))
            && !matches!(key, "train.policy" | "train.fold");
        if !allowed {
            return Err(format!(
                "{kind}.{key}: only train.* and langevin.* keys can be policy-scoped"
            ));
        }
        RunConfig::default().set(key, v)?;
        self.scoped.retain(|(k, name, _)| !(*k == kind && name == key));
        self.scoped.push((kind, key.to_owned(), v.to_owned()));
        self.scoped.sort();
        Ok(())
    }

    /// Applies every `section.key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "{}:{}: expected 'section.key = value'",
                    origin.display(),
                    i + 1
                ))
            })?;
            self.set(key, value).map_err(|m| {
                CliError::Validation(format!("{}:{}: {m}", origin.display(), i + 1))
            })?;
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("--set expects section.key=value, got '{assignment}'"))
        })?;
        self.set(key, value)
            .map_err(|m| CliError::Validation(format!("--set: {m}")))
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.seed)
    }

    pub fn folds_path(&self) -> PathBuf {
        self.io
            .folds
            .clone()
            .unwrap_or_else(|| self.io.data_dir.join("folds.csv"))
    }

    /// Checks every value; paths are checked by the commands that use them.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        let d = &self.data;
        if d.participants == 0 {
            return bad("data.participants must be >= 1".into());
        }
        if d.sessions < 2 {
            return bad("data.sessions must be >= 2 for a train/test split".into());
        }
        if d.episode_length < 2 || d.stride == 0 {
            return bad("data.episode_length must be >= 2 and data.stride >= 1".into());
        }
        if d.length < d.episode_length {
            return bad("data.length is shorter than one episode".into());
        }
        if !(d.fps > 0.0) || !(d.noise_std >= 0.0) {
            return bad("data.fps must be positive and data.noise_std non-negative".into());
        }
        for kind in PolicyKind::ALL {
            self.train_config(1, kind).validate()?;
        }
        let bad_infer = self.infer.n_samples == Some(0)
            || self.infer.n_mcmc == Some(0)
            || self.infer.noise_scale.is_some_and(|x| !(x >= 0.0 && x.is_finite()));
        if bad_infer {
            return bad("infer.n_samples and infer.n_mcmc must be >= 1, infer.noise_scale >= 0".into());
        }
        self.env.validate()?;
        self.eval.sparc.validate()?;
        Ok(())
    }

    /// Canonical text of every setting, in a fixed order.
    pub fn canonical(&self) -> String {
        let d = &self.data;
        let t = &self.train.config;
        let l = &t.langevin;
        let e = &self.env;
        let s = &self.eval.sparc;
        let m = self.eval.metrics;
        let metrics: Vec<&str> = [("asm", m.asm), ("r2", m.r2), ("sparc", m.sparc)]
            .into_iter()
            .filter_map(|(k, on)| on.then_some(k))
            .collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("run.seed", self.seed.to_string());
        kv("run.jobs", self.jobs.to_string());
        kv(
            "data.source",
            match d.source {
                DataSource::Synthetic => "synthetic",
                DataSource::Files => "files",
            }
            .into(),
        );
        kv("data.participants", d.participants.to_string());
        kv("data.sessions", d.sessions.to_string());
        kv("data.scenario", d.scenario.key().into());
        kv("data.length", d.length.to_string());
        kv("data.fps", d.fps.to_string());
        kv("data.noise_std", d.noise_std.to_string());
        kv(
            "data.facilitator_types",
            d.facilitator_types.iter().map(|f| f.key()).collect::<Vec<_>>().join(","),
        );
        kv("data.episode_length", d.episode_length.to_string());
        kv("data.stride", d.stride.to_string());
        kv("data.include_prev_action", d.include_prev_action.to_string());
        kv("data.seed", self.data_seed().to_string());
        kv(
            "train.policy",
            self.train.policies.iter().map(|p| p.key()).collect::<Vec<_>>().join(","),
        );
        kv(
            "train.fold",
            match self.train.fold {
                FoldSelection::One(f) => f.to_string(),
                FoldSelection::All => "all".into(),
            },
        );
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.steps", t.steps.to_string());
        kv("train.learning_rate", t.adam.learning_rate.to_string());
        kv("train.beta1", t.adam.beta1.to_string());
        kv("train.beta2", t.adam.beta2.to_string());
        kv("train.epsilon", t.adam.epsilon.to_string());
        kv("train.hidden_dims", join(&t.hidden_dims));
        kv("train.activation", t.activation.as_str().into());
        kv("train.dropout_rate", t.dropout_rate.to_string());
        kv("train.eval_every", t.eval_every.to_string());
        kv("train.heldout_episodes", t.heldout_episodes.to_string());
        kv(
            "train.checkpoint_dir",
            t.checkpoint_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("langevin.n_mcmc", l.n_mcmc.to_string());
        kv("langevin.n_samples", l.n_samples.to_string());
        kv("langevin.eta_init", l.eta_init.to_string());
        kv("langevin.eta_final", l.eta_final.to_string());
        kv("langevin.decay", l.decay.to_string());
        kv("langevin.noise_scale", l.noise_scale.to_string());
        kv("langevin.grad_clip", l.grad_clip.to_string());
        kv("infer.n_samples", show(self.infer.n_samples));
        kv("infer.n_mcmc", show(self.infer.n_mcmc));
        kv("infer.noise_scale", show(self.infer.noise_scale));
        kv("env.dt", e.dt.to_string());
        kv("env.kp", e.kp.to_string());
        kv("env.kd", e.kd.to_string());
        kv("env.max_steps", e.max_steps.to_string());
        kv("env.success_threshold", e.success_threshold.to_string());
        kv("env.action_limit", e.action_limit.to_string());
        kv("eval.sample_rate", s.sample_rate.to_string());
        kv("eval.padding_factor", s.padding_factor.to_string());
        kv("eval.cutoff_freq", s.cutoff_freq.to_string());
        kv("eval.amplitude_threshold", s.amplitude_threshold.to_string());
        kv("eval.metrics", metrics.join(","));
        kv("eval.plot_data", self.eval.plot_data.to_string());
        kv("io.data_dir", self.io.data_dir.display().to_string());
        kv("io.run_dir", self.io.run_dir.display().to_string());
        kv("io.folds", self.folds_path().display().to_string());
        for (kind, key, value) in &self.scoped {
            kv(&format!("{}.{key}", kind.key()), value.clone());
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Training settings of `kind`, scoped keys and run seed applied.
    pub fn train_config(&self, fold: u32, kind: PolicyKind) -> TrainConfig {
        let mut c = self.clone();
        for (k, key, value) in &self.scoped {
            if *k == kind {
                c.set(key, value).expect("validated when stored");
            }
        }
        let mut cfg = c.train.config;
        cfg.seed = ibc_core::rng::mix(self.seed, (fold as u64) << 8 | kind as u64);
        cfg
    }

    /// Sampler for evaluating `kind`: its training sampler with `infer.*` applied.
    pub fn sampler(&self, kind: PolicyKind) -> LangevinConfig {
        let mut l = self.train_config(1, kind).langevin;
        l.n_samples = self.infer.n_samples.unwrap_or(l.n_samples);
        l.n_mcmc = self.infer.n_mcmc.unwrap_or(l.n_mcmc);
        l.noise_scale = self.infer.noise_scale.unwrap_or(l.noise_scale);
        l
    }
}
