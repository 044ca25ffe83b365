use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::{ibc_train_step, mse_train_step, Dataset, StepReport};
use crate::data::{action_bounds, Episode};
use crate::env::{rollout, EnvConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Checkpoint, MlpConfig, MlpParams};
use crate::policy::{AnyPolicy, EbmPolicy, LangevinConfig, MsePolicy, PolicyKind};
use crate::rng::{derive, mix};

const STREAM_INIT: u64 = 1;
const STREAM_EPOCH: u64 = 2;
const STREAM_STEP: u64 = 3;
const STREAM_HELDOUT: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    /// Negative sampling during training and inference for held-out checks.
    pub langevin: LangevinConfig,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    /// Held-out success and checkpoint period; 0 disables both.
    pub eval_every: usize,
    /// Held-out episodes rolled out at each evaluation.
    pub heldout_episodes: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            steps: 20_000,
            adam: AdamConfig::default(),
            langevin: LangevinConfig::default(),
            hidden_dims: vec![256, 256],
            activation: Activation::Relu,
            dropout_rate: 0.1,
            eval_every: 1000,
            heldout_episodes: 20,
            checkpoint_dir: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("steps and batch_size must be >= 1".into()));
        }
        self.langevin.validate()?;
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0)
        {
            return Err(Error::Invalid("invalid adam hyperparameters".into()));
        }
        self.mlp_config().validate()
    }

    fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            hidden_dims: self.hidden_dims.clone(),
            activation: self.activation,
            dropout_rate: self.dropout_rate,
            ..MlpConfig::new(1, 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// 1-based step number.
    pub step: u64,
    pub loss: f64,
    pub heldout_asm: Option<f64>,
}

pub const LOG_HEADER: &str = "step,loss,heldout_asm";

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in rows {
        let asm = r.heldout_asm.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.step, r.loss, asm);
    }
    out
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    std::fs::write(path, log_to_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Owns a policy and its optimizer through a training run.
///
/// The minibatch of step `s` is a pure function of the seed and `s`: sample
/// positions `s * B .. (s + 1) * B` of an endless sequence of seeded
/// per-epoch permutations. Resuming from a checkpoint therefore continues
/// the exact same schedule.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    env: EnvConfig,
    dataset: Dataset,
    heldout: &'a [Episode],
    policy: AnyPolicy,
    adam: AdamState,
    step: u64,
    log: Vec<LogRow>,
    skipped: usize,
    restarts: usize,
    epoch_cache: Option<(u64, Vec<usize>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        kind: PolicyKind,
        train: &[Episode],
        heldout: &'a [Episode],
        cfg: TrainConfig,
        env: EnvConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        let dataset = Dataset::from_episodes(train)?;
        let bounds = action_bounds(train)?;
        let mut rng = derive(mix(cfg.seed, STREAM_INIT), 0);
        let mlp = cfg.mlp_config();
        let policy = match kind {
            PolicyKind::Ibc => {
                let stats = dataset.energy_stats(&bounds)?;
                let mut p = EbmPolicy::new(
                    mlp,
                    dataset.participants,
                    dataset.include_prev_action,
                    stats,
                    bounds,
                    &mut rng,
                )?;
                p.sampler = cfg.langevin;
                AnyPolicy::Ibc(p)
            }
            PolicyKind::Mse => AnyPolicy::Mse(MsePolicy::new(
                mlp,
                dataset.participants,
                dataset.include_prev_action,
                dataset.regression_stats()?,
                bounds,
                &mut rng,
            )?),
        };
        let adam = AdamState::new(cfg.adam, params(&policy));
        Ok(Self {
            cfg,
            env,
            dataset,
            heldout,
            policy,
            adam,
            step: 0,
            log: Vec::new(),
            skipped: 0,
            restarts: 0,
            epoch_cache: None,
        })
    }

    /// Continues a run from a checkpoint that carries optimizer state.
    ///
    /// Network shape and hyperparameters come from the checkpoint; the
    /// schedule, sampler and evaluation settings from `cfg`.
    pub fn resume(
        ck: &Checkpoint,
        train: &[Episode],
        heldout: &'a [Episode],
        cfg: TrainConfig,
        env: EnvConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        let adam = ck
            .optimizer
            .clone()
            .ok_or_else(|| Error::Invalid("checkpoint has no optimizer state".into()))?;
        let mut policy = AnyPolicy::from_checkpoint(ck)?;
        if let AnyPolicy::Ibc(p) = &mut policy {
            p.sampler = cfg.langevin;
        }
        let dataset = Dataset::from_episodes(train)?;
        if dataset.participants != ck.participants
            || dataset.include_prev_action != ck.include_prev_action
        {
            return Err(Error::Invalid("checkpoint does not match the data layout".into()));
        }
        Ok(Self {
            cfg,
            env,
            dataset,
            heldout,
            policy,
            adam,
            step: ck.trained_steps,
            log: Vec::new(),
            skipped: 0,
            restarts: 0,
            epoch_cache: None,
        })
    }

    pub fn policy(&self) -> &AnyPolicy {
        &self.policy
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = self.policy.to_checkpoint();
        ck.trained_steps = self.step;
        ck.optimizer = Some(self.adam.clone());
        ck
    }

    fn permutation(&mut self, epoch: u64) -> &[usize] {
        if self.epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut perm: Vec<usize> = (0..self.dataset.len()).collect();
            perm.shuffle(&mut derive(mix(self.cfg.seed, STREAM_EPOCH), epoch));
            self.epoch_cache = Some((epoch, perm));
        }
        &self.epoch_cache.as_ref().expect("filled").1
    }

    fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let n = self.dataset.len() as u64;
        let b = self.cfg.batch_size as u64;
        (step * b..(step + 1) * b)
            .map(|pos| self.permutation(pos / n)[(pos % n) as usize])
            .collect()
    }

    /// Runs one optimization step and any due evaluation or checkpoint.
    pub fn step_once(&mut self) -> Result<StepReport> {
        let indices = self.batch_indices(self.step);
        let batch = self.dataset.batch(&indices);
        let mut rng = derive(mix(self.cfg.seed, STREAM_STEP), self.step);
        let report = match &mut self.policy {
            AnyPolicy::Ibc(p) => {
                ibc_train_step(p, &batch, &self.cfg.langevin, &mut self.adam, &mut rng)?
            }
            AnyPolicy::Mse(p) => mse_train_step(p, &batch, &mut self.adam, &mut rng)?,
        };
        self.step += 1;
        self.skipped += report.skipped as usize;
        self.restarts += report.restarts;
        let due = self.cfg.eval_every > 0 && self.step % self.cfg.eval_every as u64 == 0;
        let heldout_asm = if due && !self.heldout.is_empty() {
            Some(self.heldout_success()?)
        } else {
            None
        };
        self.log.push(LogRow {
            step: self.step,
            loss: report.loss,
            heldout_asm,
        });
        if due {
            if let Some(dir) = &self.cfg.checkpoint_dir {
                let path = dir.join(format!("step_{:07}.ibck", self.step));
                self.checkpoint().save(&path)?;
            }
        }
        Ok(report)
    }

    /// Steps until `cfg.steps` have been taken in total.
    pub fn run(&mut self) -> Result<()> {
        if let Some(dir) = &self.cfg.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        while self.step < self.cfg.steps as u64 {
            self.step_once()?;
        }
        if self.skipped > 0 {
            log::warn!("{} of {} steps skipped", self.skipped, self.step);
        }
        Ok(())
    }

    fn heldout_success(&self) -> Result<f64> {
        let eps = &self.heldout[..self.heldout.len().min(self.cfg.heldout_episodes.max(1))];
        let base = mix(mix(self.cfg.seed, STREAM_HELDOUT), self.step);
        let mut hits = 0;
        for (i, ep) in eps.iter().enumerate() {
            let t = rollout(&self.policy, ep, &self.env, &mut derive(base, i as u64))?;
            hits += t.success as usize;
        }
        Ok(hits as f64 / eps.len() as f64)
    }
}

fn params(policy: &AnyPolicy) -> &MlpParams {
    match policy {
        AnyPolicy::Ibc(p) => &p.mlp.params,
        AnyPolicy::Mse(p) => &p.mlp.params,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: AnyPolicy,
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub skipped: usize,
    pub restarts: usize,
}

/// Trains a fresh policy of `kind` for `cfg.steps` steps.
pub fn train(
    kind: PolicyKind,
    train: &[Episode],
    heldout: &[Episode],
    cfg: &TrainConfig,
    env: &EnvConfig,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(kind, train, heldout, cfg.clone(), *env)?;
    trainer.run()?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        policy: trainer.policy.clone(),
        skipped: trainer.skipped,
        restarts: trainer.restarts,
        log: trainer.log,
    })
}
