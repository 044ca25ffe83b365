use std::collections::BTreeMap;

use rayon::prelude::*;

use super::metrics::{r_squared_axis, sparc, GazeAxis, SparcConfig, SPARC_MIN_LEN};
use crate::data::{Episode, FacilitatorType};
use crate::env::{rollout, EnvConfig, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::rng::{derive, mix};

const STREAM_EVAL: u64 = 5;

/// Episodes whose aligned trajectory is shorter than this are flagged.
pub const SHORT_ALIGNMENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub sparc: SparcConfig,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sparc: SparcConfig::default(),
            seed: 0,
            jobs: 0,
        }
    }
}

/// Metrics of one rolled-out episode; `None` where a metric is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub index: usize,
    pub session_id: String,
    pub facilitator_type: FacilitatorType,
    pub start_frame: usize,
    pub success: bool,
    /// Indexed pitch, yaw.
    pub r2: [Option<f64>; 2],
    pub sparc: [Option<f64>; 2],
    pub no_motion: [bool; 2],
    pub short_alignment: bool,
    pub trajectory: Trajectory,
}

impl EpisodeResult {
    pub fn aborted(&self) -> Option<&str> {
        self.trajectory.aborted.as_deref()
    }
}

const AXES: [GazeAxis; 2] = [GazeAxis::Pitch, GazeAxis::Yaw];

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub kind: PolicyKind,
    pub episodes: Vec<EpisodeResult>,
}

impl PolicyEvaluation {
    pub fn aborted(&self) -> usize {
        self.episodes.iter().filter(|e| e.aborted().is_some()).count()
    }

    /// Episodes without an R² value on at least one axis.
    pub fn r2_excluded(&self) -> usize {
        self.episodes.iter().filter(|e| e.r2.iter().any(Option::is_none)).count()
    }

    pub fn sparc_excluded(&self) -> usize {
        self.episodes
            .iter()
            .filter(|e| e.sparc.iter().any(Option::is_none))
            .count()
    }

    pub fn no_motion(&self) -> usize {
        self.episodes.iter().filter(|e| e.no_motion.iter().any(|&f| f)).count()
    }

    pub fn short_alignment(&self) -> usize {
        self.episodes.iter().filter(|e| e.short_alignment).count()
    }
}

fn score(index: usize, ep: &Episode, trajectory: Trajectory, cfg: &EvalConfig) -> EpisodeResult {
    let predicted = trajectory.positions();
    let truth = ep.expert_positions();
    let aligned = predicted.len().min(truth.len());
    let usable = trajectory.aborted.is_none();
    let mut r2 = [None; 2];
    let mut sp = [None; 2];
    let mut no_motion = [false; 2];
    if usable {
        for (k, axis) in AXES.into_iter().enumerate() {
            r2[k] = r_squared_axis(&predicted, &truth, axis).ok();
            if predicted.len() >= SPARC_MIN_LEN {
                let series: Vec<f64> = predicted.iter().map(|&g| axis.of(g)).collect();
                if let Ok(s) = sparc(&series, &cfg.sparc) {
                    sp[k] = Some(s.value);
                    no_motion[k] = s.no_motion;
                }
            }
        }
    }
    EpisodeResult {
        index,
        session_id: ep.session_id.clone(),
        facilitator_type: ep.facilitator_type,
        start_frame: ep.start_frame,
        success: trajectory.success,
        r2,
        sparc: sp,
        no_motion,
        short_alignment: aligned < SHORT_ALIGNMENT,
        trajectory,
    }
}

/// Rolls `policy` out on every episode and scores each rollout.
///
/// Episode `i` draws from its own random stream, so results do not depend
/// on the worker count.
pub fn evaluate<P: Policy + Sync + ?Sized>(
    policy: &P,
    kind: PolicyKind,
    episodes: &[Episode],
    env: &EnvConfig,
    cfg: &EvalConfig,
) -> Result<PolicyEvaluation> {
    if episodes.is_empty() {
        return Err(Error::Invalid("no test episodes".into()));
    }
    env.validate()?;
    cfg.sparc.validate()?;
    let base = mix(cfg.seed, STREAM_EVAL);
    let run = || {
        episodes
            .par_iter()
            .enumerate()
            .map(|(i, ep)| {
                let t = rollout(policy, ep, env, &mut derive(base, i as u64))?;
                Ok(score(i, ep, t, cfg))
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
        .install(run)?;
    for r in &results {
        if let Some(reason) = r.aborted() {
            log::warn!(
                "{} episode {}@{} aborted: {reason}",
                kind,
                r.session_id,
                r.start_frame
            );
        }
    }
    Ok(PolicyEvaluation {
        kind,
        episodes: results,
    })
}

/// Session-then-type means of one metric.
///
/// Each session's value is the mean over its episodes with a defined value;
/// each type's value is the mean over its sessions.
pub(crate) fn type_means<F>(results: &[EpisodeResult], metric: F) -> BTreeMap<FacilitatorType, f64>
where
    F: Fn(&EpisodeResult) -> Option<f64>,
{
    let mut sessions: BTreeMap<(FacilitatorType, &str), (f64, usize)> = BTreeMap::new();
    for r in results {
        if let Some(v) = metric(r) {
            let e = sessions
                .entry((r.facilitator_type, r.session_id.as_str()))
                .or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut types: BTreeMap<FacilitatorType, (f64, usize)> = BTreeMap::new();
    for ((t, _), (sum, n)) in sessions {
        let e = types.entry(t).or_default();
        e.0 += sum / n as f64;
        e.1 += 1;
    }
    types.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
}
