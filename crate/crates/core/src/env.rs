//! PD-controlled gaze environment.
//!
//! Each action is a per-axis offset added to the current gaze to form the
//! controller setpoint. A PD law produces the acceleration and the state is
//! advanced with semi-implicit Euler. Participant gaze is replayed from the
//! recorded episode. An episode ends on the first step within the success
//! threshold of the goal, or after `max_steps`.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Action, Episode, GazeVector, Observation, ACTION_LIMIT};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Proportional gain, 1/s^2.
    pub kp: f64,
    /// Derivative gain, 1/s.
    pub kd: f64,
    pub max_steps: usize,
    /// Success radius around the goal, radians (inclusive).
    pub success_threshold: f64,
    /// Per-axis action clip, radians.
    pub action_limit: f64,
}

impl Default for EnvConfig {
    /// 30 Hz with gains `kp = 1/dt^2`, `kd = 1/dt`: the controller reaches a
    /// setpoint offset in one step, so the simulated gaze moves by exactly the
    /// commanded per-frame change.
    fn default() -> Self {
        let dt = 1.0 / 30.0;
        Self {
            dt,
            kp: 1.0 / (dt * dt),
            kd: 1.0 / dt,
            max_steps: 100,
            success_threshold: 0.02,
            action_limit: ACTION_LIMIT,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dt) || !positive(self.kp) || !positive(self.kd) {
            return Err(Error::Invalid("dt, kp and kd must be positive".into()));
        }
        if !positive(self.success_threshold) {
            return Err(Error::Invalid("success threshold must be positive".into()));
        }
        if !(self.action_limit > 0.0 && self.action_limit <= ACTION_LIMIT) {
            return Err(Error::Invalid("action limit must lie in (0, pi/2]".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Invalid("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub gaze: GazeVector,
    /// rad/s
    pub velocity: GazeVector,
    pub setpoint: GazeVector,
    pub goal: GazeVector,
    pub step: usize,
    pub participants: Vec<GazeVector>,
    pub done: bool,
}

impl EnvState {
    pub fn distance_to_goal(&self) -> f64 {
        self.gaze.distance(self.goal)
    }
}

pub fn check_success(state: &EnvState, cfg: &EnvConfig) -> bool {
    state.distance_to_goal() <= cfg.success_threshold
}

/// One episode's environment: configuration plus the replayed context.
#[derive(Debug, Clone)]
pub struct GazeEnv<'a> {
    cfg: EnvConfig,
    episode: &'a Episode,
}

impl<'a> GazeEnv<'a> {
    pub fn new(cfg: EnvConfig, episode: &'a Episode) -> Result<Self> {
        cfg.validate()?;
        if episode.is_empty() {
            return Err(Error::Invalid("episode has no frames".into()));
        }
        Ok(Self { cfg, episode })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn participants_at(&self, step: usize) -> Vec<GazeVector> {
        let k = step.min(self.episode.len() - 1);
        self.episode.observations[k].participants.clone()
    }

    pub fn observe(&self, state: &EnvState) -> Observation {
        Observation {
            facilitator: state.gaze,
            velocity: state.velocity,
            goal: state.goal,
            participants: state.participants.clone(),
            prev_action: self
                .episode
                .include_prev_action()
                .then(|| state.velocity * self.cfg.dt),
        }
    }

    pub fn reset(&self) -> (EnvState, Observation) {
        let first = &self.episode.observations[0];
        let mut state = EnvState {
            gaze: first.facilitator,
            velocity: first.velocity,
            setpoint: first.facilitator,
            goal: self.episode.goal,
            step: 0,
            participants: self.participants_at(0),
            done: false,
        };
        state.done = check_success(&state, &self.cfg);
        let obs = self.observe(&state);
        (state, obs)
    }

    pub fn step(&self, state: &EnvState, action: Action) -> Result<(EnvState, Observation, bool)> {
        if state.done || state.step >= self.cfg.max_steps {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if !action.is_finite() {
            return Err(Error::NonFinite("action".into()));
        }
        let cfg = &self.cfg;
        let setpoint = state.gaze + action.clamp_symmetric(cfg.action_limit);
        let accel = (setpoint - state.gaze) * cfg.kp - state.velocity * cfg.kd;
        let velocity = state.velocity + accel * cfg.dt;
        let gaze = state.gaze + velocity * cfg.dt;
        let step = state.step + 1;
        let mut next = EnvState {
            gaze,
            velocity,
            setpoint,
            goal: state.goal,
            step,
            participants: self.participants_at(step),
            done: false,
        };
        next.done = check_success(&next, cfg) || step >= cfg.max_steps;
        let obs = self.observe(&next);
        let done = next.done;
        Ok((next, obs, done))
    }
}

/// Anything that maps an observation to an action.
pub trait Policy {
    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<Action>;
}

impl<F> Policy for F
where
    F: Fn(&Observation, &mut Rng) -> Result<Action>,
{
    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<Action> {
        self(obs, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EnvState>,
    pub actions: Vec<Action>,
    pub success: bool,
    pub final_distance: f64,
    /// Why the rollout stopped early, when the policy failed.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<GazeVector> {
        self.states.iter().map(|s| s.gaze).collect()
    }

    /// CSV with one row per state; the last row has no action.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,gaze_yaw,gaze_pitch,vel_yaw,vel_pitch,action_yaw,action_pitch,dist_to_goal\n");
        for (i, s) in self.states.iter().enumerate() {
            let (ay, ap) = match self.actions.get(i) {
                Some(a) => (a.yaw.to_string(), a.pitch.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.step,
                s.gaze.yaw,
                s.gaze.pitch,
                s.velocity.yaw,
                s.velocity.pitch,
                ay,
                ap,
                s.distance_to_goal()
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Runs `policy` from the episode start until success or timeout.
///
/// A policy error or non-finite action ends the rollout as a failure with the
/// reason recorded in [`Trajectory::aborted`].
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    episode: &Episode,
    cfg: &EnvConfig,
    rng: &mut Rng,
) -> Result<Trajectory> {
    let env = GazeEnv::new(*cfg, episode)?;
    let (mut state, mut obs) = env.reset();
    let mut states = vec![state.clone()];
    let mut actions = Vec::new();
    let mut aborted = None;
    while !state.done {
        let action = match policy.act(&obs, rng) {
            Ok(a) if a.is_finite() => a,
            Ok(a) => {
                aborted = Some(format!("policy returned non-finite action {a}"));
                break;
            }
            Err(e) => {
                aborted = Some(format!("policy error: {e}"));
                break;
            }
        };
        let (next, next_obs, _) = env.step(&state, action)?;
        actions.push(action);
        states.push(next.clone());
        state = next;
        obs = next_obs;
    }
    let last = states.last().expect("reset state");
    let success = aborted.is_none() && check_success(last, cfg);
    Ok(Trajectory {
        final_distance: last.distance_to_goal(),
        states,
        actions,
        success,
        aborted,
    })
}
