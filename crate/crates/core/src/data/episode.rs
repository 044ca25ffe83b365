use super::{Action, ActionBounds, FacilitatorType, GazeVector, SessionRecording, ACTION_LIMIT};
use crate::error::{Error, Result};

/// Frames per episode.
pub const DEFAULT_EPISODE_LENGTH: usize = 50;

/// What the policy sees at one frame.
///
/// Flattened order: facilitator, velocity, goal, participants in seat order,
/// then the previous action when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub facilitator: GazeVector,
    pub velocity: GazeVector,
    pub goal: GazeVector,
    pub participants: Vec<GazeVector>,
    pub prev_action: Option<Action>,
}

impl Observation {
    pub fn dim(participants: usize, include_prev_action: bool) -> usize {
        6 + 2 * participants + if include_prev_action { 2 } else { 0 }
    }

    pub fn len(&self) -> usize {
        Self::dim(self.participants.len(), self.prev_action.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.facilitator.to_array());
        out.extend_from_slice(&self.velocity.to_array());
        out.extend_from_slice(&self.goal.to_array());
        for p in &self.participants {
            out.extend_from_slice(&p.to_array());
        }
        if let Some(a) = self.prev_action {
            out.extend_from_slice(&a.to_array());
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.write_flat(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeConfig {
    pub length: usize,
    pub stride: usize,
    /// Appends the previous frame's gaze change to every observation.
    pub include_prev_action: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_EPISODE_LENGTH,
            stride: DEFAULT_EPISODE_LENGTH,
            include_prev_action: false,
        }
    }
}

/// A window of consecutive frames whose last facilitator gaze is the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub session_id: String,
    pub facilitator_type: FacilitatorType,
    /// Frame index in the session where the window starts.
    pub start_frame: usize,
    pub fps: f64,
    pub observations: Vec<Observation>,
    /// `expert_actions[t]` takes frame `t` to frame `t + 1`.
    pub expert_actions: Vec<Action>,
    pub goal: GazeVector,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn participant_count(&self) -> usize {
        self.observations
            .first()
            .map_or(0, |o| o.participants.len())
    }

    pub fn include_prev_action(&self) -> bool {
        self.observations
            .first()
            .is_some_and(|o| o.prev_action.is_some())
    }

    pub fn obs_dim(&self) -> usize {
        Observation::dim(self.participant_count(), self.include_prev_action())
    }

    /// Expert facilitator positions over the window.
    pub fn expert_positions(&self) -> Vec<GazeVector> {
        self.observations.iter().map(|o| o.facilitator).collect()
    }

    /// `(observation, expert action)` pairs for frames that have an action.
    pub fn pairs(&self) -> impl Iterator<Item = (&Observation, Action)> + '_ {
        self.observations.iter().zip(self.expert_actions.iter().copied())
    }
}

/// Cuts a session into windows starting at `0, stride, 2 * stride, ...`.
///
/// Sessions shorter than one window yield no episodes.
pub fn extract_episodes(session: &SessionRecording, cfg: &EpisodeConfig) -> Result<Vec<Episode>> {
    if cfg.length < 2 {
        return Err(Error::Invalid("episode length must be >= 2".into()));
    }
    if cfg.stride == 0 {
        return Err(Error::Invalid("episode stride must be >= 1".into()));
    }
    if !session.velocities_computed {
        return Err(Error::Contract(format!(
            "session {}: velocities not computed",
            session.id
        )));
    }
    let n = cfg.length;
    if session.len() < n {
        log::warn!(
            "session {} has {} frames, fewer than the episode length {n}",
            session.id,
            session.len()
        );
        return Ok(Vec::new());
    }
    let dt = 1.0 / session.fps;
    let count = (session.len() - n) / cfg.stride + 1;
    let mut episodes = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * cfg.stride;
        let window = &session.frames[start..start + n];
        let goal = window[n - 1].facilitator;
        let observations = window
            .iter()
            .map(|f| Observation {
                facilitator: f.facilitator,
                velocity: f.velocity,
                goal,
                participants: f.participants.clone(),
                prev_action: cfg.include_prev_action.then(|| f.velocity * dt),
            })
            .collect();
        let expert_actions = window
            .windows(2)
            .map(|w| w[1].facilitator - w[0].facilitator)
            .collect();
        episodes.push(Episode {
            session_id: session.id.clone(),
            facilitator_type: session.facilitator_type,
            start_frame: start,
            fps: session.fps,
            observations,
            expert_actions,
            goal,
        });
    }
    Ok(episodes)
}

/// Per-axis extremes of every expert action, limited to the environment range.
pub fn action_bounds(episodes: &[Episode]) -> Result<ActionBounds> {
    let mut actions = episodes.iter().flat_map(|e| e.expert_actions.iter().copied());
    let first = actions
        .next()
        .ok_or_else(|| Error::Invalid("no expert actions to bound".into()))?;
    let (mut min, mut max) = (first, first);
    for a in actions {
        min.yaw = min.yaw.min(a.yaw);
        min.pitch = min.pitch.min(a.pitch);
        max.yaw = max.yaw.max(a.yaw);
        max.pitch = max.pitch.max(a.pitch);
    }
    ActionBounds::new(
        min.clamp_symmetric(ACTION_LIMIT),
        max.clamp_symmetric(ACTION_LIMIT),
    )
}
