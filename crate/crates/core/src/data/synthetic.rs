//! Scripted facilitator sessions.
//!
//! Seats are spread evenly in yaw over `[-1, 1]` rad with pitch on a gentle
//! arc inside `[-0.3, 0.3]` rad. Participant gaze rests on the seat direction
//! plus noise. Three facilitator scripts are available:
//!
//! - `AttendSpeaker`: a randomly scheduled speaker takes the floor; listeners
//!   orient partway toward the speaker and the facilitator follows after a
//!   short reaction delay with a minimum-jerk turn.
//! - `ScanSweep`: a periodic yaw sweep across the seats.
//! - `BimodalChoice`: at every decision frame the facilitator, resting at one
//!   of two home directions, arcs out to the left or right (coin flip) and
//!   comes to rest at the other home. Arc width and duration vary per
//!   decision. Both branches share the same goal, so the goal does not reveal
//!   the branch.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{compute_velocities, FacilitatorType, Frame, GazeVector, SessionRecording};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    AttendSpeaker,
    ScanSweep,
    BimodalChoice,
}

impl Scenario {
    pub fn key(self) -> &'static str {
        match self {
            Scenario::AttendSpeaker => "attend_speaker",
            Scenario::ScanSweep => "scan_sweep",
            Scenario::BimodalChoice => "bimodal_choice",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Scenario::AttendSpeaker,
            Scenario::ScanSweep,
            Scenario::BimodalChoice,
        ]
        .into_iter()
        .find(|sc| sc.key() == s)
        .ok_or_else(|| Error::Invalid(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub participants: usize,
    pub length: usize,
    pub fps: f64,
    pub scenario: Scenario,
    /// Std of the i.i.d. Gaussian noise added to every gaze angle, radians.
    pub noise_std: f64,
    pub facilitator_type: FacilitatorType,
    /// Frames between decisions in `BimodalChoice`.
    pub decision_period: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            participants: 5,
            length: 3000,
            fps: super::DEFAULT_FPS,
            scenario: Scenario::AttendSpeaker,
            noise_std: 0.002,
            facilitator_type: FacilitatorType::Synthetic,
            decision_period: super::DEFAULT_EPISODE_LENGTH,
        }
    }
}

// attend_speaker timing, frames
const MIN_FLOOR_TIME: usize = 40;
const MAX_FLOOR_TIME: usize = 120;
const REACTION_DELAY: usize = 3;
/// Listeners turn this fraction of the way toward the speaker's seat.
const LISTENER_ORIENTATION: f64 = 0.5;
const LISTENER_SMOOTHING: f64 = 0.5;

// scan_sweep
const SWEEP_PERIOD: f64 = 240.0;

// bimodal_choice geometry (radians) and timing (frames)
const HOME_PITCH: f64 = 0.25;
/// Range of the arc's peak yaw.
const ARC_YAW: (f64, f64) = (0.4, 0.8);
/// Range of the arc duration.
const ARC_FRAMES: (usize, usize) = (30, 40);

/// Seat directions for `p` participants.
pub fn seat_directions(p: usize) -> Vec<GazeVector> {
    if p == 1 {
        return vec![GazeVector::ZERO];
    }
    (0..p)
        .map(|i| {
            let s = i as f64 / (p - 1) as f64;
            GazeVector::new(-1.0 + 2.0 * s, 0.3 * (PI * s).cos())
        })
        .collect()
}

/// Minimum-jerk position fraction at normalized time `s` in `[0, 1]`.
pub fn minimum_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Quadratic ease-out: full speed at the start, at rest at `s = 1`.
fn ease_out(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    1.0 - (1.0 - s) * (1.0 - s)
}

/// Decision frames of a `BimodalChoice` session.
pub fn decision_frames(cfg: &SyntheticConfig) -> Vec<usize> {
    (0..cfg.length.saturating_sub(1))
        .step_by(cfg.decision_period.max(1))
        .collect()
}

pub fn generate_synthetic_session(
    id: &str,
    cfg: &SyntheticConfig,
    rng: &mut Rng,
) -> Result<SessionRecording> {
    if cfg.length < super::DEFAULT_EPISODE_LENGTH {
        return Err(Error::Invalid(format!(
            "synthetic session length {} below {}",
            cfg.length,
            super::DEFAULT_EPISODE_LENGTH
        )));
    }
    if cfg.participants == 0 {
        return Err(Error::Invalid("synthetic sessions need at least one participant".into()));
    }
    if !(cfg.fps > 0.0) || !(cfg.noise_std >= 0.0) {
        return Err(Error::Invalid("fps must be positive and noise_std non-negative".into()));
    }
    if cfg.scenario == Scenario::BimodalChoice && cfg.decision_period < ARC_FRAMES.1 + 2 {
        return Err(Error::Invalid(format!(
            "decision period must be at least {}",
            ARC_FRAMES.1 + 2
        )));
    }

    let seats = seat_directions(cfg.participants);
    let (facilitator, participants) = match cfg.scenario {
        Scenario::AttendSpeaker => attend_speaker(cfg, &seats, rng),
        Scenario::ScanSweep => (scan_sweep(cfg, &seats, rng), rest_gaze(cfg, &seats)),
        Scenario::BimodalChoice => (bimodal_choice(cfg, rng), rest_gaze(cfg, &seats)),
    };

    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::Invalid(format!("noise std: {e}")))?;
    let jitter = |g: GazeVector, rng: &mut Rng| -> Result<GazeVector> {
        if cfg.noise_std == 0.0 {
            return Ok(g);
        }
        GazeVector::new(g.yaw + noise.sample(rng), g.pitch + noise.sample(rng)).canonicalize()
    };

    let mut frames = Vec::with_capacity(cfg.length);
    for (i, (fac, parts)) in facilitator.into_iter().zip(participants).enumerate() {
        let facilitator = jitter(fac, rng)?;
        let participants = parts
            .into_iter()
            .map(|p| jitter(p, rng))
            .collect::<Result<Vec<_>>>()?;
        frames.push(Frame {
            index: i,
            facilitator,
            participants,
            velocity: GazeVector::ZERO,
        });
    }
    compute_velocities(SessionRecording {
        id: id.to_owned(),
        frames,
        fps: cfg.fps,
        participant_count: cfg.participants,
        facilitator_type: cfg.facilitator_type,
        velocities_computed: false,
    })
}

fn rest_gaze(cfg: &SyntheticConfig, seats: &[GazeVector]) -> Vec<Vec<GazeVector>> {
    vec![seats.to_vec(); cfg.length]
}

fn attend_speaker(
    cfg: &SyntheticConfig,
    seats: &[GazeVector],
    rng: &mut Rng,
) -> (Vec<GazeVector>, Vec<Vec<GazeVector>>) {
    let p = seats.len();
    let mut speaker = rng.random_range(0..p);
    let mut gaze = seats[speaker];
    let mut turn: Option<(usize, usize, GazeVector, GazeVector)> = None;
    let mut next_switch = rng.random_range(MIN_FLOOR_TIME..=MAX_FLOOR_TIME);
    let mut listeners: Vec<GazeVector> = listener_targets(seats, speaker);

    let mut facilitator = Vec::with_capacity(cfg.length);
    let mut participants = Vec::with_capacity(cfg.length);
    for t in 0..cfg.length {
        if t == next_switch && p > 1 {
            let mut next = rng.random_range(0..p - 1);
            if next >= speaker {
                next += 1;
            }
            speaker = next;
            let target = seats[speaker];
            let duration = (10.0 + 12.0 * gaze.distance(target)).round() as usize;
            turn = Some((t + REACTION_DELAY, duration, gaze, target));
            next_switch = t + rng.random_range(MIN_FLOOR_TIME..=MAX_FLOOR_TIME);
        }
        if let Some((start, duration, from, to)) = turn {
            if t >= start {
                let s = (t - start) as f64 / duration as f64;
                gaze = from + (to - from) * minimum_jerk(s);
                if t >= start + duration {
                    gaze = to;
                    turn = None;
                }
            }
        }
        let targets = listener_targets(seats, speaker);
        for (l, target) in listeners.iter_mut().zip(&targets) {
            *l = *l + (*target - *l) * LISTENER_SMOOTHING;
        }
        facilitator.push(gaze);
        participants.push(listeners.clone());
    }
    (facilitator, participants)
}

fn listener_targets(seats: &[GazeVector], speaker: usize) -> Vec<GazeVector> {
    seats
        .iter()
        .enumerate()
        .map(|(i, &seat)| {
            if i == speaker {
                seat
            } else {
                seat + (seats[speaker] - seat) * LISTENER_ORIENTATION
            }
        })
        .collect()
}

fn scan_sweep(cfg: &SyntheticConfig, seats: &[GazeVector], rng: &mut Rng) -> Vec<GazeVector> {
    let phase = rng.random_range(0.0..2.0 * PI);
    let amplitude = seats.iter().map(|s| s.yaw.abs()).fold(0.0, f64::max);
    (0..cfg.length)
        .map(|t| {
            let yaw = amplitude * (2.0 * PI * t as f64 / SWEEP_PERIOD + phase).sin();
            GazeVector::new(yaw, pitch_along_seats(seats, yaw))
        })
        .collect()
}

/// Piecewise-linear seat pitch as a function of yaw.
fn pitch_along_seats(seats: &[GazeVector], yaw: f64) -> f64 {
    if seats.len() == 1 {
        return seats[0].pitch;
    }
    let k = seats
        .windows(2)
        .position(|w| yaw <= w[1].yaw)
        .unwrap_or(seats.len() - 2);
    let (a, b) = (seats[k], seats[k + 1]);
    let s = ((yaw - a.yaw) / (b.yaw - a.yaw)).clamp(0.0, 1.0);
    a.pitch + (b.pitch - a.pitch) * s
}

fn bimodal_choice(cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<GazeVector> {
    let mut home_pitch = if rng.random::<bool>() {
        HOME_PITCH
    } else {
        -HOME_PITCH
    };
    let mut out = Vec::with_capacity(cfg.length);
    let mut t = 0;
    while t < cfg.length {
        let from = GazeVector::new(0.0, home_pitch);
        let to = GazeVector::new(0.0, -home_pitch);
        let width = rng.random_range(ARC_YAW.0..=ARC_YAW.1);
        let side = if rng.random::<bool>() { width } else { -width };
        let arc = rng.random_range(ARC_FRAMES.0..=ARC_FRAMES.1);
        for k in 0..cfg.decision_period {
            if t + k >= cfg.length {
                break;
            }
            // yaw leaves home at full speed; both axes arrive at rest
            let g = if k < arc {
                let s = k as f64 / arc as f64;
                GazeVector::new(
                    side * (PI * ease_out(s)).sin(),
                    from.pitch + (to.pitch - from.pitch) * minimum_jerk(s),
                )
            } else {
                to
            };
            out.push(g);
        }
        t += cfg.decision_period;
        home_pitch = -home_pitch;
    }
    out
}
