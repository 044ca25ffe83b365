//! Session ingestion, episode extraction, fold splits and synthetic sessions.

mod episode;
mod folds;
mod gaze;
mod session;
pub mod synthetic;

pub use episode::{
    action_bounds, extract_episodes, Episode, EpisodeConfig, Observation, DEFAULT_EPISODE_LENGTH,
};
pub use folds::{split_folds, FoldAssignment, FoldSpec, FoldSplit, Role};
pub use gaze::{Action, ActionBounds, GazeVector, ACTION_LIMIT};
pub use session::{
    compute_velocities, load_session, session_header, write_session, FacilitatorType, Frame,
    SessionRecording, DEFAULT_FPS,
};
pub use synthetic::{generate_synthetic_session, Scenario, SyntheticConfig};
