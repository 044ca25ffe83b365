//! Dense network primitives: MLP with explicit reverse mode, normalization
//! statistics, Adam, and the checkpoint file format.

mod adam;
pub mod checkpoint;
mod mlp;
mod norm;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use mlp::{
    Activation, Dense, DropoutMask, ForwardPass, Gradients, Mlp, MlpConfig, MlpParams, Mode,
};
pub use norm::{NormalizationStats, STD_FLOOR};
