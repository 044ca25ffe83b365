//! Implicit (energy-based) and explicit (regression) gaze policies.

mod ebm;
pub mod langevin;
mod mse;

use std::fmt;
use std::str::FromStr;

pub use ebm::EbmPolicy;
pub use langevin::{
    ibc_infer, langevin_refine, sample_uniform_actions, EnergyModel, InferOutcome, LangevinConfig,
    Refined, SamplerMode,
};
pub use mse::MsePolicy;

use crate::data::{Action, Observation};
use crate::env::Policy;
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Ibc,
    Mse,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::Ibc, PolicyKind::Mse];

    pub fn key(self) -> &'static str {
        match self {
            PolicyKind::Ibc => "ibc",
            PolicyKind::Mse => "mse",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Ibc => "Implicit BC",
            PolicyKind::Mse => "Explicit BC",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ibc" | "implicit" => Ok(PolicyKind::Ibc),
            "mse" | "explicit" => Ok(PolicyKind::Mse),
            other => Err(Error::Invalid(format!("unknown policy kind '{other}'"))),
        }
    }
}

/// Either policy, as restored from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPolicy {
    Ibc(EbmPolicy),
    Mse(MsePolicy),
}

impl AnyPolicy {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.kind {
            PolicyKind::Ibc => EbmPolicy::from_checkpoint(ck).map(AnyPolicy::Ibc),
            PolicyKind::Mse => MsePolicy::from_checkpoint(ck).map(AnyPolicy::Mse),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            AnyPolicy::Ibc(_) => PolicyKind::Ibc,
            AnyPolicy::Mse(_) => PolicyKind::Mse,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            AnyPolicy::Ibc(p) => p.to_checkpoint(),
            AnyPolicy::Mse(p) => p.to_checkpoint(),
        }
    }
}

impl Policy for AnyPolicy {
    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<Action> {
        match self {
            AnyPolicy::Ibc(p) => p.act(obs, rng),
            AnyPolicy::Mse(p) => p.act(obs, rng),
        }
    }
}
