use super::PolicyKind;
use crate::data::{Action, ActionBounds, GazeVector, Observation};
use crate::env::Policy;
use crate::error::{ensure_dim, Error, Result};
use crate::nn::{Checkpoint, Mlp, MlpConfig, Mode, NormalizationStats};
use crate::rng::Rng;

/// Direct regression from observation to action.
#[derive(Debug, Clone, PartialEq)]
pub struct MsePolicy {
    pub mlp: Mlp,
    pub stats: NormalizationStats,
    pub bounds: ActionBounds,
    pub participants: usize,
    pub include_prev_action: bool,
}

impl MsePolicy {
    /// Fresh network; `config.input_dim` and `output_dim` are overwritten.
    pub fn new(
        mut config: MlpConfig,
        participants: usize,
        include_prev_action: bool,
        stats: NormalizationStats,
        bounds: ActionBounds,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.input_dim = Observation::dim(participants, include_prev_action);
        config.output_dim = 2;
        let mlp = Mlp::new(config, rng)?;
        Self::from_parts(mlp, stats, bounds, participants, include_prev_action)
    }

    pub fn from_parts(
        mlp: Mlp,
        stats: NormalizationStats,
        bounds: ActionBounds,
        participants: usize,
        include_prev_action: bool,
    ) -> Result<Self> {
        ensure_dim(
            "regression input",
            Observation::dim(participants, include_prev_action),
            mlp.config.input_dim,
        )?;
        ensure_dim("regression output", 2, mlp.config.output_dim)?;
        ensure_dim("stats input", mlp.config.input_dim, stats.input_mean.len())?;
        ensure_dim("stats output", 2, stats.output_mean.len())?;
        stats.validate()?;
        bounds.validate()?;
        Ok(Self {
            mlp,
            stats,
            bounds,
            participants,
            include_prev_action,
        })
    }

    /// Network output without clipping.
    pub fn predict_raw(&self, obs: &[f64]) -> Result<Action> {
        let y = self.mlp.forward(&self.stats, obs, Mode::Eval)?;
        Ok(GazeVector::new(y[0], y[1]))
    }

    pub fn infer(&self, obs: &Observation) -> Result<Action> {
        ensure_dim("observation participants", self.participants, obs.participants.len())?;
        if obs.prev_action.is_some() != self.include_prev_action {
            return Err(Error::Contract("previous-action feature mismatch".into()));
        }
        Ok(self.bounds.clip(self.predict_raw(&obs.flatten())?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: PolicyKind::Mse,
            participants: self.participants,
            include_prev_action: self.include_prev_action,
            config: self.mlp.config.clone(),
            params: self.mlp.params.clone(),
            stats: self.stats.clone(),
            bounds: self.bounds,
            trained_steps: 0,
            optimizer: None,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != PolicyKind::Mse {
            return Err(Error::Invalid("checkpoint is not a regression model".into()));
        }
        let mlp = Mlp::from_parts(ck.config.clone(), ck.params.clone())?;
        Self::from_parts(mlp, ck.stats.clone(), ck.bounds, ck.participants, ck.include_prev_action)
    }
}

impl Policy for MsePolicy {
    fn act(&self, obs: &Observation, _rng: &mut Rng) -> Result<Action> {
        self.infer(obs)
    }
}
