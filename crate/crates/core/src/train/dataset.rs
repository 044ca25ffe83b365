use ndarray::Array2;

use crate::data::{Action, ActionBounds, Episode, Observation};
use crate::error::{Error, Result};
use crate::nn::{NormalizationStats, STD_FLOOR};

/// Every `(observation, expert action)` pair of a set of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Array2<f64>,
    pub actions: Vec<Action>,
    pub participants: usize,
    pub include_prev_action: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub observations: Array2<f64>,
    pub expert_actions: Vec<Action>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.expert_actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expert_actions.is_empty()
    }
}

impl Dataset {
    pub fn from_episodes(episodes: &[Episode]) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| Error::Invalid("no training episodes".into()))?;
        let participants = first.participant_count();
        let include_prev_action = first.include_prev_action();
        let dim = Observation::dim(participants, include_prev_action);
        let mut flat = Vec::new();
        let mut actions = Vec::new();
        for ep in episodes {
            if ep.participant_count() != participants
                || ep.include_prev_action() != include_prev_action
            {
                return Err(Error::Invalid(format!(
                    "episode from session '{}' has a different observation layout",
                    ep.session_id
                )));
            }
            for (obs, action) in ep.pairs() {
                obs.write_flat(&mut flat);
                actions.push(action);
            }
        }
        let observations = Array2::from_shape_vec((actions.len(), dim), flat)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(Self {
            observations,
            actions,
            participants,
            include_prev_action,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.ncols()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            observations: self.observations.select(ndarray::Axis(0), indices),
            expert_actions: indices.iter().map(|&i| self.actions[i]).collect(),
        }
    }

    fn observation_rows(&self) -> Vec<Vec<f64>> {
        self.observations.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// Input statistics for the energy network: observation columns are
    /// fitted, the two action columns map `bounds` onto `[-1, 1]`.
    pub fn energy_stats(&self, bounds: &ActionBounds) -> Result<NormalizationStats> {
        let obs = NormalizationStats::fit_inputs(&self.observation_rows(), 1)?;
        let mut stats = obs;
        let c = bounds.center();
        let h = bounds.half_width();
        stats.input_mean.extend([c.yaw, c.pitch]);
        stats.input_std.extend([h.yaw.max(STD_FLOOR), h.pitch.max(STD_FLOOR)]);
        Ok(stats)
    }

    /// Fitted statistics on observations and expert actions.
    pub fn regression_stats(&self) -> Result<NormalizationStats> {
        let targets: Vec<Vec<f64>> = self.actions.iter().map(|a| a.to_array().to_vec()).collect();
        NormalizationStats::fit(&self.observation_rows(), &targets)
    }
}
