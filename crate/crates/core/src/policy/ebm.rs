use ndarray::{Array2, ArrayView2};

use super::langevin::{ibc_infer, EnergyModel, InferOutcome, LangevinConfig};
use super::PolicyKind;
use crate::data::{Action, ActionBounds, GazeVector, Observation};
use crate::env::Policy;
use crate::error::{ensure_dim, Error, Result};
use crate::nn::{Checkpoint, Mlp, MlpConfig, Mode, NormalizationStats};
use crate::rng::Rng;

/// Energy network over `observation ‖ action` with a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct EbmPolicy {
    pub mlp: Mlp,
    pub stats: NormalizationStats,
    pub bounds: ActionBounds,
    pub participants: usize,
    pub include_prev_action: bool,
    /// Sampler used by [`Policy::act`].
    pub sampler: LangevinConfig,
}

impl EbmPolicy {
    /// Fresh network; `config.input_dim` and `output_dim` are overwritten.
    pub fn new(
        mut config: MlpConfig,
        participants: usize,
        include_prev_action: bool,
        stats: NormalizationStats,
        bounds: ActionBounds,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.input_dim = Observation::dim(participants, include_prev_action) + 2;
        config.output_dim = 1;
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
            "energy input",
            Observation::dim(participants, include_prev_action) + 2,
            mlp.config.input_dim,
        )?;
        ensure_dim("energy output", 1, mlp.config.output_dim)?;
        ensure_dim("stats input", mlp.config.input_dim, stats.input_mean.len())?;
        ensure_dim("stats output", 1, stats.output_mean.len())?;
        stats.validate()?;
        bounds.validate()?;
        Ok(Self {
            mlp,
            stats,
            bounds,
            participants,
            include_prev_action,
            sampler: LangevinConfig::default(),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.config.input_dim - 2
    }

    /// Rows `observations[owners[k]] ‖ actions[k]`.
    pub fn energy_inputs(
        &self,
        observations: ArrayView2<f64>,
        owners: &[usize],
        actions: &[Action],
    ) -> Result<Array2<f64>> {
        let d = self.obs_dim();
        ensure_dim("observation", d, observations.ncols())?;
        if owners.len() != actions.len() {
            return Err(Error::Contract("one owner per action required".into()));
        }
        let mut x = Array2::zeros((actions.len(), d + 2));
        for (k, (&o, a)) in owners.iter().zip(actions).enumerate() {
            if o >= observations.nrows() {
                return Err(Error::Contract("owner index out of range".into()));
            }
            let mut row = x.row_mut(k);
            row.slice_mut(ndarray::s![..d]).assign(&observations.row(o));
            row[d] = a.yaw;
            row[d + 1] = a.pitch;
        }
        Ok(x)
    }

    pub fn energy(&self, obs: &[f64], action: Action) -> Result<f64> {
        let mut x = obs.to_vec();
        x.extend_from_slice(&action.to_array());
        Ok(self.mlp.forward(&self.stats, &x, Mode::Eval)?[0])
    }

    pub fn energies(&self, obs: &[f64], actions: &[Action]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, obs.len()), obs)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.evaluate(view, &vec![0; actions.len()], actions, false)?.0)
    }

    pub fn infer(&self, obs: &Observation, rng: &mut Rng) -> Result<InferOutcome> {
        let flat = self.flatten(obs)?;
        ibc_infer(self, &flat, &self.bounds, &self.sampler, rng)
    }

    fn flatten(&self, obs: &Observation) -> Result<Vec<f64>> {
        ensure_dim("observation participants", self.participants, obs.participants.len())?;
        if obs.prev_action.is_some() != self.include_prev_action {
            return Err(Error::Contract("previous-action feature mismatch".into()));
        }
        Ok(obs.flatten())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: PolicyKind::Ibc,
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
        if ck.kind != PolicyKind::Ibc {
            return Err(Error::Invalid("checkpoint is not an energy model".into()));
        }
        let mlp = Mlp::from_parts(ck.config.clone(), ck.params.clone())?;
        Self::from_parts(mlp, ck.stats.clone(), ck.bounds, ck.participants, ck.include_prev_action)
    }
}

impl EnergyModel for EbmPolicy {
    fn obs_dim(&self) -> usize {
        EbmPolicy::obs_dim(self)
    }

    fn evaluate(
        &self,
        observations: ArrayView2<f64>,
        owners: &[usize],
        actions: &[Action],
        with_grad: bool,
    ) -> Result<(Vec<f64>, Option<Vec<GazeVector>>)> {
        let x = self.energy_inputs(observations, owners, actions)?;
        let pass = self.mlp.forward_batch(&self.stats, x.view(), Mode::Eval)?;
        let energies = pass.output.column(0).to_vec();
        if !with_grad {
            return Ok((energies, None));
        }
        let ones = Array2::ones((actions.len(), 1));
        let grads = self
            .mlp
            .backward_batch(&self.stats, &pass, Mode::Eval, ones.view(), false)?;
        let d = self.obs_dim();
        let g = grads
            .input
            .rows()
            .into_iter()
            .map(|r| GazeVector::new(r[d], r[d + 1]))
            .collect();
        Ok((energies, Some(g)))
    }
}

impl Policy for EbmPolicy {
    fn act(&self, obs: &Observation, rng: &mut Rng) -> Result<Action> {
        Ok(self.infer(obs, rng)?.action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, MlpParams};
    use crate::rng::seeded;
    use ndarray::{array, Array1};

    fn obs() -> Observation {
        Observation {
            facilitator: GazeVector::new(0.1, -0.05),
            velocity: GazeVector::new(0.2, 0.0),
            goal: GazeVector::new(0.3, 0.1),
            participants: vec![GazeVector::new(-0.4, 0.02)],
            prev_action: None,
        }
    }

    fn bounds() -> ActionBounds {
        ActionBounds::new(GazeVector::new(-0.5, -0.5), GazeVector::new(0.5, 0.5)).unwrap()
    }

    fn random_policy(seed: u64) -> EbmPolicy {
        let config = MlpConfig {
            hidden_dims: vec![16, 16],
            ..MlpConfig::new(0, 0)
        };
        let d = Observation::dim(1, false) + 2;
        let mut stats = NormalizationStats::identity(d, 1);
        stats.input_std[d - 1] = 0.2;
        EbmPolicy::new(config, 1, false, stats, bounds(), &mut seeded(seed)).unwrap()
    }

    /// Single hidden relu unit fed only the action: `E = relu(w . a) + c`
    /// with `w = (1, -2)`, `c = 0.5`.
    fn hand_policy() -> EbmPolicy {
        let d = Observation::dim(1, false);
        let config = MlpConfig {
            hidden_dims: vec![1],
            dropout_rate: 0.0,
            ..MlpConfig::new(d + 2, 1)
        };
        let mut w = Array2::zeros((1, d + 2));
        w[[0, d]] = 1.0;
        w[[0, d + 1]] = -2.0;
        let params = MlpParams {
            layers: vec![
                Dense {
                    weights: w,
                    bias: Array1::zeros(1),
                },
                Dense {
                    weights: array![[1.0]],
                    bias: array![0.5],
                },
            ],
        };
        let mlp = Mlp::from_parts(config, params).unwrap();
        EbmPolicy::from_parts(mlp, NormalizationStats::identity(d + 2, 1), bounds(), 1, false)
            .unwrap()
    }

    #[test]
    fn hand_built_energy_and_gradient() {
        let p = hand_policy();
        let o = obs().flatten();
        assert!((p.energy(&o, GazeVector::new(0.3, 0.1)).unwrap() - 0.6).abs() < 1e-12);
        assert!((p.energy(&o, GazeVector::new(-0.3, 0.1)).unwrap() - 0.5).abs() < 1e-12);
        let view = ArrayView2::from_shape((1, o.len()), &o).unwrap();
        let (_, g) = p
            .evaluate(view, &[0, 0], &[GazeVector::new(0.3, 0.1), GazeVector::new(-0.3, 0.1)], true)
            .unwrap();
        let g = g.unwrap();
        assert_eq!(g[0], GazeVector::new(1.0, -2.0));
        assert_eq!(g[1], GazeVector::ZERO);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let p = random_policy(3);
        let o = obs().flatten();
        let view = ArrayView2::from_shape((1, o.len()), &o).unwrap();
        let a = GazeVector::new(0.12, -0.27);
        let (_, g) = p.evaluate(view, &[0], &[a], true).unwrap();
        let g = g.unwrap()[0];
        let h = 1e-6;
        let fd = |da: GazeVector| {
            (p.energy(&o, a + da).unwrap() - p.energy(&o, a - da).unwrap()) / (2.0 * h)
        };
        assert!((fd(GazeVector::new(h, 0.0)) - g.yaw).abs() < 1e-6);
        assert!((fd(GazeVector::new(0.0, h)) - g.pitch).abs() < 1e-6);
    }

    #[test]
    fn batch_energies_match_single_evaluations() {
        let p = random_policy(4);
        let o = obs().flatten();
        let acts = [GazeVector::new(0.1, 0.2), GazeVector::new(-0.3, 0.0), GazeVector::ZERO];
        let batch = p.energies(&o, &acts).unwrap();
        for (a, e) in acts.iter().zip(batch) {
            assert!((p.energy(&o, *a).unwrap() - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_tracks_grid_minimum() {
        let p = random_policy(5);
        let o = obs().flatten();
        let n = 200;
        let mut grid_min = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let a = GazeVector::new(
                    -0.5 + i as f64 / (n - 1) as f64,
                    -0.5 + j as f64 / (n - 1) as f64,
                );
                grid_min = grid_min.min(p.energy(&o, a).unwrap());
            }
        }
        let out = p.infer(&obs(), &mut seeded(6)).unwrap();
        assert!(bounds().contains(out.action));
        let spread = {
            let e: Vec<f64> = (0..400)
                .map(|k| {
                    let a = GazeVector::new(
                        -0.5 + (k % 20) as f64 / 19.0,
                        -0.5 + (k / 20) as f64 / 19.0,
                    );
                    p.energy(&o, a).unwrap()
                })
                .collect();
            e.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - grid_min
        };
        assert!(
            out.energy <= grid_min + 0.05 * spread,
            "inferred {} grid {} spread {}",
            out.energy,
            grid_min,
            spread
        );
    }

    #[test]
    fn observation_layout_is_checked() {
        let p = random_policy(7);
        let mut o = obs();
        o.participants.push(GazeVector::ZERO);
        assert!(p.act(&o, &mut seeded(0)).is_err());
        let mut o = obs();
        o.prev_action = Some(GazeVector::ZERO);
        assert!(p.act(&o, &mut seeded(0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_energies() {
        let p = random_policy(8);
        let back = EbmPolicy::from_checkpoint(
            &Checkpoint::from_bytes(&p.to_checkpoint().to_bytes()).unwrap(),
        )
        .unwrap();
        let o = obs().flatten();
        let a = GazeVector::new(0.2, -0.1);
        assert_eq!(p.energy(&o, a).unwrap(), back.energy(&o, a).unwrap());
    }
}
