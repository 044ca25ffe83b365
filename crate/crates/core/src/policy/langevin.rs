//! Gradient-based Langevin sampling over 2D actions.
//!
//! Chains run in unit coordinates: each non-degenerate action axis is mapped
//! affinely from `[min, max]` onto `[-1, 1]`, so step sizes, noise and the
//! gradient clip are independent of the dataset's action scale. Degenerate
//! axes (`min == max`) stay pinned.

use ndarray::ArrayView2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Action, ActionBounds, GazeVector};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scalar energy over `(observation, action)` pairs.
pub trait EnergyModel {
    fn obs_dim(&self) -> usize;

    /// Energies of `(observations[owners[k]], actions[k])` for every `k`, and
    /// their gradients with respect to the action when `with_grad` is set.
    fn evaluate(
        &self,
        observations: ArrayView2<f64>,
        owners: &[usize],
        actions: &[Action],
        with_grad: bool,
    ) -> Result<(Vec<f64>, Option<Vec<GazeVector>>)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinConfig {
    pub n_mcmc: usize,
    pub eta_init: f64,
    pub eta_final: f64,
    /// Power of the polynomial step-size decay.
    pub decay: f64,
    /// Noise std is `noise_scale * sqrt(eta)`.
    pub noise_scale: f64,
    /// Per-axis cap on the unit-coordinate gradient.
    pub grad_clip: f64,
    /// Chains per inference call, negatives per training example.
    pub n_samples: usize,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            n_mcmc: 100,
            eta_init: 0.5,
            eta_final: 0.01,
            decay: 2.0,
            noise_scale: 0.5,
            grad_clip: 1.0,
            n_samples: 64,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mcmc == 0 || self.n_samples == 0 {
            return Err(Error::Invalid("n_mcmc and n_samples must be >= 1".into()));
        }
        if !(self.eta_final > 0.0 && self.eta_init >= self.eta_final && self.eta_init.is_finite())
        {
            return Err(Error::Invalid("need eta_init >= eta_final > 0".into()));
        }
        if !(self.noise_scale >= 0.0 && self.grad_clip > 0.0 && self.decay >= 0.0) {
            return Err(Error::Invalid(
                "noise_scale >= 0, grad_clip > 0 and decay >= 0 required".into(),
            ));
        }
        Ok(())
    }

    /// Step size of iteration `k` (0-based), decaying polynomially from
    /// `eta_init` to exactly `eta_final` at the last iteration.
    pub fn step_size(&self, k: usize) -> f64 {
        if self.n_mcmc <= 1 {
            return self.eta_init;
        }
        let frac = 1.0 - k as f64 / (self.n_mcmc - 1) as f64;
        self.eta_final + (self.eta_init - self.eta_final) * frac.max(0.0).powf(self.decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    /// Noise on every iteration.
    Train,
    /// The last iteration is noiseless.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub actions: Vec<Action>,
    /// Chains restarted after a non-finite gradient.
    pub restarts: usize,
}

/// I.i.d. uniform actions inside `bounds`.
pub fn sample_uniform_actions(bounds: &ActionBounds, n: usize, rng: &mut Rng) -> Vec<Action> {
    (0..n)
        .map(|_| {
            GazeVector::new(
                rng.random_range(bounds.min.yaw..=bounds.max.yaw),
                rng.random_range(bounds.min.pitch..=bounds.max.pitch),
            )
        })
        .collect()
}

struct UnitMap {
    center: GazeVector,
    half: GazeVector,
}

impl UnitMap {
    fn new(bounds: &ActionBounds) -> Self {
        Self {
            center: bounds.center(),
            half: bounds.half_width(),
        }
    }

    fn to_unit(&self, a: Action) -> [f64; 2] {
        let f = |v: f64, c: f64, h: f64| if h > 0.0 { (v - c) / h } else { 0.0 };
        [
            f(a.yaw, self.center.yaw, self.half.yaw),
            f(a.pitch, self.center.pitch, self.half.pitch),
        ]
    }

    fn from_unit(&self, u: [f64; 2]) -> Action {
        GazeVector::new(
            self.center.yaw + self.half.yaw * u[0],
            self.center.pitch + self.half.pitch * u[1],
        )
    }

    fn live(&self) -> [bool; 2] {
        [self.half.yaw > 0.0, self.half.pitch > 0.0]
    }
}

/// Refines `actions` by Langevin steps on `model`'s energy.
///
/// Chain `k` is conditioned on `observations[owners[k]]`. Each iteration
/// moves `a <- clip(a - eta * clip(grad) + noise)` in unit coordinates.
#[allow(clippy::too_many_arguments)]
pub fn langevin_refine<M: EnergyModel + ?Sized>(
    model: &M,
    observations: ArrayView2<f64>,
    owners: &[usize],
    actions: &[Action],
    bounds: &ActionBounds,
    cfg: &LangevinConfig,
    rng: &mut Rng,
    mode: SamplerMode,
) -> Result<Refined> {
    cfg.validate()?;
    if owners.len() != actions.len() {
        return Err(Error::Contract("one owner per chain required".into()));
    }
    if owners.iter().any(|&o| o >= observations.nrows()) {
        return Err(Error::Contract("chain owner out of range".into()));
    }
    let tol = 1e-12;
    let loose = ActionBounds {
        min: bounds.min - GazeVector::new(tol, tol),
        max: bounds.max + GazeVector::new(tol, tol),
    };
    if actions.iter().any(|&a| !loose.contains(a)) {
        return Err(Error::Contract("langevin start outside action bounds".into()));
    }

    let map = UnitMap::new(bounds);
    let live = map.live();
    let mut units: Vec<[f64; 2]> = actions.iter().map(|&a| map.to_unit(a)).collect();
    let mut current: Vec<Action> = actions.to_vec();
    let mut restarts = 0;
    let clip = cfg.grad_clip;

    for k in 0..cfg.n_mcmc {
        let eta = cfg.step_size(k);
        let noisy = !(mode == SamplerMode::Infer && k + 1 == cfg.n_mcmc);
        let sigma = cfg.noise_scale * eta.sqrt();
        let (_, grads) = model.evaluate(observations, owners, &current, true)?;
        let grads = grads.expect("gradients requested");
        for (u, g) in units.iter_mut().zip(&grads) {
            let g_unit = [g.yaw * map.half.yaw, g.pitch * map.half.pitch];
            if !(g_unit[0].is_finite() && g_unit[1].is_finite()) {
                restarts += 1;
                for axis in 0..2 {
                    u[axis] = if live[axis] {
                        rng.random_range(-1.0..=1.0)
                    } else {
                        0.0
                    };
                }
                continue;
            }
            for axis in 0..2 {
                if !live[axis] {
                    continue;
                }
                let step = eta * g_unit[axis].clamp(-clip, clip);
                let noise = if noisy && sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * z
                } else {
                    0.0
                };
                u[axis] = (u[axis] - step + noise).clamp(-1.0, 1.0);
            }
        }
        current = units.iter().map(|&u| bounds.clip(map.from_unit(u))).collect();
    }
    Ok(Refined {
        actions: current,
        restarts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferOutcome {
    pub action: Action,
    pub energy: f64,
    pub restarts: usize,
    /// Every refined chain had a non-finite energy; the best initial sample
    /// was returned instead.
    pub fallback: bool,
}

/// Two refinement passes from uniform samples, then the lowest-energy chain.
pub fn ibc_infer<M: EnergyModel + ?Sized>(
    model: &M,
    obs: &[f64],
    bounds: &ActionBounds,
    cfg: &LangevinConfig,
    rng: &mut Rng,
) -> Result<InferOutcome> {
    let view = ArrayView2::from_shape((1, obs.len()), obs)
        .map_err(|e| Error::Contract(e.to_string()))?;
    let initial = sample_uniform_actions(bounds, cfg.n_samples, rng);
    let owners = vec![0; initial.len()];
    let first = langevin_refine(model, view, &owners, &initial, bounds, cfg, rng, SamplerMode::Infer)?;
    let second = langevin_refine(
        model,
        view,
        &owners,
        &first.actions,
        bounds,
        cfg,
        rng,
        SamplerMode::Infer,
    )?;
    let restarts = first.restarts + second.restarts;
    let (energies, _) = model.evaluate(view, &owners, &second.actions, false)?;
    if let Some((i, e)) = argmin_finite(&energies) {
        return Ok(InferOutcome {
            action: bounds.clip(second.actions[i]),
            energy: e,
            restarts,
            fallback: false,
        });
    }
    log::warn!("all Langevin chains ended with non-finite energy; using best initial sample");
    let (energies, _) = model.evaluate(view, &owners, &initial, false)?;
    let (i, e) = argmin_finite(&energies)
        .ok_or_else(|| Error::NonFinite("energies of every initial sample".into()))?;
    Ok(InferOutcome {
        action: bounds.clip(initial[i]),
        energy: e,
        restarts,
        fallback: true,
    })
}

fn argmin_finite(values: &[f64]) -> Option<(usize, f64)> {
    values
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |best, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::seeded;

    /// `E = |a - target|^2` in raw action units.
    pub(crate) struct Quadratic {
        pub target: GazeVector,
        pub scale: f64,
    }

    impl EnergyModel for Quadratic {
        fn obs_dim(&self) -> usize {
            1
        }

        fn evaluate(
            &self,
            _obs: ArrayView2<f64>,
            _owners: &[usize],
            actions: &[Action],
            with_grad: bool,
        ) -> Result<(Vec<f64>, Option<Vec<GazeVector>>)> {
            let e = actions
                .iter()
                .map(|&a| self.scale * (a - self.target).norm().powi(2))
                .collect();
            let g = with_grad.then(|| {
                actions
                    .iter()
                    .map(|&a| (a - self.target) * (2.0 * self.scale))
                    .collect()
            });
            Ok((e, g))
        }
    }

    struct Flat;

    impl EnergyModel for Flat {
        fn obs_dim(&self) -> usize {
            1
        }

        fn evaluate(
            &self,
            _obs: ArrayView2<f64>,
            _owners: &[usize],
            actions: &[Action],
            with_grad: bool,
        ) -> Result<(Vec<f64>, Option<Vec<GazeVector>>)> {
            Ok((
                vec![1.0; actions.len()],
                with_grad.then(|| vec![GazeVector::ZERO; actions.len()]),
            ))
        }
    }

    /// Non-finite gradient left of yaw = 0, quadratic bowl at 0.5 elsewhere.
    struct Cliff;

    impl EnergyModel for Cliff {
        fn obs_dim(&self) -> usize {
            1
        }

        fn evaluate(
            &self,
            _obs: ArrayView2<f64>,
            _owners: &[usize],
            actions: &[Action],
            with_grad: bool,
        ) -> Result<(Vec<f64>, Option<Vec<GazeVector>>)> {
            let e = actions.iter().map(|a| (a.yaw - 0.5).powi(2)).collect();
            let g = with_grad.then(|| {
                actions
                    .iter()
                    .map(|a| {
                        if a.yaw < 0.0 {
                            GazeVector::new(f64::NAN, 0.0)
                        } else {
                            GazeVector::new(2.0 * (a.yaw - 0.5), 0.0)
                        }
                    })
                    .collect()
            });
            Ok((e, g))
        }
    }

    fn unit_bounds() -> ActionBounds {
        ActionBounds::new(GazeVector::new(-1.0, -1.0), GazeVector::new(1.0, 1.0)).unwrap()
    }

    fn obs() -> ndarray::Array2<f64> {
        ndarray::Array2::zeros((1, 1))
    }

    #[test]
    fn step_size_schedule_endpoints() {
        let cfg = LangevinConfig::default();
        assert_eq!(cfg.step_size(0), 0.5);
        assert!((cfg.step_size(99) - 0.01).abs() < 1e-15);
        assert!(cfg.step_size(50) < cfg.step_size(10));
    }

    #[test]
    fn uniform_samples_stay_in_bounds_and_center() {
        let b = ActionBounds::new(GazeVector::new(-0.2, 0.1), GazeVector::new(0.6, 0.3)).unwrap();
        let n = 100_000;
        let xs = sample_uniform_actions(&b, n, &mut seeded(1));
        assert!(xs.iter().all(|&a| b.contains(a)));
        let mean_yaw = xs.iter().map(|a| a.yaw).sum::<f64>() / n as f64;
        let mean_pitch = xs.iter().map(|a| a.pitch).sum::<f64>() / n as f64;
        // std of the mean of U(a, b) is (b - a) / sqrt(12 n)
        let se = |w: f64| w / (12.0 * n as f64).sqrt();
        assert!((mean_yaw - 0.2).abs() < 3.0 * se(0.8));
        assert!((mean_pitch - 0.2).abs() < 3.0 * se(0.2));
    }

    #[test]
    fn degenerate_bounds_sample_the_point() {
        let a = GazeVector::new(0.03, -0.01);
        let b = ActionBounds::new(a, a).unwrap();
        assert!(sample_uniform_actions(&b, 10, &mut seeded(2))
            .iter()
            .all(|&x| x == a));
        let out = ibc_infer(&Flat, &[0.0], &b, &LangevinConfig::default(), &mut seeded(3)).unwrap();
        assert_eq!(out.action, a);
    }

    #[test]
    fn chains_concentrate_on_quadratic_minimum() {
        // Small-step stationary law for E = s |a - t|^2 with noise 0.5 sqrt(eta)
        // has per-axis variance 0.25 / (4 s) when the gradient is unclipped.
        let target = GazeVector::new(0.3, -0.4);
        let model = Quadratic { target, scale: 4.0 };
        let cfg = LangevinConfig {
            grad_clip: 1e9,
            ..LangevinConfig::default()
        };
        let b = unit_bounds();
        let mut rng = seeded(4);
        let n = 512;
        let start = sample_uniform_actions(&b, n, &mut rng);
        let owners = vec![0; n];
        let out = langevin_refine(&model, obs().view(), &owners, &start, &b, &cfg, &mut rng, SamplerMode::Infer)
            .unwrap();
        let nf = n as f64;
        let mean = out
            .actions
            .iter()
            .fold(GazeVector::ZERO, |acc, &a| acc + a * (1.0 / nf));
        assert!(mean.distance(target) < 0.03, "mean {mean}");
        let var_yaw = out.actions.iter().map(|a| (a.yaw - mean.yaw).powi(2)).sum::<f64>() / nf;
        let expected = 0.25 / 16.0;
        assert!(var_yaw > 0.5 * expected && var_yaw < 2.0 * expected, "var {var_yaw}");
    }

    #[test]
    fn noiseless_inference_is_gradient_descent() {
        let target = GazeVector::new(-0.25, 0.6);
        let model = Quadratic { target, scale: 1.0 };
        let cfg = LangevinConfig {
            noise_scale: 0.0,
            n_mcmc: 300,
            ..LangevinConfig::default()
        };
        let out = ibc_infer(&model, &[0.0], &unit_bounds(), &cfg, &mut seeded(5)).unwrap();
        assert!(out.action.distance(target) < 1e-3);
        assert!(!out.fallback);
    }

    #[test]
    fn flat_energy_random_walk_stays_in_bounds() {
        let b = ActionBounds::new(GazeVector::new(-0.1, -0.3), GazeVector::new(0.2, 0.05)).unwrap();
        let cfg = LangevinConfig {
            noise_scale: 3.0,
            ..LangevinConfig::default()
        };
        let mut rng = seeded(6);
        let start = sample_uniform_actions(&b, 64, &mut rng);
        let owners = vec![0; 64];
        let out = langevin_refine(&Flat, obs().view(), &owners, &start, &b, &cfg, &mut rng, SamplerMode::Train)
            .unwrap();
        assert!(out.actions.iter().all(|&a| b.contains(a)));
        assert_ne!(out.actions, start);
    }

    #[test]
    fn median_energy_drops_on_convex_energy() {
        let model = Quadratic {
            target: GazeVector::new(0.1, 0.2),
            scale: 1.0,
        };
        let b = unit_bounds();
        for seed in 0..100 {
            let mut rng = seeded(seed);
            let start = sample_uniform_actions(&b, 32, &mut rng);
            let owners = vec![0; 32];
            let one = LangevinConfig {
                n_mcmc: 1,
                ..LangevinConfig::default()
            };
            let after_one =
                langevin_refine(&model, obs().view(), &owners, &start, &b, &one, &mut seeded(seed + 1000), SamplerMode::Train)
                    .unwrap();
            let full = langevin_refine(
                &model,
                obs().view(),
                &owners,
                &start,
                &b,
                &LangevinConfig::default(),
                &mut seeded(seed + 1000),
                SamplerMode::Train,
            )
            .unwrap();
            let median = |acts: &[Action]| {
                let (mut e, _) = model.evaluate(obs().view(), &owners, acts, false).unwrap();
                e.sort_by(f64::total_cmp);
                e[e.len() / 2]
            };
            assert!(median(&full.actions) < median(&after_one.actions), "seed {seed}");
        }
    }

    #[test]
    fn non_finite_gradients_restart_chains() {
        let b = unit_bounds();
        let start = vec![GazeVector::new(-0.5, 0.0); 8];
        let owners = vec![0; 8];
        let cfg = LangevinConfig {
            n_mcmc: 50,
            ..LangevinConfig::default()
        };
        let out = langevin_refine(&Cliff, obs().view(), &owners, &start, &b, &cfg, &mut seeded(7), SamplerMode::Infer)
            .unwrap();
        assert!(out.restarts >= 8);
        assert!(out.actions.iter().all(|&a| b.contains(a)));
    }

    #[test]
    fn start_outside_bounds_is_contract_error() {
        let b = ActionBounds::new(GazeVector::new(-0.1, -0.1), GazeVector::new(0.1, 0.1)).unwrap();
        let e = langevin_refine(
            &Flat,
            obs().view(),
            &[0],
            &[GazeVector::new(0.5, 0.0)],
            &b,
            &LangevinConfig::default(),
            &mut seeded(0),
            SamplerMode::Train,
        );
        assert!(matches!(e, Err(Error::Contract(_))));
    }

    #[test]
    fn inference_is_seed_deterministic() {
        let model = Quadratic {
            target: GazeVector::new(0.2, 0.2),
            scale: 0.3,
        };
        let cfg = LangevinConfig::default();
        let a = ibc_infer(&model, &[0.0], &unit_bounds(), &cfg, &mut seeded(9)).unwrap();
        let b = ibc_infer(&model, &[0.0], &unit_bounds(), &cfg, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }
}
