use ndarray::Array2;

use super::{infonce_loss, Batch};
use crate::data::GazeVector;
use crate::error::{ensure_dim, Error, Result};
use crate::nn::{AdamState, DropoutMask, MlpParams, Mode};
use crate::policy::{
    langevin_refine, sample_uniform_actions, EbmPolicy, LangevinConfig, MsePolicy, SamplerMode,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Batch-mean loss; may be non-finite when `skipped`.
    pub loss: f64,
    pub skipped: bool,
    /// Langevin chains restarted while drawing negatives.
    pub restarts: usize,
}

/// Loss and summed parameter gradients of the contrastive objective.
///
/// Row `i * (N + 1)` of the network batch holds expert pair `i`, the next
/// `N` rows its refined negatives.
pub fn ibc_loss_and_grads(
    policy: &EbmPolicy,
    batch: &Batch,
    negatives: &[GazeVector],
    mask: Option<&DropoutMask>,
) -> Result<(f64, MlpParams)> {
    let b = batch.len();
    if b == 0 || negatives.is_empty() || negatives.len() % b != 0 {
        return Err(Error::Contract("need the same positive count of negatives per item".into()));
    }
    let n = negatives.len() / b;
    let mut owners = Vec::with_capacity(b * (n + 1));
    let mut actions = Vec::with_capacity(b * (n + 1));
    for i in 0..b {
        owners.push(i);
        actions.push(batch.expert_actions[i]);
        for j in 0..n {
            owners.push(i);
            actions.push(negatives[i * n + j]);
        }
    }
    let x = policy.energy_inputs(batch.observations.view(), &owners, &actions)?;
    let mode = mask.map_or(Mode::Eval, Mode::Train);
    let pass = policy.mlp.forward_batch(&policy.stats, x.view(), mode)?;
    let energies = pass.output.column(0);
    let mut upstream = Array2::zeros((b * (n + 1), 1));
    let mut loss = 0.0;
    for i in 0..b {
        let base = i * (n + 1);
        let neg: Vec<f64> = (1..=n).map(|j| energies[base + j]).collect();
        let out = match infonce_loss(energies[base], &neg) {
            Ok(out) => out,
            Err(Error::NonFinite(_)) => return Ok((f64::NAN, policy.mlp.params.zeros_like())),
            Err(e) => return Err(e),
        };
        loss += out.loss / b as f64;
        upstream[[base, 0]] = out.d_positive / b as f64;
        for j in 0..n {
            upstream[[base + 1 + j, 0]] = out.d_negatives[j] / b as f64;
        }
    }
    let grads = policy
        .mlp
        .backward_batch(&policy.stats, &pass, mode, upstream.view(), true)?;
    Ok((loss, grads.params.expect("requested")))
}

/// One contrastive update: uniform negatives refined by Langevin, InfoNCE
/// over each expert action and its negatives, then Adam.
pub fn ibc_train_step(
    policy: &mut EbmPolicy,
    batch: &Batch,
    langevin: &LangevinConfig,
    adam: &mut AdamState,
    rng: &mut Rng,
) -> Result<StepReport> {
    ensure_dim("batch observation", policy.obs_dim(), batch.observations.ncols())?;
    ensure_dim("batch rows", batch.observations.nrows(), batch.len())?;
    let b = batch.len();
    let n = langevin.n_samples;
    let start = sample_uniform_actions(&policy.bounds, b * n, rng);
    let owners: Vec<usize> = (0..b).flat_map(|i| std::iter::repeat_n(i, n)).collect();
    let refined = langevin_refine(
        &*policy,
        batch.observations.view(),
        &owners,
        &start,
        &policy.bounds,
        langevin,
        rng,
        SamplerMode::Train,
    )?;
    let mask = DropoutMask::sample(&policy.mlp.config, b * (n + 1), rng);
    let (loss, grads) = ibc_loss_and_grads(policy, batch, &refined.actions, Some(&mask))?;
    let skipped = !apply(adam, &mut policy.mlp.params, loss, &grads)?;
    Ok(StepReport {
        loss,
        skipped,
        restarts: refined.restarts,
    })
}

/// Mean squared error over batch and both axes of unclipped predictions.
pub fn mse_loss_and_grads(
    policy: &MsePolicy,
    batch: &Batch,
    mask: Option<&DropoutMask>,
) -> Result<(f64, MlpParams)> {
    ensure_dim("batch rows", batch.observations.nrows(), batch.len())?;
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mode = mask.map_or(Mode::Eval, Mode::Train);
    let pass = policy
        .mlp
        .forward_batch(&policy.stats, batch.observations.view(), mode)?;
    let count = (2 * batch.len()) as f64;
    let mut upstream = Array2::zeros((batch.len(), 2));
    let mut loss = 0.0;
    for (i, a) in batch.expert_actions.iter().enumerate() {
        for (k, target) in a.to_array().into_iter().enumerate() {
            let r = pass.output[[i, k]] - target;
            loss += r * r / count;
            upstream[[i, k]] = 2.0 * r / count;
        }
    }
    let grads = policy
        .mlp
        .backward_batch(&policy.stats, &pass, mode, upstream.view(), true)?;
    Ok((loss, grads.params.expect("requested")))
}

pub fn mse_train_step(
    policy: &mut MsePolicy,
    batch: &Batch,
    adam: &mut AdamState,
    rng: &mut Rng,
) -> Result<StepReport> {
    let mask = DropoutMask::sample(&policy.mlp.config, batch.len(), rng);
    let (loss, grads) = mse_loss_and_grads(policy, batch, Some(&mask))?;
    let skipped = !apply(adam, &mut policy.mlp.params, loss, &grads)?;
    Ok(StepReport {
        loss,
        skipped,
        restarts: 0,
    })
}

/// Adam update unless the loss or a gradient is non-finite.
fn apply(adam: &mut AdamState, params: &mut MlpParams, loss: f64, grads: &MlpParams) -> Result<bool> {
    if !loss.is_finite() {
        log::warn!("skipping step with non-finite loss {loss}");
        return Ok(false);
    }
    match adam.step(params, grads) {
        Ok(()) => Ok(true),
        Err(Error::NonFiniteGradient { layer }) => {
            log::warn!("skipping step with non-finite gradient in layer {layer}");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}
