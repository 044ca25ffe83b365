use crate::error::{Error, Result};

/// Loss value and its gradient with respect to every energy.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNce {
    pub loss: f64,
    pub d_positive: f64,
    pub d_negatives: Vec<f64>,
}

/// Cross-entropy of the positive against a softmax over negated energies.
///
/// `loss = E+ + logsumexp(-E)` over the positive and every negative; the
/// gradients are `1 - p0` for the positive and `-pj` for negative `j`.
pub fn infonce_loss(positive: f64, negatives: &[f64]) -> Result<InfoNce> {
    if negatives.is_empty() {
        return Err(Error::Contract("infonce needs at least one negative".into()));
    }
    if !positive.is_finite() || negatives.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("infonce energies".into()));
    }
    let max_logit = negatives
        .iter()
        .map(|e| -e)
        .fold(-positive, f64::max);
    let sum: f64 = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|e| (-e - max_logit).exp())
        .sum();
    let lse = max_logit + sum.ln();
    let p = |e: f64| (-e - lse).exp();
    Ok(InfoNce {
        loss: positive + lse,
        d_positive: 1.0 - p(positive),
        d_negatives: negatives.iter().map(|&e| -p(e)).collect(),
    })
}
