use crate::error::{Error, Result};

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension affine statistics for the input normalization and output
/// de-normalization layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; input_dim],
            input_std: vec![1.0; input_dim],
            output_mean: vec![0.0; output_dim],
            output_std: vec![1.0; output_dim],
        }
    }

    /// Population mean and std per column of `inputs` and `outputs`.
    pub fn fit(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        let (input_mean, input_std) = column_stats(inputs, "inputs")?;
        let (output_mean, output_std) = column_stats(outputs, "outputs")?;
        Ok(Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    /// Fitted input statistics with an identity output layer.
    pub fn fit_inputs(inputs: &[Vec<f64>], output_dim: usize) -> Result<Self> {
        let (input_mean, input_std) = column_stats(inputs, "inputs")?;
        Ok(Self {
            input_mean,
            input_std,
            output_mean: vec![0.0; output_dim],
            output_std: vec![1.0; output_dim],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_mean.len() != self.input_std.len()
            || self.output_mean.len() != self.output_std.len()
        {
            return Err(Error::Invalid("normalization mean/std lengths differ".into()));
        }
        let all = self
            .input_mean
            .iter()
            .chain(&self.input_std)
            .chain(&self.output_mean)
            .chain(&self.output_std);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalization stats".into()));
        }
        if self
            .input_std
            .iter()
            .chain(&self.output_std)
            .any(|&s| s <= 0.0)
        {
            return Err(Error::Invalid("normalization std must be positive".into()));
        }
        Ok(())
    }

    pub fn normalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.output_mean)
            .zip(&self.output_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.output_mean)
            .zip(&self.output_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

fn column_stats(rows: &[Vec<f64>], what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Invalid(format!("cannot fit normalization on empty {what}")))?;
    let dim = first.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Invalid(format!("inconsistent row lengths in {what}")));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(STD_FLOOR))
        .collect::<Vec<_>>();
    if mean.iter().chain(&std).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("normalization {what}")));
    }
    Ok((mean, std))
}
