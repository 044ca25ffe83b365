//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "IBCK"
//! version          u8       FORMAT_VERSION
//! kind             u8       0 = ibc, 1 = mse
//! participants     u32
//! prev_action      u8       0 | 1
//! input_dim        u32
//! output_dim       u32
//! hidden_count     u32
//! hidden_dims      u32 * hidden_count
//! activation       u8       0 = relu, 1 = tanh
//! dropout_rate     f64
//! layers           per layer: weights (out * in, row-major) f64, bias (out) f64
//! stats            input_mean, input_std (input_dim f64 each),
//!                  output_mean, output_std (output_dim f64 each)
//! bounds           min_yaw, min_pitch, max_yaw, max_pitch f64
//! trained_steps    u64
//! optimizer        u8       0 = none, 1 = adam
//!   adam           step u64, lr, beta1, beta2, epsilon f64,
//!                  first moment then second moment in the layer layout
//! ```

use std::path::Path;

use super::{Activation, AdamConfig, AdamState, MlpConfig, MlpParams, NormalizationStats};
use crate::data::{ActionBounds, GazeVector};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;

pub const FORMAT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"IBCK";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: PolicyKind,
    pub participants: usize,
    pub include_prev_action: bool,
    pub config: MlpConfig,
    pub params: MlpParams,
    pub stats: NormalizationStats,
    pub bounds: ActionBounds,
    /// Training steps taken so far, skipped steps included.
    pub trained_steps: u64,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u8(FORMAT_VERSION);
        w.u8(match self.kind {
            PolicyKind::Ibc => 0,
            PolicyKind::Mse => 1,
        });
        w.u32(self.participants);
        w.u8(self.include_prev_action as u8);
        w.u32(self.config.input_dim);
        w.u32(self.config.output_dim);
        w.u32(self.config.hidden_dims.len());
        for &h in &self.config.hidden_dims {
            w.u32(h);
        }
        w.u8(match self.config.activation {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        });
        w.f64(self.config.dropout_rate);
        w.params(&self.params);
        for v in [
            &self.stats.input_mean,
            &self.stats.input_std,
            &self.stats.output_mean,
            &self.stats.output_std,
        ] {
            v.iter().for_each(|&x| w.f64(x));
        }
        for x in [
            self.bounds.min.yaw,
            self.bounds.min.pitch,
            self.bounds.max.yaw,
            self.bounds.max.pitch,
        ] {
            w.f64(x);
        }
        w.0.extend_from_slice(&self.trained_steps.to_le_bytes());
        match &self.optimizer {
            None => w.u8(0),
            Some(adam) => {
                w.u8(1);
                w.0.extend_from_slice(&adam.step.to_le_bytes());
                w.f64(adam.config.learning_rate);
                w.f64(adam.config.beta1);
                w.f64(adam.config.beta2);
                w.f64(adam.config.epsilon);
                w.params(&adam.first_moment);
                w.params(&adam.second_moment);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Invalid("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let kind = match r.u8()? {
            0 => PolicyKind::Ibc,
            1 => PolicyKind::Mse,
            k => return Err(Error::Invalid(format!("unknown policy kind tag {k}"))),
        };
        let participants = r.u32()?;
        let include_prev_action = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::Invalid(format!("bad prev_action flag {v}"))),
        };
        let input_dim = r.u32()?;
        let output_dim = r.u32()?;
        let n_hidden = r.u32()?;
        if n_hidden > 64 {
            return Err(Error::Invalid(format!("implausible hidden layer count {n_hidden}")));
        }
        let hidden_dims = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            a => return Err(Error::Invalid(format!("unknown activation tag {a}"))),
        };
        let dropout_rate = r.f64()?;
        let config = MlpConfig {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            dropout_rate,
        };
        config.validate()?;
        let params = r.params(&config)?;
        let stats = NormalizationStats {
            input_mean: r.f64s(input_dim)?,
            input_std: r.f64s(input_dim)?,
            output_mean: r.f64s(output_dim)?,
            output_std: r.f64s(output_dim)?,
        };
        stats.validate()?;
        let b = r.f64s(4)?;
        let bounds = ActionBounds::new(GazeVector::new(b[0], b[1]), GazeVector::new(b[2], b[3]))?;
        let trained_steps = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                let adam_config = AdamConfig {
                    learning_rate: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    epsilon: r.f64()?,
                };
                Some(AdamState {
                    config: adam_config,
                    first_moment: r.params(&config)?,
                    second_moment: r.params(&config)?,
                    step,
                })
            }
            o => return Err(Error::Invalid(format!("unknown optimizer tag {o}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Invalid(format!(
                "{} trailing bytes in checkpoint",
                bytes.len() - r.pos
            )));
        }
        if params.first_non_finite_layer().is_some() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(Self {
            kind,
            participants,
            include_prev_action,
            config,
            params,
            stats,
            bounds,
            trained_steps,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn params(&mut self, p: &MlpParams) {
        for l in &p.layers {
            l.weights.iter().for_each(|&x| self.f64(x));
            l.bias.iter().for_each(|&x| self.f64(x));
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Invalid("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn params(&mut self, config: &MlpConfig) -> Result<MlpParams> {
        let mut p = MlpParams::zeros(config);
        let values = self.f64s(p.num_params())?;
        p.unflatten_from(&values)?;
        Ok(p)
    }
}
