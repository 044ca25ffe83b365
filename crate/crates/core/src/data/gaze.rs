use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Per-axis limit of the environment action space, in radians.
pub const ACTION_LIMIT: f64 = FRAC_PI_2;

/// A head/gaze orientation (or a change of one) in radians.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GazeVector {
    pub yaw: f64,
    pub pitch: f64,
}

/// A per-frame change of the facilitator's gaze.
pub type Action = GazeVector;

impl GazeVector {
    pub const ZERO: GazeVector = GazeVector {
        yaw: 0.0,
        pitch: 0.0,
    };

    pub const fn new(yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch }
    }

    pub fn norm(self) -> f64 {
        self.yaw.hypot(self.pitch)
    }

    pub fn distance(self, other: GazeVector) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.yaw, self.pitch]
    }

    pub fn clamp(self, min: GazeVector, max: GazeVector) -> Self {
        Self {
            yaw: self.yaw.clamp(min.yaw, max.yaw),
            pitch: self.pitch.clamp(min.pitch, max.pitch),
        }
    }

    /// Clamps both axes to `[-limit, limit]`.
    pub fn clamp_symmetric(self, limit: f64) -> Self {
        self.clamp(GazeVector::new(-limit, -limit), GazeVector::new(limit, limit))
    }

    /// Wraps yaw into `(-pi, pi]` and checks pitch lies in `[-pi/2, pi/2]`.
    pub fn canonicalize(self) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::NonFinite("gaze vector".into()));
        }
        if self.pitch.abs() > FRAC_PI_2 {
            return Err(Error::Invalid(format!(
                "pitch {} outside [-pi/2, pi/2]",
                self.pitch
            )));
        }
        let mut yaw = self.yaw.rem_euclid(2.0 * PI);
        if yaw > PI {
            yaw -= 2.0 * PI;
        }
        Ok(Self {
            yaw,
            pitch: self.pitch,
        })
    }
}

impl Add for GazeVector {
    type Output = GazeVector;
    fn add(self, rhs: GazeVector) -> GazeVector {
        GazeVector::new(self.yaw + rhs.yaw, self.pitch + rhs.pitch)
    }
}

impl AddAssign for GazeVector {
    fn add_assign(&mut self, rhs: GazeVector) {
        self.yaw += rhs.yaw;
        self.pitch += rhs.pitch;
    }
}

impl Sub for GazeVector {
    type Output = GazeVector;
    fn sub(self, rhs: GazeVector) -> GazeVector {
        GazeVector::new(self.yaw - rhs.yaw, self.pitch - rhs.pitch)
    }
}

impl Mul<f64> for GazeVector {
    type Output = GazeVector;
    fn mul(self, rhs: f64) -> GazeVector {
        GazeVector::new(self.yaw * rhs, self.pitch * rhs)
    }
}

impl Neg for GazeVector {
    type Output = GazeVector;
    fn neg(self) -> GazeVector {
        GazeVector::new(-self.yaw, -self.pitch)
    }
}

impl fmt::Display for GazeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(yaw {:.4}, pitch {:.4})", self.yaw, self.pitch)
    }
}

/// Per-axis action range taken from the expert data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub min: GazeVector,
    pub max: GazeVector,
}

impl ActionBounds {
    pub fn new(min: GazeVector, max: GazeVector) -> Result<Self> {
        let bounds = Self { min, max };
        bounds.validate()?;
        Ok(bounds)
    }

    /// The whole environment action space.
    pub fn environment() -> Self {
        Self {
            min: GazeVector::new(-ACTION_LIMIT, -ACTION_LIMIT),
            max: GazeVector::new(ACTION_LIMIT, ACTION_LIMIT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::NonFinite("action bounds".into()));
        }
        if self.min.yaw > self.max.yaw || self.min.pitch > self.max.pitch {
            return Err(Error::Invalid(format!(
                "action bounds min {} exceeds max {}",
                self.min, self.max
            )));
        }
        let lim = ACTION_LIMIT;
        if [self.min.yaw, self.min.pitch, self.max.yaw, self.max.pitch]
            .iter()
            .any(|v| v.abs() > lim)
        {
            return Err(Error::Invalid("action bounds exceed [-pi/2, pi/2]".into()));
        }
        Ok(())
    }

    pub fn clip(&self, action: Action) -> Action {
        action.clamp(self.min, self.max)
    }

    pub fn contains(&self, action: Action) -> bool {
        (self.min.yaw..=self.max.yaw).contains(&action.yaw)
            && (self.min.pitch..=self.max.pitch).contains(&action.pitch)
    }

    pub fn center(&self) -> GazeVector {
        (self.min + self.max) * 0.5
    }

    pub fn half_width(&self) -> GazeVector {
        (self.max - self.min) * 0.5
    }
}
