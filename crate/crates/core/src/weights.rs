use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `alpha + beta + gamma_accel == 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Learnable reward weights `[alpha, beta, gamma_accel]`: jerk, near-ground
/// speed and acceleration penalties. Always strictly positive and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct RewardWeights {
    alpha: f64,
    beta: f64,
    gamma_accel: f64,
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64, gamma_accel: f64) -> Result<Self> {
        let ok = alpha > 0.0
            && beta > 0.0
            && gamma_accel > 0.0
            && ((alpha + beta + gamma_accel) - 1.0).abs() <= SIMPLEX_TOLERANCE;
        if ok {
            Ok(Self {
                alpha,
                beta,
                gamma_accel,
            })
        } else {
            Err(Error::OffSimplex {
                alpha,
                beta,
                gamma: gamma_accel,
            })
        }
    }

    /// Builds weights from the free coordinates; `gamma_accel = 1 - alpha - beta`.
    pub fn from_free(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1.0 - alpha - beta)
    }

    /// Scales a positive vector onto the simplex.
    pub fn normalized(raw: [f64; 3]) -> Result<Self> {
        let total = raw[0] + raw[1] + raw[2];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::OffSimplex {
                alpha: raw[0],
                beta: raw[1],
                gamma: raw[2],
            });
        }
        let alpha = raw[0] / total;
        let beta = raw[1] / total;
        // Derive the last component so the sum is exact up to one rounding.
        Self::new(alpha, beta, 1.0 - alpha - beta)
    }

    pub fn centroid() -> Self {
        Self::from_free(1.0 / 3.0, 1.0 / 3.0).expect("centroid is on the simplex")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma_accel(&self) -> f64 {
        self.gamma_accel
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma_accel]
    }

    /// `(alpha, beta)`.
    pub fn free(&self) -> [f64; 2] {
        [self.alpha, self.beta]
    }

    pub fn min_component(&self) -> f64 {
        self.alpha.min(self.beta).min(self.gamma_accel)
    }
}

impl TryFrom<[f64; 3]> for RewardWeights {
    type Error = Error;

    fn try_from(w: [f64; 3]) -> Result<Self> {
        Self::new(w[0], w[1], w[2])
    }
}

impl From<RewardWeights> for [f64; 3] {
    fn from(w: RewardWeights) -> Self {
        w.as_array()
    }
}
