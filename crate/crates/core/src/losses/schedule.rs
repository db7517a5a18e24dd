use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss weights and the epoch at which the schedule stops changing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// SSIM vs. L1 balance inside the photometric error.
    pub lambda_pe: f64,
    /// Weight of the camera-height loss.
    pub alpha: f64,
    /// Weight of the auxiliary object-depth loss.
    pub beta: f64,
    /// Floor of the auxiliary schedule, and its value after `tau_mid`.
    pub epsilon: f64,
    pub tau_mid: u32,
    /// Use `-log(τ+1)/log(τ_mid+1)` (nonpositive) for the auxiliary weight instead of
    /// `1 - log(τ+1)/log(τ_mid+1)`.
    pub literal_aux_schedule: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_pe: 0.85,
            alpha: 0.01,
            beta: 0.5,
            epsilon: 0.005,
            tau_mid: 20,
            literal_aux_schedule: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_pe > 0.0 && self.lambda_pe < 1.0) {
            return Err(Error::Config(format!(
                "lambda_pe must lie in (0, 1), got {}",
                self.lambda_pe
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_mid < 1 {
            return Err(Error::Config("tau_mid must be at least 1".into()));
        }
        Ok(())
    }
}

/// Schedule values for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleWeights {
    pub aux: f64,
    pub cam: f64,
}

/// Logarithmic hand-over from the auxiliary loss to the camera-height loss.
/// `epoch` is the zero-based training epoch.
pub fn loss_weight_schedule(epoch: u32, weights: &LossWeights) -> Result<ScheduleWeights> {
    if weights.tau_mid < 1 {
        return Err(Error::Config("tau_mid must be at least 1".into()));
    }
    if epoch > weights.tau_mid {
        return Ok(ScheduleWeights {
            aux: weights.epsilon,
            cam: 1.0,
        });
    }
    let ratio = f64::from(epoch + 1).ln() / f64::from(weights.tau_mid + 1).ln();
    let aux = if weights.literal_aux_schedule {
        -ratio
    } else {
        (1.0 - ratio).max(weights.epsilon)
    };
    Ok(ScheduleWeights { aux, cam: ratio })
}
