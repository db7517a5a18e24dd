//! Training losses as pure functions of depth, images and poses, plus the epoch
//! schedule that balances them.

mod geometric;
mod gradient;
mod image;
mod photometric;
mod schedule;
mod smoothness;

pub use geometric::{aux_geometric_loss, camera_height_loss, AuxObject};
pub use gradient::{
    geometric_loss, loss_gradient, GeometricLoss, GeometricLossInputs, Gradient, GradientMode,
};
pub use image::{Image, RelativePose};
pub use photometric::{
    photometric_error, reconstruction_loss, ssim, warp_coords, warp_view, Warped, SSIM_C1, SSIM_C2,
};
pub use schedule::{loss_weight_schedule, LossWeights, ScheduleWeights};
pub use smoothness::smoothness_loss;

use crate::error::{Error, Result};

/// Component losses for one frame; `None` marks a term that could not be evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub rec: Option<f64>,
    pub sm: Option<f64>,
    pub cam: Option<f64>,
    pub aux: Option<f64>,
}

/// Per-term values (absent terms as 0), schedule weights and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub sm: f64,
    pub cam: f64,
    pub aux: f64,
    pub lambda_aux: f64,
    pub lambda_cam: f64,
    pub total: f64,
}

/// `α·λ_cam·L_cam + β·λ_aux·L_aux + L_sm + L_rec` at zero-based epoch `epoch`.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, epoch: u32) -> Result<LossBreakdown> {
    for (name, t) in [
        ("rec", terms.rec),
        ("sm", terms.sm),
        ("cam", terms.cam),
        ("aux", terms.aux),
    ] {
        if let Some(v) = t {
            if v.is_nan() {
                return Err(Error::UndefinedLoss(format!("L_{name} is NaN")));
            }
        }
    }
    let sched = loss_weight_schedule(epoch, weights)?;
    let rec = terms.rec.unwrap_or(0.0);
    let sm = terms.sm.unwrap_or(0.0);
    let cam = terms.cam.unwrap_or(0.0);
    let aux = terms.aux.unwrap_or(0.0);
    let total = weights.alpha * sched.cam * cam + weights.beta * sched.aux * aux + sm + rec;
    Ok(LossBreakdown {
        rec,
        sm,
        cam,
        aux,
        lambda_aux: sched.aux,
        lambda_cam: sched.cam,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_of_zero_terms() {
        let w = LossWeights::default();
        let terms = LossTerms {
            rec: Some(0.0),
            sm: Some(0.0),
            cam: Some(0.0),
            aux: Some(0.0),
        };
        assert_eq!(total_loss(&terms, &w, 3).unwrap().total, 0.0);
        assert_eq!(total_loss(&LossTerms::default(), &w, 3).unwrap().total, 0.0);
    }

    #[test]
    fn camera_term_after_tau_mid() {
        let w = LossWeights::default();
        assert_eq!((w.alpha, w.beta), (0.01, 0.5));
        let terms = LossTerms {
            cam: Some(1.0),
            ..Default::default()
        };
        for epoch in [20, 21, 40] {
            let b = total_loss(&terms, &w, epoch).unwrap();
            assert!((b.total - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn breakdown_identity() {
        let w = LossWeights::default();
        let terms = LossTerms {
            rec: Some(0.12),
            sm: Some(0.03),
            cam: Some(0.4),
            aux: Some(2.5),
        };
        let b = total_loss(&terms, &w, 7).unwrap();
        let expected =
            w.alpha * b.lambda_cam * b.cam + w.beta * b.lambda_aux * b.aux + b.sm + b.rec;
        assert_eq!(b.total, expected);
    }

    #[test]
    fn nan_component_is_rejected() {
        let terms = LossTerms {
            sm: Some(f64::NAN),
            ..Default::default()
        };
        assert!(total_loss(&terms, &LossWeights::default(), 0).is_err());
    }
}
