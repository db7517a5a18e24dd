//! Recover a sequence's global depth scale by descending the geometric objective
//! `α·λ_cam·L_cam + β·λ_aux·L_aux` over a single log-scale parameter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{normal_map, DepthMap, NormalMap};
use crate::io::config::Config;
use crate::losses::{
    loss_gradient, loss_weight_schedule, AuxObject, GeometricLossInputs, Gradient, GradientMode,
};
use crate::masks::{ObjectInstance, RoadMask};
use crate::pipeline::{analyze_frame, select_inliers, SequenceData};

/// Consecutive loss increases that count as divergence.
pub const DIVERGENCE_STEPS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    /// Factor to multiply the input depth by.
    pub scale: f64,
    pub log_scale: f64,
    pub steps: u32,
    pub converged: bool,
    /// Objective before the first step and after each step.
    pub losses: Vec<f64>,
}

struct FrameProblem<'a> {
    depth: &'a DepthMap,
    road: &'a RoadMask,
    normals: NormalMap,
    objects: Vec<(&'a ObjectInstance, f64)>,
}

/// Sequence objective and its derivative with respect to the log-scale `s`.
fn evaluate(
    problems: &[FrameProblem<'_>],
    base: &GeometricLossInputs<'_>,
    s: f64,
) -> Result<(f64, f64)> {
    let k = s.exp();
    let per_frame: Vec<Result<(f64, f64)>> = problems
        .par_iter()
        .map(|p| {
            let aux: Vec<AuxObject> = p
                .objects
                .iter()
                .map(|&(instance, prior)| AuxObject { instance, prior })
                .collect();
            let inputs = GeometricLossInputs {
                road: p.road,
                objects: &aux,
                normals: Some(&p.normals),
                ..*base
            };
            let (loss, grad) =
                loss_gradient(&p.depth.scaled(k), &inputs, GradientMode::GlobalLogScale)?;
            match grad {
                Gradient::LogScale(g) => Ok((loss.value, g)),
                Gradient::PerPixel(_) => unreachable!("log-scale mode"),
            }
        })
        .collect();
    let mut sum = (0.0, 0.0);
    for r in per_frame {
        let (l, g) = r?;
        sum.0 += l;
        sum.1 += g;
    }
    let n = problems.len() as f64;
    Ok((sum.0 / n, sum.1 / n))
}

/// Sign-based descent with an adaptive step: the step grows by 1.2 while the
/// derivative keeps its sign and halves when it flips.
pub fn scale_recovery_refine(
    seq: &SequenceData,
    config: &Config,
    hstar: Option<f64>,
) -> Result<RefineResult> {
    config.validate()?;
    let rc = &config.refine;
    if let Some(h) = hstar {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "pseudo camera height must be positive, got {h}"
            )));
        }
    }
    let intr = seq.intrinsics;
    let mut problems = Vec::new();
    for f in &seq.frames {
        let Ok(geom) = analyze_frame(f, &intr) else {
            continue;
        };
        let (inliers, _) = select_inliers(&geom.objects, hstar, config.pipeline.outlier_threshold)?;
        let objects = f
            .instances
            .iter()
            .filter(|i| inliers.contains(&i.id))
            .filter_map(|i| Some((i, geom.objects.iter().find(|o| o.id == i.id)?.prior?)))
            .collect();
        problems.push(FrameProblem {
            depth: &f.depth,
            road: &f.road,
            normals: normal_map(&f.depth, &intr),
            objects,
        });
    }
    if problems.is_empty() {
        return Err(Error::FrameUnusable(format!(
            "no usable frame in '{}'",
            seq.id
        )));
    }
    if hstar.is_none() && problems.iter().all(|p| p.objects.is_empty()) {
        return Err(Error::invalid(
            "refinement needs a pseudo camera height or objects with priors",
        ));
    }
    let epoch = rc.schedule_epoch.unwrap_or(config.losses.tau_mid);
    let schedule = loss_weight_schedule(epoch, &config.losses)?;
    let base =
        GeometricLossInputs::new(intr, problems[0].road, hstar, &[], &config.losses, schedule);

    let mut s = 0.0;
    let mut step = rc.learning_rate;
    let (mut loss, mut grad) = evaluate(&problems, &base, s)?;
    let mut losses = vec![loss];
    let mut prev_sign = 0.0;
    let mut increases = 0;
    let mut converged = false;
    let mut steps = 0;
    while steps < rc.steps {
        let sign = if grad > 0.0 {
            1.0
        } else if grad < 0.0 {
            -1.0
        } else {
            converged = true;
            break;
        };
        if prev_sign != 0.0 {
            step *= if sign == prev_sign { 1.2 } else { 0.5 };
        }
        if step < rc.tolerance {
            converged = true;
            break;
        }
        prev_sign = sign;
        s -= sign * step;
        steps += 1;
        let (l, g) = evaluate(&problems, &base, s)?;
        increases = if l > loss { increases + 1 } else { 0 };
        if increases >= DIVERGENCE_STEPS {
            return Err(Error::Diverged(format!(
                "loss rose for {DIVERGENCE_STEPS} consecutive steps (log-scale {s}, loss {l}, step {step})"
            )));
        }
        loss = l;
        grad = g;
        losses.push(l);
    }
    Ok(RefineResult {
        scale: s.exp(),
        log_scale: s,
        steps,
        converged,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::masks::RoadMask;
    use crate::pipeline::FrameData;
    use crate::size_prior::PriorSource;

    /// Road-only frames of a level camera `cam_h` above a flat road, depth times `k`.
    fn road_sequence(cam_h: f64, k: f64) -> SequenceData {
        let (w, h) = (40, 24);
        let intr = Intrinsics::new(50.0, 50.0, 19.5, -2.0).unwrap();
        let frame = |i: usize| FrameData {
            id: format!("{i}"),
            depth: DepthMap::new(
                w,
                h,
                (0..w * h)
                    .map(|p| k * intr.fy * cam_h / ((p / w) as f64 - intr.cy))
                    .collect(),
            )
            .unwrap(),
            road: RoadMask::new(w, h, vec![true; w * h]).unwrap(),
            instances: Vec::new(),
            priors: PriorSource::fixed(1.5).unwrap(),
            image: None,
        };
        SequenceData {
            id: "road".into(),
            intrinsics: intr,
            frames: (0..3).map(frame).collect(),
            skipped: Vec::new(),
        }
    }

    #[test]
    fn recovers_scale_from_camera_height_alone() {
        let cfg = Config::default();
        let r = scale_recovery_refine(&road_sequence(1.6, 0.5), &cfg, Some(1.6)).unwrap();
        assert!((r.scale - 2.0).abs() < 2e-3, "scale {}", r.scale);
        assert!(r.converged && r.steps <= cfg.refine.steps);
        assert_eq!(r.losses.len(), r.steps as usize + 1);
    }

    #[test]
    fn stays_at_the_optimum() {
        let r =
            scale_recovery_refine(&road_sequence(1.6, 1.0), &Config::default(), Some(1.6)).unwrap();
        assert!((r.scale - 1.0).abs() < 1e-3, "scale {}", r.scale);
    }

    #[test]
    fn small_steps_decrease_the_loss_monotonically() {
        let mut cfg = Config::default();
        cfg.refine.learning_rate = 1e-3;
        cfg.refine.steps = 15;
        let r = scale_recovery_refine(&road_sequence(1.6, 0.5), &cfg, Some(1.6)).unwrap();
        assert_eq!(r.steps, 15);
        assert!(r.losses.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn needs_a_target() {
        let cfg = Config::default();
        let seq = road_sequence(1.6, 1.0);
        assert!(matches!(
            scale_recovery_refine(&seq, &cfg, None),
            Err(Error::InvalidInput(_))
        ));
        assert!(scale_recovery_refine(&seq, &cfg, Some(-1.0)).is_err());
    }
}
