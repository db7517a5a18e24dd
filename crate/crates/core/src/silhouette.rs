//! Object silhouette heights above the road plane and the per-frame scale factor
//! they imply when compared against size priors.
//!
//! Orthographically projecting an object's points onto any plane containing the
//! road normal preserves their distance to the road plane, so the silhouette height
//! is simply the largest height-above-plane over the object's pixels.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::camheight::FrameCameraHeight;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics};
use crate::masks::ObjectInstance;
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteMeasurement {
    pub id: u32,
    /// Height in the depth map's units.
    pub height: f64,
    pub valid: bool,
}

impl SilhouetteMeasurement {
    fn invalid(id: u32) -> Self {
        Self {
            id,
            height: f64::NAN,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScale {
    pub scale: f64,
    pub inliers: usize,
}

/// Height above the road plane `{x : n·x + cam_height = 0}` of the object's highest
/// visible point.
pub fn silhouette_height(
    depth: &DepthMap,
    intr: &Intrinsics,
    instance: &ObjectInstance,
    road_normal: &Vector3<f64>,
    camera_height: f64,
) -> SilhouetteMeasurement {
    let top = instance
        .pixels()
        .iter()
        .filter(|&&(u, v)| u < depth.width() && v < depth.height())
        .filter_map(|&(u, v)| {
            depth
                .get(u, v)
                .map(|d| road_normal.dot(&(intr.ray(u as f64, v as f64) * d)) + camera_height)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if top > 0.0 && top.is_finite() {
        SilhouetteMeasurement {
            id: instance.id,
            height: top,
            valid: true,
        }
    } else {
        SilhouetteMeasurement::invalid(instance.id)
    }
}

/// Median over objects of `prior / silhouette height`. Objects without a valid
/// measurement or without a prior are skipped.
pub fn frame_scale_factor(
    measurements: &[SilhouetteMeasurement],
    priors: &BTreeMap<u32, f64>,
) -> Result<FrameScale> {
    let ratios: Vec<f64> = measurements
        .iter()
        .filter(|m| m.valid && m.height > 0.0)
        .filter_map(|m| priors.get(&m.id).map(|p| p / m.height))
        .filter(|s| s.is_finite() && *s > 0.0)
        .collect();
    let inliers = ratios.len();
    let scale = median(ratios).ok_or(Error::NoScale)?;
    Ok(FrameScale { scale, inliers })
}

/// Metric camera height `s · H'`.
pub fn scaled_camera_height(unscaled: FrameCameraHeight, scale: FrameScale) -> FrameCameraHeight {
    FrameCameraHeight {
        value: scale.scale * unscaled.value,
        scaled: true,
    }
}
