//! Depth-supervising losses: camera height against the pseudo label, and the rough
//! object-depth prior.

use crate::camheight::HeightMap;
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics};
use crate::masks::{ObjectInstance, RoadMask};

/// Mean absolute deviation of the per-pixel camera height from `target` over road
/// pixels with a defined height.
pub fn camera_height_loss(heights: &HeightMap, road: &RoadMask, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::invalid(format!(
            "target camera height must be positive, got {target}"
        )));
    }
    let (sum, n) = heights
        .as_slice()
        .iter()
        .zip(road.as_slice())
        .filter_map(|(h, &r)| if r { *h } else { None })
        .fold((0.0, 0usize), |(s, n), h| (s + (h - target).abs(), n + 1));
    if n == 0 {
        return Err(Error::UndefinedLoss(
            "no road pixels with a camera height".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// An inlier object and its metric height prior.
#[derive(Debug, Clone, Copy)]
pub struct AuxObject<'a> {
    pub instance: &'a ObjectInstance,
    pub prior: f64,
}

impl AuxObject<'_> {
    /// Depth at which an upright object of the prior height spans its bounding box.
    pub fn approx_depth(&self, intr: &Intrinsics) -> f64 {
        self.prior / self.instance.bbox().height() as f64 * intr.fy
    }
}

/// `(1/K) Σ_k mean_{p∈M_k} |D(p) - D_k|` over inlier objects. `None` when no object
/// has a valid depth pixel.
pub fn aux_geometric_loss(
    depth: &DepthMap,
    objects: &[AuxObject<'_>],
    intr: &Intrinsics,
) -> Option<f64> {
    let per_object: Vec<f64> = objects
        .iter()
        .filter_map(|obj| {
            let target = obj.approx_depth(intr);
            let (sum, n) = obj
                .instance
                .pixels()
                .iter()
                .filter_map(|&(u, v)| depth.get(u, v))
                .fold((0.0, 0usize), |(s, n), d| (s + (d - target).abs(), n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    if per_object.is_empty() {
        None
    } else {
        Some(per_object.iter().sum::<f64>() / per_object.len() as f64)
    }
}
