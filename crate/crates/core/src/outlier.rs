//! Geometric plausibility check of objects against their size priors.
//!
//! The horizon `l = K^-T n` is the image of the road plane's points at infinity. An
//! upright object standing on the road spans `h_obj` pixels while its lowest pixel
//! sits `h_cam` pixels below the horizon; by similar triangles its metric height is
//! roughly `h_obj / h_cam` times the camera height.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::masks::ObjectInstance;

/// Default relative-gap threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// Image line `a·u + b·v + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HorizonLine {
    /// Unsigned Euclidean distance in pixels.
    pub fn distance(&self, u: f64, v: f64) -> f64 {
        (self.a * u + self.b * v + self.c).abs() / self.a.hypot(self.b)
    }
}

pub fn horizon_line(intr: &Intrinsics, road_normal: &Vector3<f64>) -> Result<HorizonLine> {
    let n = road_normal;
    if n.x.abs() < 1e-9 && n.y.abs() < 1e-9 {
        return Err(Error::HorizonAtInfinity);
    }
    let a = n.x / intr.fx;
    let b = n.y / intr.fy;
    let c = n.z - intr.cx * a - intr.cy * b;
    Ok(HorizonLine { a, b, c })
}

/// Metric height estimate `(h_obj / h_cam) · H*` from the bounding box height and the
/// largest mask-pixel distance to the horizon.
pub fn approx_object_height(
    instance: &ObjectInstance,
    horizon: &HorizonLine,
    camera_height: f64,
) -> Result<f64> {
    if !(camera_height > 0.0) {
        return Err(Error::invalid(format!(
            "camera height must be positive, got {camera_height}"
        )));
    }
    let h_cam = instance
        .pixels()
        .iter()
        .map(|&(u, v)| horizon.distance(u as f64, v as f64))
        .fold(0.0, f64::max);
    if h_cam < 1.0 {
        return Err(Error::Degenerate(format!(
            "object {} lies on the horizon",
            instance.id
        )));
    }
    let h_obj = instance.bbox().height() as f64;
    Ok(h_obj / h_cam * camera_height)
}

/// Relative gap `|prior - approx| / prior`.
pub fn relative_gap(prior: f64, approx: f64) -> f64 {
    (prior - approx).abs() / prior
}

/// An object awaiting the plausibility check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlausibilityCandidate {
    pub id: u32,
    pub prior: f64,
    pub approx: f64,
}

/// Ids of the objects whose relative gap does not exceed `threshold`.
pub fn filter_outliers(candidates: &[PlausibilityCandidate], threshold: f64) -> Result<Vec<u32>> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    Ok(candidates
        .iter()
        .filter(|c| !(relative_gap(c.prior, c.approx) > threshold))
        .map(|c| c.id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 320.0, 96.0).unwrap()
    }

    #[test]
    fn level_camera_horizon_is_principal_row() {
        let l = horizon_line(&intr(), &Vector3::new(0.0, -1.0, 0.0)).unwrap();
        assert!((l.a).abs() < 1e-15);
        assert!((l.b + 1.0 / 500.0).abs() < 1e-15);
        assert!((l.c - 96.0 / 500.0).abs() < 1e-15);
        assert!(l.distance(17.0, 96.0) < 1e-12);
        assert!((l.distance(17.0, 151.0) - 55.0).abs() < 1e-9);
    }

    #[test]
    fn flipped_normal_gives_same_line() {
        let n = Vector3::new(0.05, -0.99, 0.1).normalize();
        let a = horizon_line(&intr(), &n).unwrap();
        let b = horizon_line(&intr(), &-n).unwrap();
        for (u, v) in [(0.0, 0.0), (100.0, 50.0), (600.0, 180.0)] {
            assert!((a.distance(u, v) - b.distance(u, v)).abs() < 1e-9);
        }
    }

    #[test]
    fn optical_axis_normal_is_degenerate() {
        assert!(matches!(
            horizon_line(&intr(), &Vector3::new(0.0, 0.0, 1.0)),
            Err(Error::HorizonAtInfinity)
        ));
    }

    fn column(top: usize, bottom: usize) -> ObjectInstance {
        ObjectInstance::from_pixels(1, "car", (top..=bottom).map(|v| (300, v)).collect()).unwrap()
    }

    #[test]
    fn similar_triangles() {
        let l = horizon_line(&intr(), &Vector3::new(0.0, -1.0, 0.0)).unwrap();
        // 50 rows tall, lowest row 55 px below the horizon
        let h = approx_object_height(&column(102, 151), &l, 1.65).unwrap();
        assert!((h - 1.5).abs() < 1e-12);
        // h_obj == h_cam returns the camera height
        let h = approx_object_height(&column(97, 151), &l, 1.65).unwrap();
        assert!((h - 1.65).abs() < 1e-12);
        assert!(approx_object_height(&column(96, 96), &l, 1.65).is_err());
    }

    #[test]
    fn strict_threshold() {
        let c = |id, prior, approx| PlausibilityCandidate { id, prior, approx };
        let kept = filter_outliers(
            &[
                c(1, 1.5, 1.5),
                c(2, 1.5, 1.0),
                c(3, 1.25, 1.0),
                c(4, 1.0, 1.25),
            ],
            0.2,
        )
        .unwrap();
        // ids 3 and 4 sit exactly on the 0.2 boundary
        assert_eq!(kept, vec![1, 3]);
        assert!(relative_gap(1.0, 1.25) > 0.2);
        assert!(filter_outliers(&[], 0.0).is_err());
    }

    #[test]
    fn invariant_to_common_rescaling() {
        let c = |id, prior: f64, approx: f64, k: f64| PlausibilityCandidate {
            id,
            prior: prior * k,
            approx: approx * k,
        };
        for k in [0.5, 2.0, 7.0] {
            let kept = filter_outliers(
                &[c(1, 1.5, 1.4, k), c(2, 1.5, 1.1, k), c(3, 1.4, 1.7, k)],
                0.2,
            )
            .unwrap();
            assert_eq!(kept, vec![1]);
        }
    }
}
