//! Camera height above the road from depth, normals and a road mask.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, NormalMap};
use crate::masks::RoadMask;
use crate::stats::{median, median_in_place};

/// Per-pixel camera height; defined only on road pixels with a valid normal.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    width: usize,
    height: usize,
    values: Vec<Option<f64>>,
}

impl HeightMap {
    pub fn from_values(width: usize, height: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(
                "height map size does not match its dimensions",
            ));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.values[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// A frame's camera height. `scaled` is false while it is still in the depth map's
/// arbitrary units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCameraHeight {
    pub value: f64,
    pub scaled: bool,
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `H'(p) = -p · n(p)` for every road pixel with a valid normal.
pub fn per_pixel_camera_height(
    depth: &DepthMap,
    normals: &NormalMap,
    road: &RoadMask,
    intr: &Intrinsics,
) -> Result<HeightMap> {
    let dims = depth.dims();
    check_dims(dims, (normals.width(), normals.height()))?;
    check_dims(dims, road.dims())?;
    let (w, h) = dims;
    let mut values = vec![None; w * h];
    for v in 0..h {
        for u in 0..w {
            if !road.get(u, v) {
                continue;
            }
            if let (Some(d), Some(n)) = (depth.get(u, v), normals.get(u, v)) {
                let p = intr.ray(u as f64, v as f64) * d;
                values[v * w + u] = Some(-p.dot(&n));
            }
        }
    }
    Ok(HeightMap {
        width: w,
        height: h,
        values,
    })
}

/// Median of the per-pixel heights over the road (unscaled).
pub fn frame_camera_height(heights: &HeightMap, road: &RoadMask) -> Result<FrameCameraHeight> {
    check_dims(heights.dims(), road.dims())?;
    if road.count() == 0 {
        return Err(Error::FrameUnusable("empty road mask".into()));
    }
    let mut vals: Vec<f64> = heights
        .values
        .iter()
        .zip(road.as_slice())
        .filter_map(|(h, &r)| if r { *h } else { None })
        .filter(|h| h.is_finite())
        .collect();
    let value = median_in_place(&mut vals)
        .ok_or_else(|| Error::FrameUnusable("no valid road-pixel heights".into()))?;
    if !(value > 0.0) {
        return Err(Error::FrameUnusable(format!(
            "nonpositive camera height {value}"
        )));
    }
    Ok(FrameCameraHeight {
        value,
        scaled: false,
    })
}

/// Component-wise median of the road normals, renormalized.
pub fn road_normal(normals: &NormalMap, road: &RoadMask) -> Result<Vector3<f64>> {
    check_dims((normals.width(), normals.height()), road.dims())?;
    let road_normals: Vec<Vector3<f64>> = normals
        .as_slice()
        .iter()
        .zip(road.as_slice())
        .filter_map(|(n, &r)| if r { *n } else { None })
        .collect();
    if road_normals.is_empty() {
        return Err(Error::FrameUnusable("no valid road normals".into()));
    }
    let mut med = Vector3::zeros();
    for axis in 0..3 {
        med[axis] = median(road_normals.iter().map(|n| n[axis])).unwrap_or(0.0);
    }
    let norm = med.norm();
    if !(norm > 1e-12) {
        return Err(Error::Degenerate(
            "median road normal has zero length".into(),
        ));
    }
    Ok(med / norm)
}

/// Normals, per-pixel heights, frame height and road normal computed together.
#[derive(Debug, Clone)]
pub struct RoadGeometry {
    pub normals: NormalMap,
    pub heights: HeightMap,
    pub camera_height: FrameCameraHeight,
    pub road_normal: Vector3<f64>,
}

pub fn road_geometry(depth: &DepthMap, road: &RoadMask, intr: &Intrinsics) -> Result<RoadGeometry> {
    let normals = crate::geometry::normal_map(depth, intr);
    let heights = per_pixel_camera_height(depth, &normals, road, intr)?;
    let camera_height = frame_camera_height(&heights, road)?;
    let road_normal = road_normal(&normals, road)?;
    Ok(RoadGeometry {
        normals,
        heights,
        camera_height,
        road_normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normal_map;

    fn level_ground(w: usize, h: usize, intr: &Intrinsics, cam_h: f64) -> (DepthMap, RoadMask) {
        let mut vals = vec![f64::NAN; w * h];
        let mut road = vec![false; w * h];
        for v in 0..h {
            let dv = v as f64 - intr.cy;
            if dv > 0.5 {
                for u in 0..w {
                    vals[v * w + u] = intr.fy * cam_h / dv;
                    road[v * w + u] = true;
                }
            }
        }
        (
            DepthMap::new(w, h, vals).unwrap(),
            RoadMask::new(w, h, road).unwrap(),
        )
    }

    #[test]
    fn dot_product_gives_height() {
        let p: Vector3<f64> = Vector3::new(0.0, 1.65, 10.0);
        let n = Vector3::new(0.0, -1.0, 0.0);
        assert!((-p.dot(&n) - 1.65).abs() < 1e-15);
    }

    #[test]
    fn medians_of_heights() {
        let road = RoadMask::new(3, 1, vec![true; 3]).unwrap();
        let hm = HeightMap {
            width: 3,
            height: 1,
            values: vec![Some(1.6), Some(1.7), Some(1.8)],
        };
        assert_eq!(frame_camera_height(&hm, &road).unwrap().value, 1.7);
        let hm = HeightMap {
            width: 3,
            height: 1,
            values: vec![Some(1.6), None, Some(1.8)],
        };
        let f = frame_camera_height(&hm, &road).unwrap();
        assert!((f.value - 1.7).abs() < 1e-15);
        assert!(!f.scaled);
    }

    #[test]
    fn empty_road_is_unusable() {
        let intr = Intrinsics::new(100.0, 100.0, 8.0, 2.0).unwrap();
        let (depth, _) = level_ground(16, 12, &intr, 1.5);
        let empty = RoadMask::new(16, 12, vec![false; 16 * 12]).unwrap();
        let normals = normal_map(&depth, &intr);
        let hm = per_pixel_camera_height(&depth, &normals, &empty, &intr).unwrap();
        assert!(matches!(
            frame_camera_height(&hm, &empty),
            Err(Error::FrameUnusable(_))
        ));
        assert!(matches!(
            road_normal(&normals, &empty),
            Err(Error::FrameUnusable(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let intr = Intrinsics::new(100.0, 100.0, 8.0, 2.0).unwrap();
        let (depth, _) = level_ground(16, 12, &intr, 1.5);
        let road = RoadMask::new(8, 8, vec![true; 64]).unwrap();
        let normals = normal_map(&depth, &intr);
        assert!(matches!(
            per_pixel_camera_height(&depth, &normals, &road, &intr),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn level_ground_recovers_height_and_normal() {
        let intr = Intrinsics::new(200.0, 200.0, 20.0, 3.0).unwrap();
        let (depth, road) = level_ground(40, 30, &intr, 1.65);
        let g = road_geometry(&depth, &road, &intr).unwrap();
        assert!((g.camera_height.value - 1.65).abs() < 1e-9);
        assert!((g.road_normal - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
        let all = road_geometry(&depth.scaled(3.0), &road, &intr).unwrap();
        assert!((all.camera_height.value - 3.0 * 1.65).abs() < 1e-9);
    }
}
