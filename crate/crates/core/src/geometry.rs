//! Pinhole camera model, back-projection and per-pixel surface normals.
//!
//! Camera frame convention: x right, y down, z forward. Pixel `(u, v)` refers to the
//! center of column `u`, row `v`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in the camera frame, meters.
pub type Point3 = Vector3<f64>;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive and finite (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(())
    }

    /// The calibration matrix K.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Viewing ray through pixel `(u, v)`, normalized to unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Lift pixel `(u, v)` at z-depth `depth` into the camera frame.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3> {
        if !is_valid_depth(depth) {
            return Err(Error::invalid(format!(
                "depth must be positive and finite, got {depth}"
            )));
        }
        Ok(self.ray(u, v) * depth)
    }

    /// Project a camera-frame point to `([u, v], depth)`. The pixel may fall outside
    /// the image; bounds are the caller's business.
    pub fn project(&self, point: &Point3) -> Result<([f64; 2], f64)> {
        let z = point.z;
        if !(z > 0.0) || !point.iter().all(|c| c.is_finite()) {
            return Err(Error::BehindCamera { z });
        }
        Ok((
            [
                self.fx * point.x / z + self.cx,
                self.fy * point.y / z + self.cy,
            ],
            z,
        ))
    }

    /// Uniformly rescale the pixel grid by `scale` (pixel centers at integer coordinates).
    pub fn resized(&self, scale: f64) -> Self {
        Self {
            fx: self.fx * scale,
            fy: self.fy * scale,
            cx: (self.cx + 0.5) * scale - 0.5,
            cy: (self.cy + 0.5) * scale - 0.5,
        }
    }
}

/// Nonpositive, NaN and infinite depths mark a pixel invalid.
#[inline]
pub fn is_valid_depth(d: f64) -> bool {
    d > 0.0 && d.is_finite()
}

/// Dense per-pixel z-depth in meters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth map must be non-empty"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            values: vec![depth; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Raw value at `(u, v)`, whether valid or not.
    #[inline]
    pub fn raw(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    /// Depth at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.raw(u, v);
        is_valid_depth(d).then_some(d)
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        is_valid_depth(self.raw(u, v))
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| is_valid_depth(**d)).count()
    }

    /// Per-pixel multiplication by `k`; invalid pixels stay invalid for `k > 0`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|d| d * k).collect(),
        }
    }

    /// Back-project every valid pixel.
    pub fn points(&self, intr: &Intrinsics) -> Vec<Option<Point3>> {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .map(|(i, &d)| is_valid_depth(d).then(|| intr.ray((i % w) as f64, (i / w) as f64) * d))
            .collect()
    }
}

/// Per-pixel unit normals; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Option<Vector3<f64>>>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        self.normals[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[Option<Vector3<f64>>] {
        &self.normals
    }

    pub fn valid_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// 8-neighborhood offsets `(du, dv)` counterclockwise from East (north is `-v`).
pub(crate) const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),   // E
    (1, -1),  // NE
    (0, -1),  // N
    (-1, -1), // NW
    (-1, 0),  // W
    (-1, 1),  // SW
    (0, 1),   // S
    (1, 1),   // SE
];

/// Index pairs into [`NEIGHBORS`] whose pixel offsets are orthogonal.
pub(crate) const ORTHOGONAL_PAIRS: [(usize, usize); 8] = [
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
    (5, 7),
    (6, 0),
    (7, 1),
];

/// Unnormalized normal at an interior pixel: sum of the eight cross products of
/// orthogonal neighbor differences. `None` if any neighbor is missing.
pub(crate) fn accumulated_normal(
    points: &[Option<Point3>],
    width: usize,
    height: usize,
    u: usize,
    v: usize,
) -> Option<Vector3<f64>> {
    if u == 0 || v == 0 || u + 1 >= width || v + 1 >= height {
        return None;
    }
    let center = points[v * width + u]?;
    let mut diffs = [Vector3::zeros(); 8];
    for (slot, (du, dv)) in diffs.iter_mut().zip(NEIGHBORS) {
        let nu = (u as isize + du) as usize;
        let nv = (v as isize + dv) as usize;
        *slot = points[nv * width + nu]? - center;
    }
    let mut acc = Vector3::zeros();
    for (a, b) in ORTHOGONAL_PAIRS {
        acc += diffs[a].cross(&diffs[b]);
    }
    Some(acc)
}

/// Normalize and orient toward the camera (`n · p < 0`). `None` for a zero vector.
pub(crate) fn orient_normal(acc: Vector3<f64>, center: &Point3) -> Option<Vector3<f64>> {
    let norm = acc.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let n = acc / norm;
    Some(if n.dot(center) > 0.0 { -n } else { n })
}

/// Per-pixel normals from the 8-neighborhood cross-product sum. Border pixels and
/// pixels with any invalid neighbor are left undefined.
pub fn normal_map(depth: &DepthMap, intr: &Intrinsics) -> NormalMap {
    let (w, h) = depth.dims();
    let points = depth.points(intr);
    let mut normals = vec![None; w * h];
    normals.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, slot) in row.iter_mut().enumerate() {
            *slot = accumulated_normal(&points, w, h, u, v).and_then(|acc| {
                let center = points[v * w + u].expect("center checked by accumulator");
                orient_normal(acc, &center)
            });
        }
    });
    NormalMap {
        width: w,
        height: h,
        normals,
    }
}
