//! Analytic gradients of the depth-supervising part of the objective,
//! `α·λ_cam·L_cam + β·λ_aux·L_aux`, with respect to depth.
//!
//! Per-pixel camera heights are rebuilt from the evaluated depth, so `L_cam` depends
//! on every pixel of each road pixel's 8-neighborhood through its normal. At the
//! kinks of `|·|` the subgradient 0 is used. Accumulation runs in a fixed order.

use nalgebra::Vector3;

use super::geometric::{aux_geometric_loss, camera_height_loss, AuxObject};
use super::schedule::{LossWeights, ScheduleWeights};
use crate::camheight::per_pixel_camera_height;
use crate::error::{Error, Result};
use crate::geometry::{
    accumulated_normal, normal_map, DepthMap, Intrinsics, NormalMap, NEIGHBORS, ORTHOGONAL_PAIRS,
};
use crate::masks::RoadMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// With respect to every depth pixel.
    PerPixel,
    /// With respect to `s` in `D = e^s · D0`, evaluated at `s = 0`.
    GlobalLogScale,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gradient {
    PerPixel(Vec<f64>),
    LogScale(f64),
}

/// Everything besides depth that the geometric objective needs.
#[derive(Debug, Clone, Copy)]
pub struct GeometricLossInputs<'a> {
    pub intr: Intrinsics,
    pub road: &'a RoadMask,
    /// Pseudo camera height; `None` disables the camera-height term.
    pub target_height: Option<f64>,
    pub objects: &'a [AuxObject<'a>],
    /// `α · λ_cam`.
    pub weight_cam: f64,
    /// `β · λ_aux`.
    pub weight_aux: f64,
    /// Normals of a depth map proportional to the one being evaluated. Normals are
    /// invariant to global rescaling, so this avoids recomputing them during a
    /// log-scale search. Ignored by [`GradientMode::PerPixel`].
    pub normals: Option<&'a NormalMap>,
}

impl<'a> GeometricLossInputs<'a> {
    pub fn new(
        intr: Intrinsics,
        road: &'a RoadMask,
        target_height: Option<f64>,
        objects: &'a [AuxObject<'a>],
        weights: &LossWeights,
        schedule: ScheduleWeights,
    ) -> Self {
        Self {
            intr,
            road,
            target_height,
            objects,
            weight_cam: weights.alpha * schedule.cam,
            weight_aux: weights.beta * schedule.aux,
            normals: None,
        }
    }
}

/// Value of the geometric objective and its two terms (unweighted).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLoss {
    pub value: f64,
    pub cam: Option<f64>,
    pub aux: Option<f64>,
}

pub fn geometric_loss(depth: &DepthMap, inputs: &GeometricLossInputs<'_>) -> Result<GeometricLoss> {
    let cam = match inputs.target_height {
        Some(target) => {
            let owned;
            let normals = match inputs.normals {
                Some(n) => n,
                None => {
                    owned = normal_map(depth, &inputs.intr);
                    &owned
                }
            };
            let heights = per_pixel_camera_height(depth, normals, inputs.road, &inputs.intr)?;
            match camera_height_loss(&heights, inputs.road, target) {
                Ok(l) => Some(l),
                Err(Error::UndefinedLoss(_)) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    let aux = aux_geometric_loss(depth, inputs.objects, &inputs.intr);
    if cam.is_none() && aux.is_none() {
        return Err(Error::UndefinedLoss(
            "neither camera-height nor auxiliary term is defined".into(),
        ));
    }
    let value = inputs.weight_cam * cam.unwrap_or(0.0) + inputs.weight_aux * aux.unwrap_or(0.0);
    if !value.is_finite() {
        return Err(Error::UndefinedLoss(format!(
            "non-finite geometric loss {value}"
        )));
    }
    Ok(GeometricLoss { value, cam, aux })
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn loss_gradient(
    depth: &DepthMap,
    inputs: &GeometricLossInputs<'_>,
    mode: GradientMode,
) -> Result<(GeometricLoss, Gradient)> {
    let loss = match mode {
        GradientMode::PerPixel => geometric_loss(
            depth,
            &GeometricLossInputs {
                normals: None,
                ..*inputs
            },
        )?,
        GradientMode::GlobalLogScale => geometric_loss(depth, inputs)?,
    };
    let grad = match mode {
        GradientMode::PerPixel => {
            let mut g = vec![0.0; depth.values().len()];
            if let (Some(target), Some(_)) = (inputs.target_height, loss.cam) {
                cam_pixel_gradient(depth, inputs, target, &mut g);
            }
            if loss.aux.is_some() {
                aux_pixel_gradient(depth, inputs, &mut g);
            }
            Gradient::PerPixel(g)
        }
        GradientMode::GlobalLogScale => {
            Gradient::LogScale(log_scale_gradient(depth, inputs, &loss)?)
        }
    };
    Ok((loss, grad))
}

/// Pixel coordinates and unnormalized normal.
type RoadNormal = (usize, usize, Vector3<f64>);

/// Road pixels whose camera height is defined, with their unnormalized normals.
fn road_normals(
    depth: &DepthMap,
    intr: &Intrinsics,
    road: &RoadMask,
) -> (Vec<Option<Vector3<f64>>>, Vec<RoadNormal>) {
    let (w, h) = depth.dims();
    let points = depth.points(intr);
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if !road.get(u, v) {
                continue;
            }
            if let Some(acc) = accumulated_normal(&points, w, h, u, v) {
                if acc.norm() > 0.0 && acc.norm().is_finite() {
                    out.push((u, v, acc));
                }
            }
        }
    }
    (points, out)
}

fn cam_pixel_gradient(
    depth: &DepthMap,
    inputs: &GeometricLossInputs<'_>,
    target: f64,
    grad: &mut [f64],
) {
    let intr = &inputs.intr;
    let w = depth.width();
    let (points, pixels) = road_normals(depth, intr, inputs.road);
    if pixels.is_empty() {
        return;
    }
    let scale = inputs.weight_cam / pixels.len() as f64;
    for &(u, v, acc) in &pixels {
        let center_idx = v * w + u;
        let center = points[center_idx].expect("road normal implies valid center");
        let norm = acc.norm();
        let unit = acc / norm;
        let orient = if unit.dot(&center) > 0.0 { -1.0 } else { 1.0 };
        let height = -orient * center.dot(&unit);
        let s = sign(height - target);
        if s == 0.0 {
            continue;
        }
        let coef = scale * s;

        let r_center = intr.ray(u as f64, v as f64);
        let mut idx = [0usize; 8];
        let mut rays = [Vector3::zeros(); 8];
        let mut diffs = [Vector3::zeros(); 8];
        for (k, (du, dv)) in NEIGHBORS.iter().enumerate() {
            let nu = (u as isize + du) as usize;
            let nv = (v as isize + dv) as usize;
            idx[k] = nv * w + nu;
            rays[k] = intr.ray(nu as f64, nv as f64);
            diffs[k] = points[idx[k]].expect("neighbors valid") - center;
        }
        // d(acc)/d(depth) for each neighbor and for the center
        let mut d_acc = [Vector3::zeros(); 8];
        let mut d_acc_center = Vector3::zeros();
        for (a, b) in ORTHOGONAL_PAIRS {
            d_acc[a] += rays[a].cross(&diffs[b]);
            d_acc[b] += diffs[a].cross(&rays[b]);
            d_acc_center -= r_center.cross(&diffs[b]) + diffs[a].cross(&r_center);
        }
        // center · d(unit) = g · d(acc)
        let g = (center - unit * unit.dot(&center)) / norm;
        for k in 0..8 {
            grad[idx[k]] += coef * (-orient * g.dot(&d_acc[k]));
        }
        grad[center_idx] += coef * (-orient * (r_center.dot(&unit) + g.dot(&d_acc_center)));
    }
}

fn aux_pixel_gradient(depth: &DepthMap, inputs: &GeometricLossInputs<'_>, grad: &mut [f64]) {
    let w = depth.width();
    let per_object: Vec<(f64, Vec<(usize, f64)>)> = inputs
        .objects
        .iter()
        .filter_map(|obj| {
            let target = obj.approx_depth(&inputs.intr);
            let px: Vec<(usize, f64)> = obj
                .instance
                .pixels()
                .iter()
                .filter_map(|&(u, v)| depth.get(u, v).map(|d| (v * w + u, d)))
                .collect();
            (!px.is_empty()).then_some((target, px))
        })
        .collect();
    let k = per_object.len() as f64;
    for (target, px) in &per_object {
        let coef = inputs.weight_aux / (k * px.len() as f64);
        for &(i, d) in px {
            grad[i] += coef * sign(d - target);
        }
    }
}

/// `dL/ds` at `s = 0` for `D = e^s D0`: both the camera height and the depth are
/// 1-homogeneous in the global scale.
fn log_scale_gradient(
    depth: &DepthMap,
    inputs: &GeometricLossInputs<'_>,
    loss: &GeometricLoss,
) -> Result<f64> {
    let mut total = 0.0;
    if let (Some(target), Some(_)) = (inputs.target_height, loss.cam) {
        let owned;
        let normals = match inputs.normals {
            Some(n) => n,
            None => {
                owned = normal_map(depth, &inputs.intr);
                &owned
            }
        };
        let heights = per_pixel_camera_height(depth, normals, inputs.road, &inputs.intr)?;
        let (sum, n) = heights
            .as_slice()
            .iter()
            .zip(inputs.road.as_slice())
            .filter_map(|(h, &r)| if r { *h } else { None })
            .fold((0.0, 0usize), |(s, n), h| (s + sign(h - target) * h, n + 1));
        if n > 0 {
            total += inputs.weight_cam * sum / n as f64;
        }
    }
    if loss.aux.is_some() {
        let mut acc = 0.0;
        let mut count = 0usize;
        for obj in inputs.objects {
            let target = obj.approx_depth(&inputs.intr);
            let (sum, n) = obj
                .instance
                .pixels()
                .iter()
                .filter_map(|&(u, v)| depth.get(u, v))
                .fold((0.0, 0usize), |(s, n), d| (s + sign(d - target) * d, n + 1));
            if n > 0 {
                acc += sum / n as f64;
                count += 1;
            }
        }
        if count > 0 {
            total += inputs.weight_aux * acc / count as f64;
        }
    }
    Ok(total)
}
