//! Ray-cast synthetic road scenes with known geometry.
//!
//! The world frame is the camera frame of a level camera: x right, y down, z forward,
//! with the road plane at `y = camera_height`. The rendering camera sits at the world
//! origin, pitched down by `pitch_deg` (negative looks up). Boxes stand on the road,
//! yawed about the vertical axis.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, Point3};
use crate::losses::{Image, RelativePose};
use crate::masks::{ObjectInstance, RoadMask, MAX_INSTANCE_ID};
use crate::size_prior::Dimensions;

fn default_max_depth() -> f64 {
    200.0
}

/// A box standing on the road. `x` and `z` locate its footprint center in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub height: f64,
    pub width: f64,
    pub length: f64,
    #[serde(default)]
    pub yaw_deg: f64,
    pub x: f64,
    pub z: f64,
}

impl BoxSpec {
    pub fn dimensions(&self) -> Dimensions {
        Dimensions {
            height: self.height,
            width: self.width,
            length: self.length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub camera_height: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    /// Standard deviation of the multiplicative log-normal depth noise; 0 disables it.
    #[serde(default)]
    pub depth_noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Hits farther than this are left invalid.
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        self.intrinsics
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.camera_height > 0.0 && self.camera_height.is_finite()) {
            return Err(Error::Config(format!(
                "camera must be above the road (camera_height = {})",
                self.camera_height
            )));
        }
        if !(self.pitch_deg.abs() < 80.0) {
            return Err(Error::Config(format!(
                "pitch {} deg is out of range",
                self.pitch_deg
            )));
        }
        if !(self.depth_noise >= 0.0 && self.depth_noise.is_finite()) {
            return Err(Error::Config("depth noise must be nonnegative".into()));
        }
        if !(self.max_depth > 0.0) {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.boxes.len() > MAX_INSTANCE_ID as usize {
            return Err(Error::Config(format!(
                "at most {MAX_INSTANCE_ID} boxes are supported"
            )));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            let dims = [b.height, b.width, b.length, b.x, b.z, b.yaw_deg];
            if !dims.iter().all(|v| v.is_finite())
                || b.height <= 0.0
                || b.width <= 0.0
                || b.length <= 0.0
            {
                return Err(Error::Config(format!("box {i} has invalid dimensions")));
            }
            if Cuboid::new(b, self.camera_height).contains(&Vector3::zeros()) {
                return Err(Error::Config(format!("box {i} contains the camera")));
            }
        }
        Ok(())
    }

    /// Camera-to-world rotation.
    pub fn camera_rotation(&self) -> Matrix3<f64> {
        let (s, c) = self.pitch_deg.to_radians().sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
    }

    /// Unit road normal in the camera frame, pointing from the road toward the camera.
    pub fn road_normal(&self) -> Vector3<f64> {
        self.camera_rotation().transpose() * Vector3::new(0.0, -1.0, 0.0)
    }

    /// Instance id of box `i`.
    pub fn box_id(i: usize) -> u32 {
        i as u32 + 1
    }

    /// True box dimensions keyed by instance id.
    pub fn dimension_table(&self) -> BTreeMap<u32, Dimensions> {
        self.boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (Self::box_id(i), b.dimensions()))
            .collect()
    }

    /// Camera-frame coordinates of a world point.
    pub fn world_to_camera(&self, p: &Point3) -> Point3 {
        self.camera_rotation().transpose() * p
    }
}

/// An oriented box in world coordinates.
#[derive(Debug, Clone, Copy)]
struct Cuboid {
    center: Vector3<f64>,
    /// World-to-local rotation.
    rot: Matrix3<f64>,
    half: Vector3<f64>,
}

impl Cuboid {
    fn new(b: &BoxSpec, camera_height: f64) -> Self {
        let (s, c) = b.yaw_deg.to_radians().sin_cos();
        // local x across, local z along the length; yaw turns z toward x
        let local_to_world = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        Self {
            center: Vector3::new(b.x, camera_height - 0.5 * b.height, b.z),
            rot: local_to_world.transpose(),
            half: Vector3::new(0.5 * b.width, 0.5 * b.height, 0.5 * b.length),
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        let l = self.rot * (p - self.center);
        (0..3).all(|i| l[i].abs() <= self.half[i])
    }

    fn corners(&self) -> [Vector3<f64>; 8] {
        let back = self.rot.transpose();
        let mut out = [Vector3::zeros(); 8];
        for (k, c) in out.iter_mut().enumerate() {
            let sx = if k & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if k & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if k & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.center
                + back * Vector3::new(sx * self.half.x, sy * self.half.y, sz * self.half.z);
        }
        out
    }

    /// Smallest positive ray parameter at which `o + t·d` enters the box.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let lo = self.rot * (o - self.center);
        let ld = self.rot * d;
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            if ld[i].abs() < 1e-15 {
                if lo[i].abs() > self.half[i] {
                    return None;
                }
                continue;
            }
            let a = (-self.half[i] - lo[i]) / ld[i];
            let b = (self.half[i] - lo[i]) / ld[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }
}

/// What a ray hit first.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Ground,
    Box(usize),
}

struct Tracer {
    camera_height: f64,
    cuboids: Vec<Cuboid>,
}

impl Tracer {
    fn new(config: &SceneConfig) -> Self {
        Self {
            camera_height: config.camera_height,
            cuboids: config
                .boxes
                .iter()
                .map(|b| Cuboid::new(b, config.camera_height))
                .collect(),
        }
    }

    /// Nearest hit along `o + t·d`, world frame.
    fn cast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Surface)> {
        let mut best: Option<(f64, Surface)> = None;
        if d.y > 1e-12 {
            let t = (self.camera_height - o.y) / d.y;
            if t > 0.0 {
                best = Some((t, Surface::Ground));
            }
        }
        for (i, c) in self.cuboids.iter().enumerate() {
            if let Some(t) = c.intersect(o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, Surface::Box(i)));
                }
            }
        }
        best
    }
}

/// Known quantities of a rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub camera_height: f64,
    /// Road normal in the camera frame.
    pub road_normal: Vector3<f64>,
    /// True silhouette height of every visible box, keyed by instance id. A box's
    /// silhouette height is its height dimension whatever its yaw.
    pub silhouette_heights: BTreeMap<u32, f64>,
    /// Noise-free depth.
    pub depth: DepthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub depth: DepthMap,
    pub road: RoadMask,
    pub instances: Vec<ObjectInstance>,
    pub truth: GroundTruthRecord,
}

/// Ray-cast depth, road mask and box instance masks. Depth is z-depth; sky and hits
/// beyond `max_depth` are 0 (invalid).
pub fn render_scene(config: &SceneConfig) -> Result<RenderedScene> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let intr = config.intrinsics;
    let rot = config.camera_rotation();
    let tracer = Tracer::new(config);
    let mut depth = vec![0.0; w * h];
    let mut labels: Vec<Option<Surface>> = vec![None; w * h];
    depth
        .par_chunks_mut(w)
        .zip(labels.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (drow, lrow))| {
            for u in 0..w {
                // unit-z ray, so the ray parameter is the z-depth
                let ray = intr.ray(u as f64, v as f64);
                if let Some((t, s)) = tracer.cast(&Vector3::zeros(), &(rot * ray)) {
                    if t <= config.max_depth {
                        drow[u] = t;
                        lrow[u] = Some(s);
                    }
                }
            }
        });

    let road = RoadMask::new(
        w,
        h,
        labels.iter().map(|l| *l == Some(Surface::Ground)).collect(),
    )?;
    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); config.boxes.len()];
    for (k, l) in labels.iter().enumerate() {
        if let Some(Surface::Box(i)) = l {
            pixels[*i].push((k % w, k / w));
        }
    }
    let mut instances = Vec::new();
    let mut silhouette_heights = BTreeMap::new();
    for (i, px) in pixels.into_iter().enumerate() {
        if px.is_empty() {
            continue;
        }
        let id = SceneConfig::box_id(i);
        instances.push(ObjectInstance::from_pixels(id, "car", px)?);
        silhouette_heights.insert(id, config.boxes[i].height);
    }

    let truth_depth = DepthMap::new(w, h, depth)?;
    let noisy = if config.depth_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut vals = truth_depth.values().to_vec();
        for d in vals.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *d *= (config.depth_noise * z).exp();
        }
        DepthMap::new(w, h, vals)?
    } else {
        truth_depth.clone()
    };

    Ok(RenderedScene {
        depth: noisy,
        road,
        instances,
        truth: GroundTruthRecord {
            camera_height: config.camera_height,
            road_normal: config.road_normal(),
            silhouette_heights,
            depth: truth_depth,
        },
    })
}

/// Multiply every depth by `k`; invalid pixels stay invalid.
pub fn apply_global_scale(depth: &DepthMap, k: f64) -> Result<DepthMap> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!(
            "scale factor must be positive, got {k}"
        )));
    }
    Ok(depth.scaled(k))
}

/// Smooth procedural texture of a world point, in `[0.1, 0.9]`. Lambertian, so every
/// view of a point sees the same intensity.
pub fn texture(p: &Point3) -> f64 {
    const K: f64 = std::f64::consts::TAU / 4.0;
    let checker = (K * p.x).sin() * (K * p.z).sin();
    let band = (0.9 * K * p.y + 0.5 * K * p.x).sin();
    0.5 + 0.28 * checker + 0.12 * band
}

/// Target and source renders with their depths and the target-to-source pose.
#[derive(Debug, Clone)]
pub struct ViewPair {
    pub target: Image,
    pub source: Image,
    pub depth: DepthMap,
    pub source_depth: DepthMap,
    pub pose: RelativePose,
    pub intrinsics: Intrinsics,
}

impl ViewPair {
    /// Target pixels whose 3x3 neighborhood is seen by both cameras: each neighbor has
    /// a valid depth and lands inside the source image on a surface at the same depth
    /// (within `rel_tol`) at all four bilinear taps.
    pub fn covisible(&self, rel_tol: f64) -> Vec<bool> {
        let (w, h) = self.depth.dims();
        let seen: Vec<bool> = (0..w * h)
            .map(|k| {
                let (u, v) = (k % w, k / w);
                let Some(d) = self.depth.get(u, v) else {
                    return false;
                };
                let Ok(p) = self.intrinsics.backproject(u as f64, v as f64, d) else {
                    return false;
                };
                let Ok(([su, sv], z)) = self.intrinsics.project(&self.pose.transform(&p)) else {
                    return false;
                };
                if !(su >= 0.0 && sv >= 0.0 && su <= (w - 1) as f64 && sv <= (h - 1) as f64) {
                    return false;
                }
                let (u0, v0) = (su.floor() as usize, sv.floor() as usize);
                let (u1, v1) = ((u0 + 1).min(w - 1), (v0 + 1).min(h - 1));
                [(u0, v0), (u1, v0), (u0, v1), (u1, v1)]
                    .iter()
                    .all(|&(a, b)| {
                        self.source_depth
                            .get(a, b)
                            .is_some_and(|sd| (sd - z).abs() <= rel_tol * z)
                    })
            })
            .collect();
        let mut out = vec![false; w * h];
        for v in 1..h.saturating_sub(1) {
            for u in 1..w.saturating_sub(1) {
                out[v * w + u] =
                    (v - 1..=v + 1).all(|vv| (u - 1..=u + 1).all(|uu| seen[vv * w + uu]));
            }
        }
        out
    }
}

/// Sky intensity.
const SKY: f64 = 0.5;

/// Textured view and its z-depth from a camera at `origin` with orientation
/// `cam_to_world`. Every visible surface is textured; depth beyond `max_depth` is 0.
fn render_textured(
    config: &SceneConfig,
    tracer: &Tracer,
    origin: &Vector3<f64>,
    cam_to_world: &Matrix3<f64>,
) -> Result<(Image, DepthMap)> {
    let (w, h) = (config.width, config.height);
    let mut data = vec![SKY; w * h];
    let mut depth = vec![0.0; w * h];
    data.par_chunks_mut(w)
        .zip(depth.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (row, drow))| {
            for u in 0..w {
                let d = cam_to_world * config.intrinsics.ray(u as f64, v as f64);
                if let Some((t, _)) = tracer.cast(origin, &d) {
                    row[u] = texture(&(origin + d * t));
                    if t <= config.max_depth {
                        drow[u] = t;
                    }
                }
            }
        });
    Ok((Image::new(w, h, 1, data)?, DepthMap::new(w, h, depth)?))
}

/// Render the scene from the configured camera (target) and from a second camera
/// related by `pose`, which maps target-camera coordinates to source-camera coordinates.
/// Textured grayscale image seen by the scene's camera.
pub fn render_image(config: &SceneConfig) -> Result<Image> {
    config.validate()?;
    let tracer = Tracer::new(config);
    let (image, _) = render_textured(
        config,
        &tracer,
        &Vector3::zeros(),
        &config.camera_rotation(),
    )?;
    Ok(image)
}

pub fn render_view_pair(config: &SceneConfig, pose: &RelativePose) -> Result<ViewPair> {
    config.validate()?;
    let tracer = Tracer::new(config);
    let rot = config.camera_rotation();
    // source camera center and orientation in the target camera frame
    let r_ts = pose.rotation().transpose();
    let source_center = -(r_ts * pose.translation());
    let origin = rot * source_center;
    if !(origin.y < config.camera_height) || tracer.cuboids.iter().any(|c| c.contains(&origin)) {
        return Err(Error::invalid(
            "source camera is below the road or inside a box",
        ));
    }
    let (target, depth) = render_textured(config, &tracer, &Vector3::zeros(), &rot)?;
    let (source, source_depth) = render_textured(config, &tracer, &origin, &(rot * r_ts))?;
    Ok(ViewPair {
        target,
        source,
        depth,
        source_depth,
        pose: *pose,
        intrinsics: config.intrinsics,
    })
}

/// Ranges for [`random_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRanges {
    pub camera_height: (f64, f64),
    pub pitch_deg: (f64, f64),
    pub box_count: (usize, usize),
    pub box_height: (f64, f64),
    pub box_width: (f64, f64),
    pub box_length: (f64, f64),
    pub yaw_deg: (f64, f64),
    pub lateral: (f64, f64),
    pub distance: (f64, f64),
    /// Minimum projected box height in pixels.
    pub min_pixel_height: f64,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            camera_height: (1.2, 2.0),
            pitch_deg: (-5.0, 5.0),
            box_count: (3, 5),
            box_height: (1.4, 1.9),
            box_width: (1.6, 2.0),
            box_length: (3.8, 4.8),
            yaw_deg: (-30.0, 30.0),
            lateral: (-7.0, 7.0),
            distance: (8.0, 25.0),
            min_pixel_height: 20.0,
        }
    }
}

/// Camera settings for generated scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSetup {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
}

impl Default for CameraSetup {
    /// A 640x192 road camera with a 60 degree horizontal field of view.
    fn default() -> Self {
        Self {
            width: 640,
            height: 192,
            intrinsics: Intrinsics {
                fx: 370.0,
                fy: 370.0,
                cx: 319.5,
                cy: 95.5,
            },
        }
    }
}

fn sample(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Projected column range of a box if it lies fully inside the image with a 1-pixel
/// margin and is at least `min_px` rows tall.
fn box_footprint(config: &SceneConfig, b: &BoxSpec, min_px: f64) -> Option<(f64, f64)> {
    let cub = Cuboid::new(b, config.camera_height);
    let (mut umin, mut umax, mut vmin, mut vmax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for c in cub.corners() {
        let pc = config.world_to_camera(&c);
        if pc.z < 0.5 {
            return None;
        }
        let ([u, v], _) = config.intrinsics.project(&pc).ok()?;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let inside = umin >= 1.0
        && vmin >= 1.0
        && umax <= config.width as f64 - 2.0
        && vmax <= config.height as f64 - 2.0;
    (inside && vmax - vmin >= min_px).then_some((umin, umax))
}

/// Scene with a random camera pose and boxes that are fully visible and do not
/// occlude each other.
pub fn random_scene(
    rng: &mut impl Rng,
    camera: &CameraSetup,
    ranges: &SceneRanges,
) -> Result<SceneConfig> {
    let camera_height = sample(rng, ranges.camera_height);
    let pitch_deg = sample(rng, ranges.pitch_deg);
    scene_with_boxes(rng, camera, ranges, camera_height, pitch_deg)
}

/// Place random boxes in front of a camera with fixed height and pitch.
pub fn scene_with_boxes(
    rng: &mut impl Rng,
    camera: &CameraSetup,
    ranges: &SceneRanges,
    camera_height: f64,
    pitch_deg: f64,
) -> Result<SceneConfig> {
    let mut config = SceneConfig {
        width: camera.width,
        height: camera.height,
        intrinsics: camera.intrinsics,
        camera_height,
        pitch_deg,
        boxes: Vec::new(),
        depth_noise: 0.0,
        seed: rng.random(),
        max_depth: default_max_depth(),
    };
    config.validate()?;
    let want = if ranges.box_count.1 > ranges.box_count.0 {
        rng.random_range(ranges.box_count.0..=ranges.box_count.1)
    } else {
        ranges.box_count.0
    };
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut attempts = 0;
    while config.boxes.len() < want && attempts < 500 {
        attempts += 1;
        let b = BoxSpec {
            height: sample(rng, ranges.box_height),
            width: sample(rng, ranges.box_width),
            length: sample(rng, ranges.box_length),
            yaw_deg: sample(rng, ranges.yaw_deg),
            x: sample(rng, ranges.lateral),
            z: sample(rng, ranges.distance),
        };
        let Some((u0, u1)) = box_footprint(&config, &b, ranges.min_pixel_height) else {
            continue;
        };
        if spans.iter().any(|&(a0, a1)| u0 < a1 + 2.0 && a0 < u1 + 2.0) {
            continue;
        }
        spans.push((u0, u1));
        config.boxes.push(b);
    }
    if config.boxes.len() < ranges.box_count.0 {
        return Err(Error::Config(format!(
            "could only place {} of {} boxes",
            config.boxes.len(),
            ranges.box_count.0
        )));
    }
    Ok(config)
}

/// Frames of one drive: fixed camera height and pitch, fresh boxes per frame.
pub fn random_sequence(
    seed: u64,
    frames: usize,
    camera: &CameraSetup,
    ranges: &SceneRanges,
) -> Result<Vec<SceneConfig>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera_height = sample(&mut rng, ranges.camera_height);
    let pitch_deg = sample(&mut rng, ranges.pitch_deg);
    (0..frames)
        .map(|_| scene_with_boxes(&mut rng, camera, ranges, camera_height, pitch_deg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camheight::road_geometry;

    fn config(boxes: Vec<BoxSpec>) -> SceneConfig {
        SceneConfig {
            width: 640,
            height: 192,
            intrinsics: Intrinsics::new(500.0, 500.0, 319.5, 40.0).unwrap(),
            camera_height: 1.65,
            pitch_deg: 0.0,
            boxes,
            depth_noise: 0.0,
            seed: 0,
            max_depth: 200.0,
        }
    }

    fn car(x: f64, z: f64, yaw: f64) -> BoxSpec {
        BoxSpec {
            height: 1.5,
            width: 1.8,
            length: 4.2,
            yaw_deg: yaw,
            x,
            z,
        }
    }

    #[test]
    fn ground_pixels_satisfy_plane_equation() {
        let cfg = config(vec![]);
        let s = render_scene(&cfg).unwrap();
        let n = cfg.road_normal();
        let mut checked = 0;
        for v in 0..192 {
            for u in (0..640).step_by(37) {
                if let Some(d) = s.depth.get(u, v) {
                    let p = cfg.intrinsics.ray(u as f64, v as f64) * d;
                    assert!((-p.dot(&n) - 1.65).abs() < 1e-12);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn empty_scene_is_all_road() {
        let s = render_scene(&config(vec![])).unwrap();
        assert!(s.instances.is_empty());
        for (i, &r) in s.road.as_slice().iter().enumerate() {
            assert_eq!(r, s.depth.values()[i] > 0.0);
        }
        // the horizon row sees sky; the next rows hit the road beyond max_depth
        assert!(s.depth.get(100, 40).is_none());
        assert!(s.depth.get(100, 44).is_none());
        assert!((s.depth.get(100, 45).unwrap() - 165.0).abs() < 1e-9);
    }

    #[test]
    fn box_spans_pinhole_height() {
        // 1.5 m tall, front face 10 m away, camera at 1.4 m so the top face is hidden
        let mut cfg = config(vec![BoxSpec {
            height: 1.5,
            width: 1.8,
            length: 4.0,
            yaw_deg: 0.0,
            x: 0.0,
            z: 12.0,
        }]);
        cfg.camera_height = 1.4;
        cfg.intrinsics.cy = 40.3;
        let s = render_scene(&cfg).unwrap();
        assert_eq!(s.instances.len(), 1);
        let rows = s.instances[0].bbox().height() as f64;
        assert!((rows - 75.0).abs() <= 1.0, "{rows}");
        assert_eq!(s.truth.silhouette_heights[&1], 1.5);
    }

    #[test]
    fn pitched_camera_normal() {
        let mut cfg = config(vec![]);
        cfg.pitch_deg = 4.0;
        cfg.intrinsics.cy = 96.0;
        let n = cfg.road_normal();
        let (s, c) = 4f64.to_radians().sin_cos();
        assert!((n - Vector3::new(0.0, -c, -s)).norm() < 1e-15);
        let scene = render_scene(&cfg).unwrap();
        let g = road_geometry(&scene.depth, &scene.road, &cfg.intrinsics).unwrap();
        assert!((g.camera_height.value - 1.65).abs() < 1.65 * 1e-6);
        assert!((g.road_normal - n).norm() < 1e-6);
    }

    #[test]
    fn nearest_hit_wins() {
        let near = car(0.0, 10.0, 0.0);
        let far = BoxSpec {
            height: 3.0,
            ..car(0.0, 20.0, 0.0)
        };
        let s = render_scene(&config(vec![far, near])).unwrap();
        let d = s.depth.get(320, 60).unwrap();
        assert!((d - 7.9).abs() < 1e-9);
        assert!(s.instances.iter().any(|i| i.id == 2));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = config(vec![]);
        cfg.camera_height = -1.0;
        assert!(matches!(render_scene(&cfg), Err(Error::Config(_))));
        let cfg = config(vec![BoxSpec {
            height: 3.0,
            ..car(0.0, 0.0, 0.0)
        }]);
        assert!(matches!(render_scene(&cfg), Err(Error::Config(_))));
        assert!(apply_global_scale(&DepthMap::filled(2, 2, 1.0), 0.0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut cfg = config(vec![car(1.0, 14.0, 20.0)]);
        cfg.depth_noise = 0.01;
        cfg.seed = 9;
        let a = render_scene(&cfg).unwrap();
        let b = render_scene(&cfg).unwrap();
        assert_eq!(a.depth, b.depth);
        assert_ne!(a.depth, a.truth.depth);
        cfg.seed = 10;
        assert_ne!(render_scene(&cfg).unwrap().depth, a.depth);
    }

    #[test]
    fn generated_scenes_are_visible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cfg =
                random_scene(&mut rng, &CameraSetup::default(), &SceneRanges::default()).unwrap();
            let s = render_scene(&cfg).unwrap();
            assert_eq!(s.instances.len(), cfg.boxes.len());
        }
    }

    #[test]
    fn identity_pose_gives_identical_views() {
        let cfg = config(vec![car(-2.0, 12.0, 10.0)]);
        let pair = render_view_pair(&cfg, &RelativePose::identity()).unwrap();
        assert_eq!(pair.target, pair.source);
    }

    #[test]
    fn pose_moving_camera_underground_is_rejected() {
        let cfg = config(vec![]);
        let pose = RelativePose::new(Matrix3::identity(), Vector3::new(0.0, -2.0, 0.0)).unwrap();
        assert!(render_view_pair(&cfg, &pose).is_err());
    }

    #[test]
    fn single_view_matches_identity_pair() {
        let cfg = config(vec![car(0.0, 12.0, 20.0)]);
        let pair = render_view_pair(&cfg, &RelativePose::identity()).unwrap();
        assert_eq!(render_image(&cfg).unwrap(), pair.target);
    }
}
