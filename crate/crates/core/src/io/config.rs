//! Run configuration, read from TOML.
//!
//! ```toml
//! [pipeline]
//! epochs = 5
//! mode = "online"          # online | offline | finetune:N
//! offline_height = 1.65    # optional; computed by a pre-pass when absent
//! outlier_threshold = 0.2
//! default_prior = 1.59
//!
//! [losses]
//! alpha = 0.01
//!
//! [refine]
//! steps = 200
//! learning_rate = 0.1
//!
//! [simulate]
//! frames = 50
//! ```
//!
//! Every section and key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::epoch::SupervisionMode;
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::losses::LossWeights;
use crate::metrics::DEFAULT_DEPTH_CAP;
use crate::outlier::DEFAULT_THRESHOLD;
use crate::preprocess::StaticFilter;
use crate::simulator::{random_sequence, CameraSetup, SceneConfig, SceneRanges};
use crate::size_prior::DEFAULT_CAR_HEIGHT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epochs: u32,
    pub mode: String,
    pub offline_height: Option<f64>,
    pub outlier_threshold: f64,
    /// Prior height for objects missing from their frame's dimension table.
    pub default_prior: f64,
    pub depth_cap: f64,
    /// Write the H* trend plot next to the CSV reports.
    pub plot: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            mode: "online".into(),
            offline_height: None,
            outlier_threshold: DEFAULT_THRESHOLD,
            default_prior: DEFAULT_CAR_HEIGHT,
            depth_cap: DEFAULT_DEPTH_CAP,
            plot: true,
        }
    }
}

impl PipelineConfig {
    pub fn supervision_mode(&self) -> Result<SupervisionMode> {
        self.mode.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub steps: u32,
    /// Initial step on the log-scale.
    pub learning_rate: f64,
    /// Zero-based schedule epoch whose loss weights are used.
    pub schedule_epoch: Option<u32>,
    /// Stop once the step falls below this.
    pub tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.1,
            schedule_epoch: None,
            tolerance: 1e-7,
        }
    }
}

/// Settings of the `simulate` command. An explicit `scene` renders that scene for every
/// frame; otherwise each frame gets random boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sequence_id: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// Fixed camera height; sampled from 1.2 to 2.0 m when absent.
    pub camera_height: Option<f64>,
    /// Fixed pitch in degrees; sampled from -5 to 5 when absent.
    pub pitch_deg: Option<f64>,
    pub min_boxes: usize,
    pub max_boxes: usize,
    /// Global factor applied to the written depth maps.
    pub depth_scale: f64,
    pub depth_noise: f64,
    /// Also write textured grayscale images.
    pub images: bool,
    pub scene: Option<SceneConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let cam = CameraSetup::default();
        Self {
            sequence_id: "sim".into(),
            frames: 50,
            width: cam.width,
            height: cam.height,
            intrinsics: cam.intrinsics,
            camera_height: None,
            pitch_deg: None,
            min_boxes: 3,
            max_boxes: 5,
            depth_scale: 1.0,
            depth_noise: 0.0,
            images: false,
            scene: None,
        }
    }
}

impl SimulateConfig {
    /// Scenes of the sequence to render, one per frame.
    pub fn scene_configs(&self, seed: u64) -> Result<Vec<SceneConfig>> {
        if let Some(scene) = &self.scene {
            return Ok((0..self.frames as u64)
                .map(|i| SceneConfig {
                    seed: scene.seed.wrapping_add(i),
                    ..scene.clone()
                })
                .collect());
        }
        let defaults = SceneRanges::default();
        let ranges = SceneRanges {
            camera_height: self
                .camera_height
                .map_or(defaults.camera_height, |h| (h, h)),
            pitch_deg: self.pitch_deg.map_or(defaults.pitch_deg, |p| (p, p)),
            box_count: (self.min_boxes, self.max_boxes),
            ..defaults
        };
        let camera = CameraSetup {
            width: self.width,
            height: self.height,
            intrinsics: self.intrinsics,
        };
        let mut scenes = random_sequence(seed, self.frames, &camera, &ranges)?;
        for s in &mut scenes {
            s.depth_noise = self.depth_noise;
        }
        Ok(scenes)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub losses: LossWeights,
    pub refine: RefineConfig,
    pub static_filter: StaticFilter,
    pub simulate: SimulateConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| Self::from_toml(&t))
            .map_err(|e| e.at_path(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.losses.validate()?;
        let mode = self.pipeline.supervision_mode()?;
        if let Some(h) = self.pipeline.offline_height {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!(
                    "offline_height must be positive, got {h}"
                )));
            }
        }
        if let crate::epoch::SupervisionMode::Finetune { unfreeze_epoch } = mode {
            if unfreeze_epoch == 0 {
                return Err(Error::Config(
                    "finetune unfreeze epoch must be at least 1".into(),
                ));
            }
        }
        if !(self.pipeline.outlier_threshold > 0.0) {
            return Err(Error::Config("outlier_threshold must be positive".into()));
        }
        if !(self.pipeline.default_prior > 0.0) {
            return Err(Error::Config("default_prior must be positive".into()));
        }
        if !(self.pipeline.depth_cap > 0.0) {
            return Err(Error::Config("depth_cap must be positive".into()));
        }
        if !(self.refine.learning_rate > 0.0 && self.refine.learning_rate.is_finite()) {
            return Err(Error::Config(
                "refine learning_rate must be positive".into(),
            ));
        }
        if !(self.refine.tolerance >= 0.0) {
            return Err(Error::Config("refine tolerance must be nonnegative".into()));
        }
        let s = &self.static_filter;
        if !(s.pixel_threshold >= 0.0 && (0.0..=1.0).contains(&s.fraction_threshold)) {
            return Err(Error::Config(
                "static filter thresholds out of range".into(),
            ));
        }
        let sim = &self.simulate;
        if sim.frames == 0 || sim.width == 0 || sim.height == 0 {
            return Err(Error::Config(
                "simulate needs at least one frame and a non-empty image".into(),
            ));
        }
        if sim.min_boxes > sim.max_boxes {
            return Err(Error::Config("simulate min_boxes exceeds max_boxes".into()));
        }
        if !(sim.depth_scale > 0.0) || !(sim.depth_noise >= 0.0) {
            return Err(Error::Config(
                "simulate depth_scale must be positive and depth_noise nonnegative".into(),
            ));
        }
        sim.intrinsics
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(scene) = &sim.scene {
            scene.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.losses.tau_mid, 20);
        assert_eq!(cfg.pipeline.outlier_threshold, 0.2);
        assert_eq!(cfg.static_filter, StaticFilter::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = Config::default();
        cfg.pipeline.mode = "finetune:3".into();
        cfg.pipeline.offline_height = Some(1.62);
        cfg.losses.alpha = 0.02;
        let text = cfg.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(matches!(
            Config::from_toml("[pipeline]\nmode = \"sometimes\""),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Config::from_toml("[losses]\ntau_mid = 0"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Config::from_toml("[pipeline]\nepochz = 3"),
            Err(Error::Config(_))
        ));
        assert!(Config::from_toml("[simulate.scene]\nwidth = 8\nheight = 8\ncamera_height = -1.0\n[simulate.scene.intrinsics]\nfx = 1.0\nfy = 1.0\ncx = 0.0\ncy = 0.0").is_err());
    }
}
