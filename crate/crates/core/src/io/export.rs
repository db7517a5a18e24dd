//! Writing rendered scenes to disk as a sequence the pipeline can load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::manifest::{FrameEntry, SequenceManifest};
use crate::io::pfm::save_pfm;
use crate::io::pgm::{save_pgm, Gray8};
use crate::masks::instances_to_labels;
use crate::simulator::{render_image, render_scene, SceneConfig};
use crate::size_prior::write_dimension_table;

/// Name of the manifest written by [`export_sequence`].
pub const MANIFEST_FILE: &str = "manifest.toml";
/// Per-frame ground truth written next to the manifest.
pub const TRUTH_FILE: &str = "truth.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportOptions {
    /// Factor applied to the written depth maps; ground truth stays metric.
    pub depth_scale: f64,
    /// Also write a textured grayscale image per frame.
    pub images: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            depth_scale: 1.0,
            images: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub frame: String,
    pub camera_height: f64,
    pub pitch_deg: f64,
    pub depth_scale: f64,
    pub objects: usize,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::from(e).at_path(path))
}

/// Render every scene and write depth (PFM), ground-truth depth (PFM), road and
/// instance masks (PGM), dimension tables (CSV), optional images, `truth.csv` and
/// `manifest.toml` under `dir`.
pub fn export_sequence(
    dir: &Path,
    sequence_id: &str,
    scenes: &[SceneConfig],
    options: &ExportOptions,
) -> Result<SequenceManifest> {
    if !(options.depth_scale > 0.0 && options.depth_scale.is_finite()) {
        return Err(Error::invalid(format!(
            "depth scale must be positive, got {}",
            options.depth_scale
        )));
    }
    let first = scenes
        .first()
        .ok_or_else(|| Error::invalid("no scenes to export"))?;
    let mut subdirs = vec!["depth", "gt", "road", "instances", "dims"];
    if options.images {
        subdirs.push("image");
    }
    for sub in &subdirs {
        create_dir(&dir.join(sub))?;
    }

    let mut frames = Vec::with_capacity(scenes.len());
    let mut truth = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        if scene.intrinsics != first.intrinsics
            || scene.width != first.width
            || scene.height != first.height
        {
            return Err(Error::invalid(format!(
                "scene {i} uses a different camera than the first scene"
            )));
        }
        let id = format!("{i:06}");
        let rendered = render_scene(scene)?;
        let (w, h) = (scene.width, scene.height);
        let rel = |sub: &str, ext: &str| PathBuf::from(sub).join(format!("{id}.{ext}"));
        let entry = FrameEntry {
            id: id.clone(),
            depth: rel("depth", "pfm"),
            road: rel("road", "pgm"),
            instances: rel("instances", "pgm"),
            dimensions: Some(rel("dims", "csv")),
            image: options.images.then(|| rel("image", "pgm")),
            gt_depth: Some(rel("gt", "pfm")),
        };
        save_pfm(
            dir.join(&entry.depth),
            &rendered.depth.scaled(options.depth_scale),
        )?;
        save_pfm(dir.join(rel("gt", "pfm")), &rendered.truth.depth)?;
        save_pgm(
            dir.join(&entry.road),
            &Gray8::new(w, h, rendered.road.to_labels())?,
        )?;
        save_pgm(
            dir.join(&entry.instances),
            &Gray8::new(w, h, instances_to_labels(w, h, &rendered.instances)?)?,
        )?;
        let dims_path = dir.join(rel("dims", "csv"));
        let file =
            std::fs::File::create(&dims_path).map_err(|e| Error::from(e).at_path(&dims_path))?;
        write_dimension_table(std::io::BufWriter::new(file), &scene.dimension_table())
            .map_err(|e| e.at_path(&dims_path))?;
        if let Some(path) = &entry.image {
            save_pgm(dir.join(path), &Gray8::from_image(&render_image(scene)?)?)?;
        }
        truth.push(TruthRow {
            frame: id,
            camera_height: scene.camera_height,
            pitch_deg: scene.pitch_deg,
            depth_scale: options.depth_scale,
            objects: rendered.instances.len(),
        });
        frames.push(entry);
    }
    crate::io::report::save_csv(dir.join(TRUTH_FILE), &truth)?;
    let manifest = SequenceManifest {
        sequence_id: sequence_id.to_string(),
        intrinsics: first.intrinsics,
        frames,
        base_dir: dir.to_path_buf(),
    };
    manifest.validate()?;
    manifest.save(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Read a `truth.csv` written by [`export_sequence`].
pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRow>> {
    let path = path.as_ref();
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::invalid(e.to_string()).at_path(path))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::invalid(format!("bad truth row: {e}")).at_path(path)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::io::pfm::load_pfm;
    use crate::simulator::BoxSpec;

    fn scene() -> SceneConfig {
        SceneConfig {
            width: 80,
            height: 40,
            intrinsics: Intrinsics::new(60.0, 60.0, 39.5, 10.0).unwrap(),
            camera_height: 1.5,
            pitch_deg: 0.0,
            boxes: vec![BoxSpec {
                height: 1.6,
                width: 1.8,
                length: 4.0,
                yaw_deg: 10.0,
                x: 0.0,
                z: 9.0,
            }],
            depth_noise: 0.0,
            seed: 0,
            max_depth: 100.0,
        }
    }

    #[test]
    fn writes_loadable_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ExportOptions {
            depth_scale: 0.5,
            images: true,
        };
        let m = export_sequence(dir.path(), "demo", &[scene(), scene()], &opts).unwrap();
        let loaded = SequenceManifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, m);
        let depth = load_pfm(m.resolve(&m.frames[0].depth)).unwrap();
        let gt = load_pfm(m.resolve(m.frames[0].gt_depth.as_ref().unwrap())).unwrap();
        for (d, g) in depth.values().iter().zip(gt.values()) {
            // PFM stores f32
            assert!((d - 0.5 * (*g as f32 as f64)).abs() <= 1e-5 * g.max(1.0));
        }
        let truth = load_truth(dir.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(truth.len(), 2);
        assert_eq!(truth[1].camera_height, 1.5);
        assert_eq!(truth[0].objects, 1);
        assert!(m.resolve(m.frames[1].image.as_ref().unwrap()).exists());
    }

    #[test]
    fn rejects_mixed_cameras() {
        let dir = tempfile::tempdir().unwrap();
        let mut other = scene();
        other.width = 60;
        other.intrinsics.cx = 29.5;
        assert!(export_sequence(
            dir.path(),
            "demo",
            &[scene(), other],
            &ExportOptions::default()
        )
        .is_err());
        assert!(export_sequence(dir.path(), "demo", &[], &ExportOptions::default()).is_err());
    }
}
