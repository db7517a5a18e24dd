//! End-to-end processing of sequences: per-frame scaled camera heights, epoch
//! aggregation, pseudo-label updates, loss evaluation and reports.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camheight::{road_geometry, HeightMap};
use crate::epoch::{epoch_camera_height, write_states, FrameRecord, SequenceState};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics};
use crate::io::config::Config;
use crate::io::pfm::load_pfm;
use crate::io::pgm::load_pgm;
use crate::io::report::{save_csv, trend_svg, EpochRow, FrameRow};
use crate::io::SequenceManifest;
use crate::losses::{
    aux_geometric_loss, camera_height_loss, smoothness_loss, total_loss, AuxObject, Image,
    LossTerms,
};
use crate::masks::{instances_from_labels, ObjectInstance, RoadMask};
use crate::outlier::{approx_object_height, filter_outliers, horizon_line, PlausibilityCandidate};
use crate::silhouette::{frame_scale_factor, silhouette_height};
use crate::size_prior::PriorSource;

/// One frame's inputs.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub id: String,
    pub depth: DepthMap,
    pub road: RoadMask,
    pub instances: Vec<ObjectInstance>,
    pub priors: PriorSource,
    pub image: Option<Image>,
}

#[derive(Debug, Clone)]
pub struct SequenceData {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub frames: Vec<FrameData>,
    /// Frames that could not be loaded, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn load_frame(
    m: &SequenceManifest,
    e: &crate::io::FrameEntry,
    default_prior: f64,
) -> Result<FrameData> {
    let depth = load_pfm(m.resolve(&e.depth))?;
    let dims = depth.dims();
    let check = |what: &Path, got: (usize, usize)| -> Result<()> {
        if got != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: got,
            }
            .at_path(m.resolve(what)));
        }
        Ok(())
    };
    let road = load_pgm(m.resolve(&e.road))?;
    check(&e.road, road.dims())?;
    let inst = load_pgm(m.resolve(&e.instances))?;
    check(&e.instances, inst.dims())?;
    let priors = match &e.dimensions {
        Some(p) => {
            PriorSource::load_dimension_table(m.resolve(p))?.with_fallback(Some(default_prior))?
        }
        None => PriorSource::fixed(default_prior)?,
    };
    let image = match &e.image {
        Some(p) => {
            let g = load_pgm(m.resolve(p))?;
            check(p, g.dims())?;
            Some(g.to_image()?)
        }
        None => None,
    };
    Ok(FrameData {
        id: e.id.clone(),
        depth,
        road: RoadMask::from_labels(dims.0, dims.1, &road.data)?,
        instances: instances_from_labels(dims.0, dims.1, &inst.data, "car")?,
        priors,
        image,
    })
}

/// Load every frame of a manifest. Unreadable frames are skipped and listed; a
/// sequence with no readable frame is an error.
pub fn load_sequence(manifest: &SequenceManifest, default_prior: f64) -> Result<SequenceData> {
    let results: Vec<Result<FrameData>> = manifest
        .frames
        .par_iter()
        .map(|e| load_frame(manifest, e, default_prior))
        .collect();
    let mut frames = Vec::new();
    let mut skipped = Vec::new();
    for (e, r) in manifest.frames.iter().zip(results) {
        match r {
            Ok(f) => frames.push(f),
            Err(err) => skipped.push((e.id.clone(), err.to_string())),
        }
    }
    if frames.is_empty() {
        let first = skipped.first().map(|s| s.1.clone()).unwrap_or_default();
        return Err(Error::Validation(format!(
            "no frame of sequence '{}' could be loaded (first error: {first})",
            manifest.sequence_id
        )));
    }
    Ok(SequenceData {
        id: manifest.sequence_id.clone(),
        intrinsics: manifest.intrinsics,
        frames,
        skipped,
    })
}

/// Per-object quantities that do not change across epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectMeasurement {
    pub id: u32,
    pub prior: Option<f64>,
    /// Unscaled silhouette height.
    pub silhouette: Option<f64>,
    /// Bounding-box rows over the lowest pixel's distance to the horizon; times the
    /// metric camera height this approximates the object's height.
    pub horizon_ratio: Option<f64>,
}

/// Epoch-invariant geometry of one frame.
#[derive(Debug, Clone)]
pub struct FrameGeometry {
    pub unscaled_height: f64,
    pub road_normal: Vector3<f64>,
    pub heights: HeightMap,
    pub objects: Vec<ObjectMeasurement>,
}

pub fn analyze_frame(frame: &FrameData, intr: &Intrinsics) -> Result<FrameGeometry> {
    let g = road_geometry(&frame.depth, &frame.road, intr)?;
    let horizon = horizon_line(intr, &g.road_normal).ok();
    let objects = frame
        .instances
        .iter()
        .map(|inst| {
            let m = silhouette_height(
                &frame.depth,
                intr,
                inst,
                &g.road_normal,
                g.camera_height.value,
            );
            ObjectMeasurement {
                id: inst.id,
                prior: frame.priors.prior_height(inst).ok(),
                silhouette: m.valid.then_some(m.height),
                horizon_ratio: horizon.and_then(|l| approx_object_height(inst, &l, 1.0).ok()),
            }
        })
        .collect();
    Ok(FrameGeometry {
        unscaled_height: g.camera_height.value,
        road_normal: g.road_normal,
        heights: g.heights,
        objects,
    })
}

/// Objects usable for scale: those with a prior and a silhouette, minus the ones the
/// plausibility check rejects when a metric camera height is known. Returns the
/// inlier ids and the number rejected.
pub fn select_inliers(
    objects: &[ObjectMeasurement],
    camera_height: Option<f64>,
    threshold: f64,
) -> Result<(Vec<u32>, usize)> {
    let usable: Vec<&ObjectMeasurement> = objects
        .iter()
        .filter(|o| o.prior.is_some() && o.silhouette.is_some())
        .collect();
    let Some(h) = camera_height else {
        return Ok((usable.iter().map(|o| o.id).collect(), 0));
    };
    let candidates: Vec<PlausibilityCandidate> = usable
        .iter()
        .filter_map(|o| {
            Some(PlausibilityCandidate {
                id: o.id,
                prior: o.prior?,
                approx: o.horizon_ratio? * h,
            })
        })
        .collect();
    let kept = filter_outliers(&candidates, threshold)?;
    let rejected = usable.len() - kept.len();
    Ok((kept, rejected))
}

/// One frame's result within an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame_id: String,
    pub unscaled_height: Option<f64>,
    pub scale: Option<f64>,
    pub scaled_height: Option<f64>,
    pub objects: usize,
    pub inliers: Vec<u32>,
    pub rejected: usize,
    pub status: String,
    pub losses: LossTerms,
}

fn frame_outcome(
    frame: &FrameData,
    geom: &Result<FrameGeometry>,
    intr: &Intrinsics,
    supervision: Option<f64>,
    threshold: f64,
) -> Result<FrameOutcome> {
    let mut out = FrameOutcome {
        frame_id: frame.id.clone(),
        unscaled_height: None,
        scale: None,
        scaled_height: None,
        objects: frame.instances.len(),
        inliers: Vec::new(),
        rejected: 0,
        status: String::new(),
        losses: LossTerms::default(),
    };
    let geom = match geom {
        Ok(g) => g,
        Err(e) => {
            out.status = e.to_string();
            return Ok(out);
        }
    };
    out.unscaled_height = Some(geom.unscaled_height);
    let (inliers, rejected) = select_inliers(&geom.objects, supervision, threshold)?;
    out.rejected = rejected;
    let by_id: BTreeMap<u32, &ObjectMeasurement> = geom.objects.iter().map(|o| (o.id, o)).collect();
    let priors: BTreeMap<u32, f64> = inliers
        .iter()
        .filter_map(|id| Some((*id, by_id[id].prior?)))
        .collect();
    let measurements: Vec<_> = inliers
        .iter()
        .filter_map(|id| {
            by_id[id]
                .silhouette
                .map(|h| crate::silhouette::SilhouetteMeasurement {
                    id: *id,
                    height: h,
                    valid: true,
                })
        })
        .collect();
    match frame_scale_factor(&measurements, &priors) {
        Ok(fs) => {
            out.scale = Some(fs.scale);
            out.scaled_height = Some(fs.scale * geom.unscaled_height);
            out.status = "ok".into();
        }
        Err(Error::NoScale) => {
            out.status = if frame.instances.is_empty() {
                "no objects".into()
            } else {
                "no inlier objects".into()
            };
        }
        Err(e) => return Err(e),
    }
    out.inliers = inliers;

    out.losses.cam =
        supervision.and_then(|h| camera_height_loss(&geom.heights, &frame.road, h).ok());
    let aux_objects: Vec<AuxObject> = frame
        .instances
        .iter()
        .filter(|i| out.inliers.contains(&i.id))
        .filter_map(|i| {
            Some(AuxObject {
                instance: i,
                prior: by_id[&i.id].prior?,
            })
        })
        .collect();
    out.losses.aux = aux_geometric_loss(&frame.depth, &aux_objects, intr);
    if let Some(img) = &frame.image {
        let disparity: Vec<f64> = frame
            .depth
            .values()
            .iter()
            .map(|&d| {
                if d > 0.0 && d.is_finite() {
                    1.0 / d
                } else {
                    0.0
                }
            })
            .collect();
        out.losses.sm = smoothness_loss(&disparity, img).ok();
    }
    Ok(out)
}

/// Outcome of every frame of `seq` under a fixed supervision height, without
/// touching any sequence state.
pub fn evaluate_frames(
    seq: &SequenceData,
    supervision: Option<f64>,
    threshold: f64,
) -> Result<Vec<FrameOutcome>> {
    seq.frames
        .par_iter()
        .map(|f| {
            let geom = analyze_frame(f, &seq.intrinsics);
            frame_outcome(f, &geom, &seq.intrinsics, supervision, threshold)
        })
        .collect()
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub epochs: Vec<EpochRow>,
    pub frames: Vec<FrameRow>,
    pub states: Vec<SequenceState>,
    /// `(sequence, frame, reason)` for frames skipped at load time.
    pub skipped: Vec<(String, String, String)>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Median scaled camera height over all frames without plausibility filtering: the
/// fixed pseudo label of offline supervision when none is configured.
pub fn offline_camera_height(
    seq: &SequenceData,
    geometry: &[Result<FrameGeometry>],
    threshold: f64,
) -> Result<f64> {
    let records: Vec<FrameRecord> = seq
        .frames
        .iter()
        .zip(geometry)
        .map(|(f, g)| {
            frame_outcome(f, g, &seq.intrinsics, None, threshold).map(|o| FrameRecord {
                frame_id: o.frame_id,
                sequence_id: seq.id.clone(),
                scaled_height: o.scaled_height,
                inliers: o.inliers.len(),
            })
        })
        .collect::<Result<_>>()?;
    epoch_camera_height(&records).ok_or_else(|| {
        Error::FrameUnusable(format!(
            "no frame of '{}' yields a scale for the offline height",
            seq.id
        ))
    })
}

/// Run `epochs` epochs over each sequence. States in `resume` with a matching id are
/// continued; other sequences start fresh in the configured mode.
pub fn run_pipeline(
    sequences: &[SequenceData],
    config: &Config,
    epochs: u32,
    resume: &[SequenceState],
) -> Result<PipelineReport> {
    config.validate()?;
    let mode = config.pipeline.supervision_mode()?;
    let threshold = config.pipeline.outlier_threshold;
    let mut report = PipelineReport {
        epochs: Vec::new(),
        frames: Vec::new(),
        states: Vec::new(),
        skipped: Vec::new(),
    };
    for seq in sequences {
        for (f, why) in &seq.skipped {
            report
                .skipped
                .push((seq.id.clone(), f.clone(), why.clone()));
        }
        let geometry: Vec<Result<FrameGeometry>> = seq
            .frames
            .par_iter()
            .map(|f| analyze_frame(f, &seq.intrinsics))
            .collect();
        if geometry.iter().all(|g| g.is_err()) {
            let why = geometry
                .iter()
                .find_map(|g| g.as_ref().err())
                .map(|e| e.to_string())
                .unwrap_or_default();
            return Err(Error::FrameUnusable(format!(
                "every frame of '{}' failed: {why}",
                seq.id
            )));
        }
        let mut state = match resume.iter().find(|s| s.id() == seq.id) {
            Some(s) => s.clone(),
            None => {
                let offline = match (mode.needs_offline_height(), config.pipeline.offline_height) {
                    (false, _) => None,
                    (true, Some(h)) => Some(h),
                    (true, None) => Some(offline_camera_height(seq, &geometry, threshold)?),
                };
                SequenceState::new(seq.id.clone(), mode, offline)?
            }
        };
        for _ in 0..epochs {
            let epoch = state.epochs_completed() + 1;
            let supervision = state.supervision_for_epoch(epoch);
            let outcomes: Vec<FrameOutcome> = seq
                .frames
                .par_iter()
                .zip(geometry.par_iter())
                .map(|(f, g)| frame_outcome(f, g, &seq.intrinsics, supervision, threshold))
                .collect::<Result<_>>()?;
            let records: Vec<FrameRecord> = outcomes
                .iter()
                .map(|o| FrameRecord {
                    frame_id: o.frame_id.clone(),
                    sequence_id: seq.id.clone(),
                    scaled_height: o.scaled_height,
                    inliers: o.inliers.len(),
                })
                .collect();
            let epoch_height = epoch_camera_height(&records);
            state.finish_epoch(epoch_height);

            let terms = LossTerms {
                rec: None,
                sm: mean(outcomes.iter().map(|o| o.losses.sm)),
                cam: mean(outcomes.iter().map(|o| o.losses.cam)),
                aux: mean(outcomes.iter().map(|o| o.losses.aux)),
            };
            let breakdown = total_loss(&terms, &config.losses, epoch - 1)?;
            report.epochs.push(EpochRow {
                sequence: seq.id.clone(),
                epoch,
                frames: outcomes.len(),
                usable_frames: records.iter().filter(|r| r.scaled_height.is_some()).count(),
                epoch_height,
                supervision,
                hstar: state.hstar(),
                lambda_cam: breakdown.lambda_cam,
                lambda_aux: breakdown.lambda_aux,
                loss_cam: terms.cam,
                loss_aux: terms.aux,
                loss_sm: terms.sm,
                loss_total: breakdown.total,
            });
            for o in outcomes {
                report.frames.push(FrameRow {
                    sequence: seq.id.clone(),
                    epoch,
                    frame: o.frame_id,
                    unscaled_height: o.unscaled_height,
                    scale: o.scale,
                    scaled_height: o.scaled_height,
                    objects: o.objects,
                    inliers: o.inliers.len(),
                    rejected: o.rejected,
                    status: o.status,
                });
            }
        }
        report.states.push(state);
    }
    Ok(report)
}

pub const EPOCH_REPORT: &str = "epochs.csv";
pub const FRAME_REPORT: &str = "frames.csv";
pub const STATE_FILE: &str = "state.txt";
pub const TREND_PLOT: &str = "hstar.svg";

/// Write the CSV reports, the state file and optionally the trend plot into `dir`.
pub fn write_reports(report: &PipelineReport, dir: &Path, plot: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    save_csv(dir.join(EPOCH_REPORT), &report.epochs)?;
    save_csv(dir.join(FRAME_REPORT), &report.frames)?;
    let state_path = dir.join(STATE_FILE);
    let file =
        std::fs::File::create(&state_path).map_err(|e| Error::from(e).at_path(&state_path))?;
    write_states(std::io::BufWriter::new(file), &report.states)
        .map_err(|e| e.at_path(&state_path))?;
    if plot {
        let series: Vec<(String, Vec<(u32, f64)>)> = report
            .states
            .iter()
            .map(|s| {
                let pts = s
                    .history()
                    .iter()
                    .filter_map(|e| e.hstar.map(|h| (e.epoch, h)))
                    .collect();
                (s.id().to_string(), pts)
            })
            .collect();
        let path = dir.join(TREND_PLOT);
        std::fs::write(&path, trend_svg("pseudo camera height (m)", &series))
            .map_err(|e| Error::from(e).at_path(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(id: u32, prior: f64, ratio: Option<f64>) -> ObjectMeasurement {
        ObjectMeasurement {
            id,
            prior: Some(prior),
            silhouette: Some(0.5),
            horizon_ratio: ratio,
        }
    }

    #[test]
    fn filter_only_with_known_height() {
        let objs = [m(1, 1.5, Some(0.9)), m(2, 1.5, Some(0.6)), m(3, 1.5, None)];
        assert_eq!(
            select_inliers(&objs, None, 0.2).unwrap(),
            (vec![1, 2, 3], 0)
        );
        // 0.9 * 1.65 = 1.485 passes; 0.6 * 1.65 = 0.99 fails; no ratio fails
        assert_eq!(
            select_inliers(&objs, Some(1.65), 0.2).unwrap(),
            (vec![1], 2)
        );
    }

    #[test]
    fn objects_without_prior_or_silhouette_are_not_counted() {
        let mut a = m(1, 1.5, Some(0.9));
        a.prior = None;
        let mut b = m(2, 1.5, Some(0.9));
        b.silhouette = None;
        assert_eq!(
            select_inliers(&[a, b], Some(1.65), 0.2).unwrap(),
            (vec![], 0)
        );
    }
}
