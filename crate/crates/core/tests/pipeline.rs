use std::path::Path;

use camh_core::epoch::read_states;
use camh_core::io::config::Config;
use camh_core::io::export::{export_sequence, load_truth, ExportOptions, TRUTH_FILE};
use camh_core::io::SequenceManifest;
use camh_core::pipeline::{
    load_sequence, run_pipeline, write_reports, SequenceData, STATE_FILE, TREND_PLOT,
};
use camh_core::simulator::{random_sequence, CameraSetup, SceneRanges};
use camh_core::Error;

fn exported(dir: &Path, seed: u64, frames: usize, scale: f64) -> SequenceManifest {
    let scenes = random_sequence(
        seed,
        frames,
        &CameraSetup::default(),
        &SceneRanges::default(),
    )
    .unwrap();
    let opts = ExportOptions {
        depth_scale: scale,
        images: false,
    };
    export_sequence(dir, &format!("seq{seed}"), &scenes, &opts).unwrap()
}

fn truth_height(dir: &Path) -> f64 {
    load_truth(dir.join(TRUTH_FILE)).unwrap()[0].camera_height
}

fn load(m: &SequenceManifest) -> SequenceData {
    load_sequence(m, Config::default().pipeline.default_prior).unwrap()
}

#[test]
fn online_run_recovers_camera_height_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = exported(dir.path(), 3, 12, 3.0);
    let seq = load(&m);
    assert!(seq.skipped.is_empty());
    let report = run_pipeline(&[seq], &Config::default(), 5, &[]).unwrap();
    let hstar = report.states[0].hstar().unwrap();
    let truth = truth_height(dir.path());
    assert!((hstar - truth).abs() / truth < 0.01, "{hstar} vs {truth}");
    assert_eq!(report.epochs.len(), 5);
    assert_eq!(report.frames.len(), 60);
    assert!(report.frames.iter().all(|f| f.status == "ok"));
}

#[test]
fn offline_mode_keeps_the_pseudo_label_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let seq = load(&exported(dir.path(), 4, 6, 0.4));
    let mut cfg = Config::default();
    cfg.pipeline.mode = "offline".into();
    cfg.pipeline.offline_height = Some(1.7);
    let report = run_pipeline(std::slice::from_ref(&seq), &cfg, 4, &[]).unwrap();
    assert!(report
        .epochs
        .iter()
        .all(|e| e.hstar == Some(1.7) && e.supervision == Some(1.7)));

    // without a configured height the pre-pass supplies one
    cfg.pipeline.offline_height = None;
    let report = run_pipeline(&[seq], &cfg, 3, &[]).unwrap();
    let first = report.epochs[0].hstar.unwrap();
    assert!(report.epochs.iter().all(|e| e.hstar == Some(first)));
    let truth = truth_height(dir.path());
    assert!((first - truth).abs() / truth < 0.02);
}

#[test]
fn finetune_switches_to_online_updates() {
    let dir = tempfile::tempdir().unwrap();
    let seq = load(&exported(dir.path(), 5, 6, 1.0));
    let truth = truth_height(dir.path());
    let label = 1.1 * truth;
    let mut cfg = Config::default();
    cfg.pipeline.mode = "finetune:2".into();
    cfg.pipeline.offline_height = Some(label);
    let report = run_pipeline(&[seq], &cfg, 4, &[]).unwrap();
    let h: Vec<f64> = report.epochs.iter().map(|e| e.hstar.unwrap()).collect();
    assert_eq!(&h[..2], &[label, label]);
    // online updates pull the label toward the measured height
    assert!(h[2] < label && h[3] < h[2], "{h:?}");
    assert!((h[3] - truth).abs() < (label - truth).abs());
}

#[test]
fn resuming_from_a_state_file_matches_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let seq = load(&exported(dir.path(), 6, 5, 2.0));
    let cfg = Config::default();
    let full = run_pipeline(std::slice::from_ref(&seq), &cfg, 5, &[]).unwrap();

    let out = dir.path().join("out");
    let first = run_pipeline(std::slice::from_ref(&seq), &cfg, 3, &[]).unwrap();
    write_reports(&first, &out, true).unwrap();
    assert!(out.join(TREND_PLOT).exists());
    let states = read_states(std::io::BufReader::new(
        std::fs::File::open(out.join(STATE_FILE)).unwrap(),
    ))
    .unwrap();
    let rest = run_pipeline(&[seq], &cfg, 2, &states).unwrap();
    assert_eq!(rest.epochs.last().unwrap().epoch, 5);
    let (a, b) = (
        full.states[0].hstar().unwrap(),
        rest.states[0].hstar().unwrap(),
    );
    assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
}

#[test]
fn unreadable_frames_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let m = exported(dir.path(), 7, 3, 1.0);
    std::fs::remove_file(m.resolve(&m.frames[1].depth)).unwrap();
    let seq = load(&m);
    assert_eq!(seq.frames.len(), 2);
    assert_eq!(seq.skipped[0].0, m.frames[1].id);
    let report = run_pipeline(&[seq], &Config::default(), 1, &[]).unwrap();
    assert_eq!(report.skipped.len(), 1);

    for f in &m.frames {
        let _ = std::fs::remove_file(m.resolve(&f.depth));
    }
    assert!(matches!(load_sequence(&m, 1.59), Err(Error::Validation(_))));
}

#[test]
fn several_sequences_keep_separate_states() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let seqs = [
        load(&exported(&a, 8, 4, 1.0)),
        load(&exported(&b, 9, 4, 5.0)),
    ];
    let report = run_pipeline(&seqs, &Config::default(), 3, &[]).unwrap();
    assert_eq!(report.states.len(), 2);
    for (state, dir) in report.states.iter().zip([&a, &b]) {
        let truth = truth_height(dir);
        assert!((state.hstar().unwrap() - truth).abs() / truth < 0.02);
    }
}
