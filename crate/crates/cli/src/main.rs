use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use camh_core::camheight::road_geometry;
use camh_core::epoch::{read_states, SequenceState, SupervisionMode};
use camh_core::io::config::Config;
use camh_core::io::export::{export_sequence, ExportOptions, MANIFEST_FILE};
use camh_core::io::pfm::load_pfm;
use camh_core::io::report::{save_csv, LossRow, MetricsRow};
use camh_core::io::SequenceManifest;
use camh_core::losses::total_loss;
use camh_core::metrics::compute_depth_metrics;
use camh_core::pipeline::{
    evaluate_frames, load_sequence, run_pipeline, write_reports, SequenceData,
};
use camh_core::preprocess::static_frame_filter;
use camh_core::refine::scale_recovery_refine;
use clap::{Args, Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "camh",
    version,
    about = "Metric camera height and depth scale from road-scene depth maps"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configured number of epochs.
    #[arg(long, global = true)]
    epochs: Option<u32>,
    /// online, offline or finetune:N
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth.
    Simulate {
        #[arg(long)]
        frames: Option<usize>,
        /// Global factor applied to the written depth maps.
        #[arg(long)]
        depth_scale: Option<f64>,
        /// Also write textured grayscale images.
        #[arg(long)]
        images: bool,
        #[arg(long)]
        sequence_id: Option<String>,
    },
    /// Estimate per-frame and per-sequence metric camera heights over epochs.
    Camheight {
        #[arg(required = true, value_name = "MANIFEST")]
        manifests: Vec<PathBuf>,
        /// Continue from a state file written by an earlier run.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
    },
    /// Evaluate per-frame loss terms at one schedule epoch.
    Losses {
        manifest: PathBuf,
        /// Zero-based schedule epoch.
        #[arg(long, default_value_t = 0)]
        epoch: u32,
        /// Supervision camera height; enables the camera-height term.
        #[arg(long)]
        hstar: Option<f64>,
        /// Take the supervision height from a state file.
        #[arg(long, value_name = "FILE", conflicts_with = "hstar")]
        state: Option<PathBuf>,
    },
    /// Recover the sequence's global depth scale by descending the geometric losses.
    Refine {
        manifest: PathBuf,
        /// Supervision camera height; estimated over `--epochs` epochs when absent.
        #[arg(long)]
        hstar: Option<f64>,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Depth metrics against the ground truth listed in a manifest.
    Report {
        manifest: PathBuf,
        /// Multiply every predicted depth map by this factor.
        #[arg(long, conflicts_with_all = ["hstar", "state"])]
        scale: Option<f64>,
        /// Scale each frame so its camera height equals this value.
        #[arg(long)]
        hstar: Option<f64>,
        /// Like `--hstar`, with the height taken from a state file.
        #[arg(long, value_name = "FILE", conflicts_with = "hstar")]
        state: Option<PathBuf>,
    },
}

/// Bad arguments or configuration detected outside clap.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(mut e) = cause.downcast_ref::<camh_core::Error>() {
            while let camh_core::Error::File { source, .. } = e {
                e = source;
            }
            return match e {
                camh_core::Error::Config(_) => EXIT_USAGE,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CAMH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            usage(format!(
                "CAMH_THREADS must be a positive integer, got '{value}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn load_config(g: &GlobalArgs) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = g.epochs {
        cfg.pipeline.epochs = epochs;
    }
    if let Some(mode) = &g.mode {
        cfg.pipeline.mode = mode.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(path: &Path, cfg: &Config) -> Result<SequenceData> {
    let manifest = SequenceManifest::load(path)?;
    let seq = load_sequence(&manifest, cfg.pipeline.default_prior)?;
    for (frame, why) in &seq.skipped {
        eprintln!("warning: skipped frame {frame} of {}: {why}", seq.id);
    }
    Ok(seq)
}

fn load_state_file(path: &Path) -> Result<Vec<SequenceState>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_states(std::io::BufReader::new(file)).map_err(|e| e.at_path(path))?)
}

fn state_height(path: &Path, sequence: &str) -> Result<f64> {
    load_state_file(path)?
        .iter()
        .find(|s| s.id() == sequence)
        .and_then(|s| s.hstar())
        .with_context(|| {
            format!(
                "{} has no camera height for sequence '{sequence}'",
                path.display()
            )
        })
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn simulate(
    cfg: &Config,
    out: &Path,
    frames: Option<usize>,
    depth_scale: Option<f64>,
    images: bool,
    sequence_id: Option<String>,
) -> Result<()> {
    let mut sim = cfg.simulate.clone();
    if let Some(n) = frames {
        sim.frames = n;
    }
    if let Some(k) = depth_scale {
        sim.depth_scale = k;
    }
    sim.images |= images;
    if let Some(id) = sequence_id {
        sim.sequence_id = id;
    }
    let check = Config {
        simulate: sim.clone(),
        ..cfg.clone()
    };
    check.validate()?;
    let scenes = sim.scene_configs(cfg.seed)?;
    let options = ExportOptions {
        depth_scale: sim.depth_scale,
        images: sim.images,
    };
    let manifest = export_sequence(out, &sim.sequence_id, &scenes, &options)?;
    println!(
        "wrote {} frames of '{}' to {}",
        manifest.frames.len(),
        manifest.sequence_id,
        out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn camheight(cfg: &Config, out: &Path, manifests: &[PathBuf], resume: Option<&Path>) -> Result<()> {
    let sequences = manifests
        .iter()
        .map(|m| load_manifest(m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let states = match resume {
        Some(path) => load_state_file(path)?,
        None => Vec::new(),
    };
    let report = run_pipeline(&sequences, cfg, cfg.pipeline.epochs, &states)?;
    write_reports(&report, out, cfg.pipeline.plot)?;
    for s in &report.states {
        match s.hstar() {
            Some(h) => println!(
                "{}: camera height {h:.4} m after {} epochs",
                s.id(),
                s.epochs_completed()
            ),
            None => println!(
                "{}: no camera height after {} epochs",
                s.id(),
                s.epochs_completed()
            ),
        }
    }
    Ok(())
}

fn losses(
    cfg: &Config,
    out: &Path,
    manifest: &Path,
    epoch: u32,
    hstar: Option<f64>,
    state: Option<&Path>,
) -> Result<()> {
    let seq = load_manifest(manifest, cfg)?;
    let supervision = match (hstar, state) {
        (Some(h), _) if !(h > 0.0 && h.is_finite()) => {
            return Err(usage(format!("--hstar must be positive, got {h}")))
        }
        (Some(h), _) => Some(h),
        (None, Some(path)) => Some(state_height(path, &seq.id)?),
        (None, None) => None,
    };
    let outcomes = evaluate_frames(&seq, supervision, cfg.pipeline.outlier_threshold)?;
    let mut rows = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        let b = total_loss(&o.losses, &cfg.losses, epoch)?;
        let keep = match (
            i.checked_sub(1).and_then(|p| seq.frames[p].image.as_ref()),
            &seq.frames[i].image,
        ) {
            (Some(prev), Some(cur)) => Some(static_frame_filter(prev, cur, &cfg.static_filter)?),
            _ => None,
        };
        rows.push(LossRow {
            sequence: seq.id.clone(),
            frame: o.frame_id.clone(),
            supervision,
            inliers: o.inliers.len(),
            lambda_cam: b.lambda_cam,
            lambda_aux: b.lambda_aux,
            loss_cam: o.losses.cam,
            loss_aux: o.losses.aux,
            loss_sm: o.losses.sm,
            loss_total: b.total,
            keep,
        });
    }
    create_out_dir(out)?;
    let path = out.join("losses.csv");
    save_csv(&path, &rows)?;
    let mean = rows.iter().map(|r| r.loss_total).sum::<f64>() / rows.len().max(1) as f64;
    println!(
        "{}: mean scheduled loss {mean:.6} over {} frames, written to {}",
        seq.id,
        rows.len(),
        path.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct StepRow {
    step: usize,
    loss: f64,
}

fn refine(
    cfg: &Config,
    out: &Path,
    manifest: &Path,
    hstar: Option<f64>,
    steps: Option<u32>,
    learning_rate: Option<f64>,
) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(n) = steps {
        cfg.refine.steps = n;
    }
    if let Some(lr) = learning_rate {
        cfg.refine.learning_rate = lr;
    }
    cfg.validate()?;
    let seq = load_manifest(manifest, &cfg)?;
    let hstar = match hstar {
        Some(h) => Some(h),
        None => {
            let report = run_pipeline(std::slice::from_ref(&seq), &cfg, cfg.pipeline.epochs, &[])?;
            report.states[0].hstar()
        }
    };
    let result = scale_recovery_refine(&seq, &cfg, hstar)?;
    create_out_dir(out)?;
    let rows: Vec<StepRow> = result
        .losses
        .iter()
        .enumerate()
        .map(|(step, &loss)| StepRow { step, loss })
        .collect();
    save_csv(out.join("refine.csv"), &rows)?;
    let target = hstar.map_or_else(|| "none".to_string(), |h| format!("{h:.4} m"));
    println!(
        "{}: scale {:.5} after {} steps ({}), camera height target {target}",
        seq.id,
        result.scale,
        result.steps,
        if result.converged {
            "converged"
        } else {
            "step limit"
        }
    );
    Ok(())
}

fn report(
    cfg: &Config,
    out: &Path,
    manifest_path: &Path,
    scale: Option<f64>,
    hstar: Option<f64>,
    state: Option<&Path>,
) -> Result<()> {
    let manifest = SequenceManifest::load(manifest_path)?;
    let target = match (hstar, state) {
        (Some(h), _) => Some(h),
        (None, Some(path)) => Some(state_height(path, &manifest.sequence_id)?),
        (None, None) => None,
    };
    let fixed = scale.unwrap_or(1.0);
    for v in [Some(fixed), target].into_iter().flatten() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(usage(format!(
                "scale and camera height must be positive, got {v}"
            )));
        }
    }
    let mut rows = Vec::new();
    for entry in &manifest.frames {
        let Some(gt_path) = &entry.gt_depth else {
            continue;
        };
        let pred = load_pfm(manifest.resolve(&entry.depth))?;
        let gt = load_pfm(manifest.resolve(gt_path))?;
        let k = match target {
            Some(h) => {
                let labels = camh_core::io::pgm::load_pgm(manifest.resolve(&entry.road))?;
                let road = camh_core::masks::RoadMask::from_labels(
                    labels.width,
                    labels.height,
                    &labels.data,
                )?;
                h / road_geometry(&pred, &road, &manifest.intrinsics)?
                    .camera_height
                    .value
            }
            None => fixed,
        };
        let m = compute_depth_metrics(&pred.scaled(k), &gt, None, cfg.pipeline.depth_cap)?;
        rows.push(MetricsRow::new(&manifest.sequence_id, &entry.id, k, &m));
    }
    if rows.is_empty() {
        return Err(camh_core::Error::Validation(format!(
            "manifest '{}' lists no ground-truth depth",
            manifest_path.display()
        ))
        .into());
    }
    let n = rows.len() as f64;
    let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let summary = MetricsRow {
        sequence: manifest.sequence_id.clone(),
        frame: "all".into(),
        scale: avg(|r| r.scale),
        abs_rel: avg(|r| r.abs_rel),
        sq_rel: avg(|r| r.sq_rel),
        rmse: avg(|r| r.rmse),
        rmse_log: avg(|r| r.rmse_log),
        delta1: avg(|r| r.delta1),
        delta2: avg(|r| r.delta2),
        delta3: avg(|r| r.delta3),
        count: rows.iter().map(|r| r.count).sum(),
    };
    println!(
        "{}: abs_rel {:.4} sq_rel {:.4} rmse {:.3} rmse_log {:.4} d1 {:.3} d2 {:.3} d3 {:.3}",
        summary.sequence,
        summary.abs_rel,
        summary.sq_rel,
        summary.rmse,
        summary.rmse_log,
        summary.delta1,
        summary.delta2,
        summary.delta3
    );
    rows.push(summary);
    create_out_dir(out)?;
    save_csv(out.join("metrics.csv"), &rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    if let Some(mode) = &cli.global.mode {
        mode.parse::<SupervisionMode>()?;
    }
    let cfg = load_config(&cli.global)?;
    let out = cli.global.out_dir.as_path();
    match cli.command {
        Command::Simulate {
            frames,
            depth_scale,
            images,
            sequence_id,
        } => simulate(&cfg, out, frames, depth_scale, images, sequence_id),
        Command::Camheight { manifests, resume } => {
            camheight(&cfg, out, &manifests, resume.as_deref())
        }
        Command::Losses {
            manifest,
            epoch,
            hstar,
            state,
        } => losses(&cfg, out, &manifest, epoch, hstar, state.as_deref()),
        Command::Refine {
            manifest,
            hstar,
            steps,
            learning_rate,
        } => refine(&cfg, out, &manifest, hstar, steps, learning_rate),
        Command::Report {
            manifest,
            scale,
            hstar,
            state,
        } => report(&cfg, out, &manifest, scale, hstar, state.as_deref()),
    }
}

/// The error and its causes, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use camh_core::Error;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let wrapped = |e: Error| anyhow::Error::from(e.at_path("x.pfm")).context("loading");
        assert_eq!(exit_code(&usage("bad flag")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Config("x".into()).into()), EXIT_USAGE);
        assert_eq!(
            exit_code(&wrapped(Error::Validation("x".into()))),
            EXIT_DATA
        );
        assert_eq!(exit_code(&wrapped(Error::NoScale)), EXIT_NUMERICAL);
        assert_eq!(
            exit_code(&Error::Diverged("x".into()).into()),
            EXIT_NUMERICAL
        );
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_DATA);
    }

    #[test]
    fn describe_skips_repeated_causes() {
        let e = anyhow::Error::from(Error::Validation("empty".into()).at_path("a.toml"));
        assert_eq!(describe(&e), "a.toml: validation error: empty");
        let e = anyhow::Error::from(Error::Validation("empty".into())).context("loading");
        assert_eq!(describe(&e), "loading: validation error: empty");
    }
}
