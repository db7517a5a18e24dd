//! Metric scale recovery for monocular road-scene depth.
//!
//! The road's camera height is invariant along a driving sequence. Measuring it from a
//! depth map that is correct only up to scale, and fixing that scale with the known
//! heights of vehicles in view, yields a metric pseudo label for the camera height.
//! Aggregated over frames and epochs, this label supervises depth at metric scale.
//!
//! Modules, roughly in pipeline order:
//!
//! - [`geometry`]: pinhole model, back-projection and per-pixel normals.
//! - [`camheight`]: per-pixel and per-frame camera height, road normal.
//! - [`silhouette`]: object silhouette heights and the per-frame scale factor.
//! - [`size_prior`]: fixed or per-instance object height priors.
//! - [`outlier`]: horizon-based plausibility filtering of objects.
//! - [`losses`]: photometric, smoothness, camera-height and auxiliary losses, schedules
//!   and analytic gradients.
//! - [`epoch`]: per-sequence pseudo camera height updated across epochs.
//! - [`simulator`]: ray-cast synthetic scenes used as a ground-truth oracle.
//! - [`io`], [`metrics`], [`preprocess`], [`pipeline`], [`refine`]: file formats,
//!   evaluation and orchestration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camheight;
pub mod epoch;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod outlier;
pub mod pipeline;
pub mod preprocess;
pub mod refine;
pub mod silhouette;
pub mod simulator;
pub mod size_prior;
pub mod stats;

pub use error::{Error, Result};
