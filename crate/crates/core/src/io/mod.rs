//! File formats: PFM depth maps, PGM masks and images, TOML configuration and
//! manifests, CSV reports and SVG plots.

pub mod config;
pub mod export;
pub mod manifest;
pub mod pfm;
pub mod pgm;
pub mod report;

pub use config::Config;
pub use manifest::{FrameEntry, SequenceManifest};
