//! Sequence manifests: intrinsics plus an ordered list of per-frame files.
//!
//! ```toml
//! sequence_id = "drive_0001"
//!
//! [intrinsics]
//! fx = 370.0
//! fy = 370.0
//! cx = 319.5
//! cy = 95.5
//!
//! [[frames]]
//! id = "000000"
//! depth = "depth/000000.pfm"
//! road = "road/000000.pgm"
//! instances = "instances/000000.pgm"
//! dimensions = "dims/000000.csv"   # optional per-instance size table
//! image = "image/000000.pgm"       # optional
//! gt_depth = "gt/000000.pfm"       # optional, for evaluation
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    pub depth: PathBuf,
    pub road: PathBuf,
    pub instances: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_depth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub frames: Vec<FrameEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SequenceManifest {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: SequenceManifest =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|t| Self::from_toml(&t, base))
            .map_err(|e| e.at_path(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence_id.is_empty()
            || self
                .sequence_id
                .chars()
                .any(|c| c.is_whitespace() || c == ',')
        {
            return Err(Error::Validation(format!(
                "invalid sequence id '{}'",
                self.sequence_id
            )));
        }
        self.intrinsics.validate()?;
        if self.frames.is_empty() {
            return Err(Error::Validation(format!(
                "sequence '{}' has no frames",
                self.sequence_id
            )));
        }
        let mut seen = BTreeSet::new();
        for f in &self.frames {
            if f.id.is_empty() || f.id.contains(',') || !seen.insert(f.id.as_str()) {
                return Err(Error::Validation(format!(
                    "frame id '{}' is empty, contains a comma or repeats",
                    f.id
                )));
            }
        }
        Ok(())
    }

    /// `path` relative to the manifest's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
sequence_id = "s1"
[intrinsics]
fx = 370.0
fy = 370.0
cx = 319.5
cy = 95.5
[[frames]]
id = "0"
depth = "d/0.pfm"
road = "r/0.pgm"
instances = "i/0.pgm"
[[frames]]
id = "1"
depth = "/abs/1.pfm"
road = "r/1.pgm"
instances = "i/1.pgm"
dimensions = "dims/1.csv"
"#;

    #[test]
    fn parse_and_resolve() {
        let m = SequenceManifest::from_toml(TEXT, "/data/seq").unwrap();
        assert_eq!(m.frames.len(), 2);
        assert_eq!(
            m.resolve(&m.frames[0].depth),
            PathBuf::from("/data/seq/d/0.pfm")
        );
        assert_eq!(m.resolve(&m.frames[1].depth), PathBuf::from("/abs/1.pfm"));
        assert_eq!(
            m.frames[1].dimensions.as_deref(),
            Some(Path::new("dims/1.csv"))
        );
        let again = SequenceManifest::from_toml(&m.to_toml().unwrap(), "/data/seq").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn invalid_manifests() {
        assert!(
            SequenceManifest::from_toml(&TEXT.replace("id = \"1\"", "id = \"0\""), ".").is_err()
        );
        assert!(SequenceManifest::from_toml(&TEXT.replace("\"s1\"", "\"a b\""), ".").is_err());
        assert!(
            SequenceManifest::from_toml(&TEXT.replace("fx = 370.0", "fx = -1.0"), ".").is_err()
        );
        let no_frames =
            "sequence_id = \"s\"\n[intrinsics]\nfx = 1.0\nfy = 1.0\ncx = 0.0\ncy = 0.0\n";
        assert!(SequenceManifest::from_toml(no_frames, ".").is_err());
    }
}
