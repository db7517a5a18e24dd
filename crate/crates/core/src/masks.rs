//! Road and object-instance segmentation masks for a single frame.

use crate::error::{Error, Result};

/// Label value marking road pixels in a road-mask file.
pub const ROAD_LABEL: u8 = 255;
/// Largest instance id representable in an 8-bit instance-mask file.
pub const MAX_INSTANCE_ID: u8 = 254;

/// Per-pixel road membership.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl RoadMask {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::invalid(format!(
                "road mask of {width}x{height} needs {} entries, got {}",
                width * height,
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    /// Road pixels are those labelled [`ROAD_LABEL`].
    pub fn from_labels(width: usize, height: usize, labels: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            labels.iter().map(|&l| l == ROAD_LABEL).collect(),
        )
    }

    pub fn to_labels(&self) -> Vec<u8> {
        self.mask
            .iter()
            .map(|&m| if m { ROAD_LABEL } else { 0 })
            .collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.mask[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_u: usize,
    pub min_v: usize,
    pub max_u: usize,
    pub max_v: usize,
}

impl BoundingBox {
    /// Height in pixels, counting both end rows.
    pub fn height(&self) -> usize {
        self.max_v - self.min_v + 1
    }

    pub fn width(&self) -> usize {
        self.max_u - self.min_u + 1
    }
}

/// One segmented object: its id, class label and the pixels `(u, v)` it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub id: u32,
    pub class: String,
    pixels: Vec<(usize, usize)>,
    bbox: BoundingBox,
}

impl ObjectInstance {
    pub fn from_pixels(
        id: u32,
        class: impl Into<String>,
        mut pixels: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::invalid(format!("instance {id} has an empty mask")));
        }
        pixels.sort_by_key(|&(u, v)| (v, u));
        pixels.dedup();
        let bbox = BoundingBox {
            min_u: pixels.iter().map(|p| p.0).min().unwrap_or(0),
            max_u: pixels.iter().map(|p| p.0).max().unwrap_or(0),
            min_v: pixels.first().map(|p| p.1).unwrap_or(0),
            max_v: pixels.last().map(|p| p.1).unwrap_or(0),
        };
        Ok(Self {
            id,
            class: class.into(),
            pixels,
            bbox,
        })
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    /// Copy of this instance with the lowest `fraction` of its pixels removed,
    /// emulating occlusion of the object's lower body.
    pub fn with_bottom_removed(&self, fraction: f64) -> Result<Self> {
        let keep = ((1.0 - fraction.clamp(0.0, 1.0)) * self.pixels.len() as f64).ceil() as usize;
        // pixels are sorted top row first
        Self::from_pixels(self.id, self.class.clone(), self.pixels[..keep].to_vec())
    }
}

/// Split a label image (0 background, 1..=254 instance ids) into instances.
pub fn instances_from_labels(
    width: usize,
    height: usize,
    labels: &[u8],
    class: &str,
) -> Result<Vec<ObjectInstance>> {
    if labels.len() != width * height {
        return Err(Error::invalid("instance label image has the wrong size"));
    }
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); MAX_INSTANCE_ID as usize + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 && l <= MAX_INSTANCE_ID {
            buckets[l as usize].push((i % width, i / width));
        }
    }
    buckets
        .into_iter()
        .enumerate()
        .filter(|(_, px)| !px.is_empty())
        .map(|(id, px)| ObjectInstance::from_pixels(id as u32, class, px))
        .collect()
}

/// Render instances back into a label image.
pub fn instances_to_labels(
    width: usize,
    height: usize,
    instances: &[ObjectInstance],
) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; width * height];
    for inst in instances {
        if inst.id == 0 || inst.id > MAX_INSTANCE_ID as u32 {
            return Err(Error::invalid(format!(
                "instance id {} does not fit an 8-bit mask",
                inst.id
            )));
        }
        for &(u, v) in inst.pixels() {
            labels[v * width + u] = inst.id as u8;
        }
    }
    Ok(labels)
}

/// Road mask and object instances for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub road: RoadMask,
    pub instances: Vec<ObjectInstance>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_is_tight() {
        let inst = ObjectInstance::from_pixels(3, "car", vec![(4, 2), (5, 9), (7, 5)]).unwrap();
        assert_eq!(
            inst.bbox(),
            BoundingBox {
                min_u: 4,
                min_v: 2,
                max_u: 7,
                max_v: 9
            }
        );
        assert_eq!(inst.bbox().height(), 8);
        assert!(ObjectInstance::from_pixels(1, "car", vec![]).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let (w, h) = (6, 4);
        let mut labels = vec![0u8; w * h];
        labels[1] = 2;
        labels[7] = 2;
        labels[20] = 9;
        let inst = instances_from_labels(w, h, &labels, "car").unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].id, 2);
        assert_eq!(instances_to_labels(w, h, &inst).unwrap(), labels);
    }

    #[test]
    fn bottom_removal_keeps_top_rows() {
        let px: Vec<_> = (0..10).map(|v| (0, v)).collect();
        let inst = ObjectInstance::from_pixels(1, "car", px).unwrap();
        let cut = inst.with_bottom_removed(0.3).unwrap();
        assert_eq!(cut.pixels().len(), 7);
        assert_eq!(cut.bbox().min_v, 0);
        assert_eq!(cut.bbox().max_v, 6);
    }
}
