//! Frame selection and focal-length alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics};
use crate::losses::Image;

/// Thresholds for dropping frames recorded while the camera stood still. The defaults
/// were calibrated on simulator pairs, not taken from any dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticFilter {
    /// Intensity change above which a pixel counts as changed.
    pub pixel_threshold: f64,
    /// Minimum fraction of changed pixels for a frame to be kept.
    pub fraction_threshold: f64,
}

impl Default for StaticFilter {
    fn default() -> Self {
        Self {
            pixel_threshold: 0.03,
            fraction_threshold: 0.05,
        }
    }
}

/// `true` to keep the frame. Intensity change is averaged over channels.
pub fn static_frame_filter(a: &Image, b: &Image, filter: &StaticFilter) -> Result<bool> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    let ch = a.channels();
    let changed = a
        .data()
        .chunks_exact(ch)
        .zip(b.data().chunks_exact(ch))
        .filter(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
                / ch as f64
                > filter.pixel_threshold
        })
        .count();
    let total = a.width() * a.height();
    Ok(changed as f64 >= filter.fraction_threshold * total as f64)
}

/// Uniform resize by `target_f / fx` followed by a centered crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalAlignment {
    pub scale: f64,
    /// Size after resizing, before cropping.
    pub resized: (usize, usize),
    /// Top-left corner of the crop in the resized image.
    pub offset: (usize, usize),
    pub output: (usize, usize),
    pub intrinsics: Intrinsics,
}

impl FocalAlignment {
    /// `output = None` keeps the whole resized image.
    pub fn new(
        dims: (usize, usize),
        intr: &Intrinsics,
        target_f: f64,
        output: Option<(usize, usize)>,
    ) -> Result<Self> {
        if !(target_f > 0.0 && target_f.is_finite()) {
            return Err(Error::invalid(format!(
                "target focal length must be positive, got {target_f}"
            )));
        }
        let scale = target_f / intr.fx;
        let resized = (
            (dims.0 as f64 * scale).round() as usize,
            (dims.1 as f64 * scale).round() as usize,
        );
        let output = output.unwrap_or(resized);
        if output.0 == 0 || output.1 == 0 || output.0 > resized.0 || output.1 > resized.1 {
            return Err(Error::invalid(format!(
                "crop {}x{} does not fit the resized {}x{} image",
                output.0, output.1, resized.0, resized.1
            )));
        }
        let offset = ((resized.0 - output.0) / 2, (resized.1 - output.1) / 2);
        let r = intr.resized(scale);
        let intrinsics = Intrinsics {
            cx: r.cx - offset.0 as f64,
            cy: r.cy - offset.1 as f64,
            ..r
        };
        Ok(Self {
            scale,
            resized,
            offset,
            output,
            intrinsics,
        })
    }

    /// Continuous source coordinates of output pixel `(u, v)`.
    fn source_coords(&self, u: usize, v: usize) -> (f64, f64) {
        let x = (u + self.offset.0) as f64;
        let y = (v + self.offset.1) as f64;
        ((x + 0.5) / self.scale - 0.5, (y + 0.5) / self.scale - 0.5)
    }

    fn nearest(&self, u: usize, v: usize, dims: (usize, usize)) -> usize {
        let (x, y) = self.source_coords(u, v);
        let xi = (x.round().max(0.0) as usize).min(dims.0 - 1);
        let yi = (y.round().max(0.0) as usize).min(dims.1 - 1);
        yi * dims.0 + xi
    }

    /// Bilinear resampling of an image, clamping at the borders.
    pub fn apply_image(&self, img: &Image) -> Result<Image> {
        let (w, h) = img.dims();
        let ch = img.channels();
        let (ow, oh) = self.output;
        let mut data = Vec::with_capacity(ow * oh * ch);
        let mut px = vec![0.0; ch];
        for v in 0..oh {
            for u in 0..ow {
                let (x, y) = self.source_coords(u, v);
                let x = x.clamp(0.0, (w - 1) as f64);
                let y = y.clamp(0.0, (h - 1) as f64);
                img.sample_bilinear(x, y, &mut px)
                    .ok_or_else(|| Error::invalid("resampling outside the image"))?;
                data.extend_from_slice(&px);
            }
        }
        Image::new(ow, oh, ch, data)
    }

    /// Nearest-neighbor resampling; depth values are distances and stay unchanged.
    pub fn apply_depth(&self, depth: &DepthMap) -> Result<DepthMap> {
        let dims = depth.dims();
        let (ow, oh) = self.output;
        let vals = (0..oh)
            .flat_map(|v| (0..ow).map(move |u| (u, v)))
            .map(|(u, v)| depth.values()[self.nearest(u, v, dims)])
            .collect();
        DepthMap::new(ow, oh, vals)
    }

    /// Nearest-neighbor resampling of a label image.
    pub fn apply_labels(&self, labels: &[u8], dims: (usize, usize)) -> Result<Vec<u8>> {
        if labels.len() != dims.0 * dims.1 {
            return Err(Error::invalid("label image has the wrong size"));
        }
        let (ow, oh) = self.output;
        Ok((0..oh)
            .flat_map(|v| (0..ow).map(move |u| (u, v)))
            .map(|(u, v)| labels[self.nearest(u, v, dims)])
            .collect())
    }
}

/// Resize an image so its focal length becomes `target_f`, then center-crop.
pub fn align_focal_length(
    img: &Image,
    intr: &Intrinsics,
    target_f: f64,
    output: Option<(usize, usize)>,
) -> Result<(Image, Intrinsics)> {
    let a = FocalAlignment::new(img.dims(), intr, target_f, output)?;
    Ok((a.apply_image(img)?, a.intrinsics))
}
