//! SSIM, photometric error, view synthesis and the min-over-sources reconstruction loss.

use rayon::prelude::*;

use super::image::{Image, RelativePose};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    r.clamp(0, last) as usize
}

/// Per-pixel SSIM averaged over channels, using 3x3 mean windows with reflect padding.
pub fn ssim(a: &Image, b: &Image) -> Result<Vec<f64>> {
    a.check_same_dims(b)?;
    let (w, h) = a.dims();
    let ch = a.channels();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..ch {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dv in -1..=1isize {
                    let vv = reflect(v as isize + dv, h);
                    for du in -1..=1isize {
                        let uu = reflect(u as isize + du, w);
                        let x = a.get(uu, vv, c);
                        let y = b.get(uu, vv, c);
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                }
                let (mx, my) = (sx / 9.0, sy / 9.0);
                let vx = sxx / 9.0 - mx * mx;
                let vy = syy / 9.0 - my * my;
                let cxy = sxy / 9.0 - mx * my;
                let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2);
                let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
                acc += (num / den).clamp(-1.0, 1.0);
            }
            *slot = acc / ch as f64;
        }
    });
    Ok(out)
}

/// `(λ/2)(1 - SSIM) + (1 - λ)|a - b|`, L1 averaged over channels.
pub fn photometric_error(a: &Image, b: &Image, lambda_pe: f64) -> Result<Vec<f64>> {
    let s = ssim(a, b)?;
    let ch = a.channels();
    Ok(s.iter()
        .enumerate()
        .map(|(i, &sv)| {
            let l1: f64 = (0..ch)
                .map(|c| (a.data()[i * ch + c] - b.data()[i * ch + c]).abs())
                .sum::<f64>()
                / ch as f64;
            0.5 * lambda_pe * (1.0 - sv) + (1.0 - lambda_pe) * l1
        })
        .collect())
}

/// A synthesized target view and the pixels that received a sample.
#[derive(Debug, Clone)]
pub struct Warped {
    pub image: Image,
    pub valid: Vec<bool>,
}

impl Warped {
    /// Valid pixels whose full 8-neighborhood is also valid.
    pub fn interior_valid(&self) -> Vec<bool> {
        let (w, h) = self.image.dims();
        let mut out = vec![false; w * h];
        for v in 1..h.saturating_sub(1) {
            for u in 1..w.saturating_sub(1) {
                out[v * w + u] =
                    (v - 1..=v + 1).all(|vv| (u - 1..=u + 1).all(|uu| self.valid[vv * w + uu]));
            }
        }
        out
    }
}

/// Source-image coordinates of target pixel `(u, v)` with depth `depth`.
pub fn warp_coords(
    intr: &Intrinsics,
    pose: &RelativePose,
    u: f64,
    v: f64,
    depth: f64,
) -> Option<[f64; 2]> {
    let p = intr.backproject(u, v, depth).ok()?;
    intr.project(&pose.transform(&p)).ok().map(|(px, _)| px)
}

/// Reconstruct the target view by bilinearly sampling `source` at the projections of
/// the target depth. Samples outside the source frustum are flagged invalid and set to 0.
pub fn warp_view(
    source: &Image,
    depth: &DepthMap,
    pose: &RelativePose,
    intr: &Intrinsics,
) -> Result<Warped> {
    if source.dims() != depth.dims() {
        return Err(Error::DimensionMismatch {
            expected: depth.dims(),
            actual: source.dims(),
        });
    }
    let (w, h) = depth.dims();
    let ch = source.channels();
    let mut data = vec![0.0; w * h * ch];
    let mut valid = vec![false; w * h];
    data.par_chunks_mut(w * ch)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (row, vrow))| {
            for u in 0..w {
                let Some(d) = depth.get(u, v) else { continue };
                let Some([su, sv]) = warp_coords(intr, pose, u as f64, v as f64, d) else {
                    continue;
                };
                if source
                    .sample_bilinear(su, sv, &mut row[u * ch..(u + 1) * ch])
                    .is_some()
                {
                    vrow[u] = true;
                }
            }
        });
    Ok(Warped {
        image: Image::new(w, h, ch, data)?,
        valid,
    })
}

/// Mean over pixels of the per-pixel minimum photometric error across sources.
///
/// With `automask`, pixels whose best warped error is not strictly below the best
/// error of the unwarped sources are dropped.
pub fn reconstruction_loss(
    target: &Image,
    sources: &[Image],
    warps: &[Warped],
    automask: bool,
    lambda_pe: f64,
) -> Result<f64> {
    if warps.is_empty() {
        return Err(Error::invalid(
            "reconstruction loss needs at least one source",
        ));
    }
    if automask && sources.len() != warps.len() {
        return Err(Error::invalid(
            "auto-masking needs the unwarped source for every warp",
        ));
    }
    let n = target.width() * target.height();
    let mut best = vec![f64::INFINITY; n];
    for warp in warps {
        let pe = photometric_error(target, &warp.image, lambda_pe)?;
        for ((b, e), &ok) in best.iter_mut().zip(pe).zip(&warp.valid) {
            if ok && e < *b {
                *b = e;
            }
        }
    }
    if automask {
        let mut identity = vec![f64::INFINITY; n];
        for src in sources {
            let pe = photometric_error(target, src, lambda_pe)?;
            for (b, e) in identity.iter_mut().zip(pe) {
                *b = b.min(e);
            }
        }
        for (b, id) in best.iter_mut().zip(identity) {
            if !(*b < id) {
                *b = f64::INFINITY;
            }
        }
    }
    let (sum, count) = best
        .iter()
        .filter(|b| b.is_finite())
        .fold((0.0, 0usize), |(s, c), b| (s + b, c + 1));
    if count == 0 {
        return Err(Error::UndefinedLoss(
            "no pixels left for the reconstruction loss".into(),
        ));
    }
    Ok(sum / count as f64)
}
