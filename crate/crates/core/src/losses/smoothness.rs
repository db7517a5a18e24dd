use super::image::Image;
use crate::error::{Error, Result};

/// Edge-aware smoothness of mean-normalized disparity:
/// `mean|∂x d*| e^{-|∂x I|} + mean|∂y d*| e^{-|∂y I|}` with forward differences.
///
/// Disparity is row-major with the image's dimensions; zero marks missing depth.
pub fn smoothness_loss(disparity: &[f64], image: &Image) -> Result<f64> {
    let (w, h) = image.dims();
    if disparity.len() != w * h {
        return Err(Error::invalid("disparity and image sizes differ"));
    }
    if disparity.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid("disparity must be nonnegative and finite"));
    }
    let mean = disparity.iter().sum::<f64>() / disparity.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::invalid("disparity has zero mean"));
    }
    let ch = image.channels();
    let img_grad = |a: (usize, usize), b: (usize, usize)| -> f64 {
        (0..ch)
            .map(|c| (image.get(a.0, a.1, c) - image.get(b.0, b.1, c)).abs())
            .sum::<f64>()
            / ch as f64
    };
    let mut sx = 0.0;
    for v in 0..h {
        for u in 0..w.saturating_sub(1) {
            let dd = (disparity[v * w + u + 1] - disparity[v * w + u]).abs() / mean;
            sx += dd * (-img_grad((u + 1, v), (u, v))).exp();
        }
    }
    let mut sy = 0.0;
    for v in 0..h.saturating_sub(1) {
        for u in 0..w {
            let dd = (disparity[(v + 1) * w + u] - disparity[v * w + u]).abs() / mean;
            sy += dd * (-img_grad((u, v + 1), (u, v))).exp();
        }
    }
    let nx = (w.saturating_sub(1) * h).max(1) as f64;
    let ny = (w * h.saturating_sub(1)).max(1) as f64;
    Ok(sx / nx + sy / ny)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_disparity_is_smooth() {
        let img = Image::filled(6, 5, 1, 0.3).unwrap();
        assert_eq!(smoothness_loss(&[0.2; 30], &img).unwrap(), 0.0);
    }

    #[test]
    fn ramp_against_direct_summation() {
        let (w, h) = (7usize, 4usize);
        let img = Image::filled(w, h, 1, 0.5).unwrap();
        let disp: Vec<f64> = (0..w * h).map(|i| 0.1 + 0.05 * (i % w) as f64).collect();
        // direct: every horizontal step is 0.05 / mean, there are no vertical steps
        let mean: f64 = disp.iter().sum::<f64>() / (w * h) as f64;
        let mut total = 0.0;
        let mut n = 0;
        for v in 0..h {
            for u in 0..w - 1 {
                total += (disp[v * w + u + 1] / mean - disp[v * w + u] / mean).abs();
                n += 1;
            }
        }
        let expected = total / n as f64;
        let got = smoothness_loss(&disp, &img).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((expected - 0.05 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn invariant_to_disparity_scale() {
        let (w, h) = (6usize, 6usize);
        let img = Image::new(w, h, 1, (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let disp: Vec<f64> = (0..w * h)
            .map(|i| 0.05 + ((i * 37) % 11) as f64 / 30.0)
            .collect();
        let base = smoothness_loss(&disp, &img).unwrap();
        for k in [0.01, 0.5, 3.0, 250.0] {
            let scaled: Vec<f64> = disp.iter().map(|d| d * k).collect();
            let l = smoothness_loss(&scaled, &img).unwrap();
            assert!((l - base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn zero_mean_is_an_error() {
        let img = Image::filled(3, 3, 1, 0.5).unwrap();
        assert!(smoothness_loss(&[0.0; 9], &img).is_err());
    }
}
