//! Standard monocular depth evaluation metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Default maximum ground-truth depth considered, meters.
pub const DEFAULT_DEPTH_CAP: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Pixels evaluated.
    pub count: usize,
}

/// Metrics over pixels where the ground truth is valid and within `cap`, the
/// prediction is valid, and `mask` (if given) is set. Predictions are not clamped.
pub fn compute_depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&[bool]>,
    cap: f64,
) -> Result<MetricsReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    if !(cap > 0.0) {
        return Err(Error::invalid(format!(
            "depth cap must be positive, got {cap}"
        )));
    }
    if let Some(m) = mask {
        if m.len() != gt.values().len() {
            return Err(Error::invalid("evaluation mask has the wrong size"));
        }
    }
    let (mut abs_rel, mut sq_rel, mut se, mut se_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    let mut n = 0usize;
    for (i, (&p, &g)) in pred.values().iter().zip(gt.values()).enumerate() {
        if mask.is_some_and(|m| !m[i]) || !(g > 0.0 && g <= cap) || !(p > 0.0 && p.is_finite()) {
            continue;
        }
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        se += diff * diff;
        let dl = p.ln() - g.ln();
        se_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (k, t) in [1.25, 1.25f64.powi(2), 1.25f64.powi(3)]
            .into_iter()
            .enumerate()
        {
            if ratio < t {
                within[k] += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("no valid pixels to evaluate".into()));
    }
    let nf = n as f64;
    Ok(MetricsReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (se / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> DepthMap {
        DepthMap::new(4, 3, (1..=12).map(|k| k as f64 * 3.0).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let m = compute_depth_metrics(&ramp(), &ramp(), None, 80.0).unwrap();
        assert_eq!(
            (m.abs_rel, m.sq_rel, m.rmse, m.rmse_log),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
        assert_eq!(m.count, 12);
    }

    #[test]
    fn uniform_ratios() {
        let gt = ramp();
        let m = compute_depth_metrics(&gt.scaled(2.0), &gt, None, 80.0).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-12);
        assert!((m.rmse_log - 2f64.ln()).abs() < 1e-12);
        // 2 exceeds 1.25^3 = 1.953125
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0));
        let m = compute_depth_metrics(&gt.scaled(1.2), &gt, None, 80.0).unwrap();
        assert_eq!(m.delta1, 1.0);
        let m = compute_depth_metrics(&gt.scaled(1.0 / 1.5), &gt, None, 80.0).unwrap();
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 1.0, 1.0));
    }

    #[test]
    fn cap_mask_and_errors() {
        let gt = ramp();
        let m = compute_depth_metrics(&gt, &gt, None, 10.0).unwrap();
        assert_eq!(m.count, 3);
        let mask: Vec<bool> = (0..12).map(|k| k % 2 == 0).collect();
        assert_eq!(
            compute_depth_metrics(&gt, &gt, Some(&mask), 80.0)
                .unwrap()
                .count,
            6
        );
        let empty = DepthMap::filled(4, 3, 0.0);
        assert!(compute_depth_metrics(&gt, &empty, None, 80.0).is_err());
        assert!(compute_depth_metrics(&gt, &DepthMap::filled(3, 3, 1.0), None, 80.0).is_err());
    }

    proptest! {
        #[test]
        fn deltas_are_monotone(vals in prop::collection::vec((0.5f64..60.0, 0.1f64..100.0), 1..50)) {
            let n = vals.len();
            let gt = DepthMap::new(n, 1, vals.iter().map(|v| v.0).collect()).unwrap();
            let pred = DepthMap::new(n, 1, vals.iter().map(|v| v.1).collect()).unwrap();
            let m = compute_depth_metrics(&pred, &gt, None, 80.0).unwrap();
            prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
            prop_assert!((0.0..=1.0).contains(&m.delta1) && m.delta3 <= 1.0);
            prop_assert!(m.abs_rel >= 0.0 && m.sq_rel >= 0.0 && m.rmse >= 0.0 && m.rmse_log >= 0.0);
        }
    }
}
