//! Order statistics used throughout the pipeline.

use std::cmp::Ordering;

/// Median of a slice, reordering it in place. Even counts return the midpoint of the
/// two central values. NaNs must be filtered out by the caller.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let lower_max = lower.iter().copied().max_by(total_cmp)?;
        Some(0.5 * (lower_max + upper))
    }
}

/// Median of an iterator of values.
pub fn median<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    median_in_place(&mut v)
}

fn total_cmp(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn odd_and_even_counts() {
        assert_eq!(median([1.6, 1.8, 1.7]), Some(1.7));
        assert!((median([1.6, 1.8]).unwrap() - 1.7).abs() < 1e-15);
        assert_eq!(median(Vec::<f64>::new()), None);
        assert_eq!(median([3.0]), Some(3.0));
    }

    proptest! {
        #[test]
        fn matches_sorted_reference(mut v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let m = median(v.clone()).unwrap();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            let expected = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
            prop_assert_eq!(m, expected);
        }

        #[test]
        fn commutes_with_positive_scaling(v in prop::collection::vec(0.1f64..10.0, 1..40), k in 0.1f64..10.0) {
            let a = median(v.iter().map(|x| x * k)).unwrap();
            let b = k * median(v.clone()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }
}
