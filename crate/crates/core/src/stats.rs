//! Order statistics and the five-number patch summary.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Quantile of already sorted data, linearly interpolated between order
/// statistics at position `(n - 1) * q` (the "inclusive" convention).
///
/// `[1, 2, 3, 4]` has lower quartile `1.75`, median `2.5`, upper quartile
/// `3.25`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = T::lit(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn sort_values<T: Scalar>(values: &mut [T]) {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
}

/// Lower quartile, median and upper quartile; `None` when `values` is empty.
pub fn quartiles<T: Scalar>(values: &mut [T]) -> Option<[T; 3]> {
    if values.is_empty() {
        return None;
    }
    sort_values(values);
    Some([
        quantile_sorted(values, 0.25),
        quantile_sorted(values, 0.5),
        quantile_sorted(values, 0.75),
    ])
}

/// Cross-patch summary: mean, median, max, min, population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchStats<T> {
    pub mean: T,
    pub median: T,
    pub max: T,
    pub min: T,
    pub std: T,
}

impl<T: Scalar> PatchStats<T> {
    pub fn of(values: &[T]) -> Self {
        assert!(!values.is_empty(), "statistics of empty data");
        let n = T::from_usize_lossy(values.len());
        let mean = values.iter().copied().sum::<T>() / n;
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let mut sorted = values.to_vec();
        sort_values(&mut sorted);
        Self {
            mean,
            median: quantile_sorted(&sorted, 0.5),
            max: sorted[sorted.len() - 1],
            min: sorted[0],
            std: var.sqrt(),
        }
    }

    /// `[mean, median, max, min, std]`.
    pub fn to_array(self) -> [T; 5] {
        [self.mean, self.median, self.max, self.min, self.std]
    }
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len())
}
