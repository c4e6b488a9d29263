//! Order statistics for experiment summaries.

use serde::{Deserialize, Serialize};

/// Boxplot quantiles of the finite values of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear interpolation between closest ranks on sorted data
/// (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

impl Quantiles {
    /// Non-finite values are ignored; an empty sample gives NaN quantiles.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        Self {
            count: v.len(),
            min: quantile_sorted(&v, 0.0),
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
            max: quantile_sorted(&v, 1.0),
        }
    }
}

pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    Quantiles::from_values(values).median
}

/// `log10(max(x, floor))`, keeping exact zeros plottable.
pub fn log10_floored(x: f64, floor: f64) -> f64 {
    x.max(floor).log10()
}
