//! Order statistics for report tables.
//!
//! Quantiles use lower interpolation: for `n` sorted values the `p`-quantile
//! is the element at index `floor(p * (n - 1))`. The median of an even-sized
//! sample is therefore the lower of the two middle values.

use serde::{Deserialize, Serialize};

/// Lower-interpolated quantile; `None` for an empty sample. NaNs must be filtered out by the caller.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, p))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let idx = (p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx]
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        Some(Spread { median: quantile_sorted(&v, 0.5), q1, q3, iqr: q3 - q1, n: v.len() })
    }
}
