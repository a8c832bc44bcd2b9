use serde::{Deserialize, Serialize};

use super::DwtDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// `sign(d) * max(|d| - t, 0)`
    #[default]
    Soft,
    /// Zero when `|d| <= t`, otherwise unchanged.
    Hard,
}

impl ThresholdRule {
    #[inline]
    pub fn apply(self, d: f64, t: f64) -> f64 {
        match self {
            ThresholdRule::Soft => d.signum() * (d.abs() - t).max(0.0),
            ThresholdRule::Hard => {
                if d.abs() <= t {
                    0.0
                } else {
                    d
                }
            }
        }
    }
}

/// Apply `rule` to every detail band; `thresholds[j]` is used for D_{j+1}.
/// The approximation band is left untouched.
///
/// Panics if `thresholds` does not have one entry per level or contains a negative value.
pub fn threshold_details(decomp: &DwtDecomposition, rule: ThresholdRule, thresholds: &[f64]) -> DwtDecomposition {
    assert_eq!(thresholds.len(), decomp.levels(), "one threshold per detail level");
    assert!(thresholds.iter().all(|&t| t >= 0.0), "thresholds must be non-negative");
    let details = decomp
        .details
        .iter()
        .zip(thresholds)
        .map(|(band, &t)| band.iter().map(|&d| rule.apply(d, t)).collect())
        .collect();
    DwtDecomposition {
        approx: decomp.approx.clone(),
        details,
        mode: decomp.mode,
        input_lengths: decomp.input_lengths.clone(),
    }
}

/// Median absolute deviation noise estimate, `median(|d|) / 0.6745`.
pub fn mad_sigma(band: &[f64]) -> f64 {
    if band.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = band.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    let median = if abs.len().is_multiple_of(2) {
        0.5 * (abs[mid - 1] + abs[mid])
    } else {
        abs[mid]
    };
    median / 0.6745
}

/// Per-level universal thresholds `sigma_j * sqrt(2 ln n)` with `sigma_j` from [`mad_sigma`].
pub fn universal_thresholds(decomp: &DwtDecomposition, signal_len: usize) -> Vec<f64> {
    let factor = (2.0 * (signal_len.max(2) as f64).ln()).sqrt();
    decomp.details.iter().map(|d| mad_sigma(d) * factor).collect()
}
