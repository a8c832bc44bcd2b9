//! Boxplot screening of beat parameters against a sliding window of recent
//! Normal beats.
//!
//! Quartiles are Tukey hinges. A parameter passes when it lies strictly
//! between the fences `Q1 - k*IQR` and `Q3 + k*IQR`.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{BeatFeatures, Feature};

#[derive(Debug, Error, PartialEq)]
pub enum TukeyError {
    #[error("need at least 4 values for quartiles, got {0}")]
    TooFewValues(usize),
    #[error("no parameter has enough reference values yet")]
    StatsUndefined,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TukeyConfig {
    /// Capacity of each parameter's window.
    pub window: usize,
    /// Fence multiplier.
    pub k: f64,
}

impl Default for TukeyConfig {
    fn default() -> Self {
        TukeyConfig { window: 200, k: 1.5 }
    }
}

impl TukeyConfig {
    pub fn validate(&self) -> Result<(), TukeyError> {
        if self.window < 4 {
            return Err(TukeyError::InvalidConfig(format!(
                "window {} holds fewer than 4 values",
                self.window
            )));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(TukeyError::InvalidConfig(format!("fence multiplier {}", self.k)));
        }
        Ok(())
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tukey hinges: medians of the lower and upper halves of the sorted data,
/// the median belonging to both halves when the count is odd.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64), TukeyError> {
    let n = values.len();
    if n < 4 {
        return Err(TukeyError::TooFewValues(n));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let half = n.div_ceil(2);
    Ok((median_sorted(&v[..half]), median_sorted(&v[n - half..])))
}

/// Boxplot summary of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub q1: f64,
    pub q3: f64,
    /// Robust mean, the midpoint of the hinges.
    pub mean: f64,
    pub iqr: f64,
    pub fence_lo: f64,
    pub fence_hi: f64,
    pub count: usize,
}

impl ParamStats {
    pub fn from_values(values: &[f64], k: f64) -> Result<Self, TukeyError> {
        let (q1, q3) = quartiles(values)?;
        let iqr = q3 - q1;
        Ok(ParamStats {
            q1,
            q3,
            mean: 0.5 * (q1 + q3),
            iqr,
            fence_lo: q1 - k * iqr,
            fence_hi: q3 + k * iqr,
            count: values.len(),
        })
    }

    pub fn flag(&self, x: f64) -> Flag {
        if x <= self.fence_lo {
            Flag::Below
        } else if x >= self.fence_hi {
            Flag::Above
        } else {
            Flag::InRange
        }
    }
}

/// Statistics of all nine parameters; `None` where fewer than 4 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub params: [Option<ParamStats>; 9],
    pub window: usize,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    InRange,
    Below,
    Above,
    /// The beat lacks the parameter, or the window has no statistics for it.
    Missing,
}

impl Flag {
    pub fn is_deviation(self) -> bool {
        matches!(self, Flag::Below | Flag::Above)
    }

    pub fn code(self) -> &'static str {
        match self {
            Flag::InRange => "in",
            Flag::Below => "lo",
            Flag::Above => "hi",
            Flag::Missing => "na",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub flags: [Flag; 9],
    pub any_deviation: bool,
}

impl DeviationReport {
    /// Parameters outside their fences.
    pub fn deviating(&self) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| self.flags[f.index()].is_deviation())
            .collect()
    }

    /// Compact `P_amp=in|P_dur=hi|...` rendering.
    pub fn render(&self) -> String {
        Feature::ALL
            .iter()
            .map(|f| format!("{}={}", f.name(), self.flags[f.index()].code()))
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl BoxplotStats {
    pub fn check_values(&self, values: &[Option<f64>; 9]) -> Result<DeviationReport, TukeyError> {
        if self.params.iter().all(Option::is_none) {
            return Err(TukeyError::StatsUndefined);
        }
        let flags: [Flag; 9] = std::array::from_fn(|i| match (self.params[i], values[i]) {
            (Some(s), Some(x)) if x.is_finite() => s.flag(x),
            _ => Flag::Missing,
        });
        Ok(DeviationReport {
            any_deviation: flags.iter().any(|f| f.is_deviation()),
            flags,
        })
    }

    pub fn check_beat(&self, beat: &BeatFeatures) -> Result<DeviationReport, TukeyError> {
        self.check_values(&beat.values)
    }

    /// `param,Q1,Q3,lo,hi`; parameters without statistics are `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["param", "Q1", "Q3", "lo", "hi"])?;
        for f in Feature::ALL {
            let row = match self.params[f.index()] {
                Some(s) => [s.q1, s.q3, s.fence_lo, s.fence_hi].map(|v| v.to_string()),
                None => ["NA"; 4].map(String::from),
            };
            w.write_record(std::iter::once(f.name().to_string()).chain(row))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-parameter FIFO windows of Normal-beat values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyState {
    cfg: TukeyConfig,
    buffers: Vec<VecDeque<f64>>,
}

impl TukeyState {
    pub fn new(cfg: TukeyConfig) -> Result<Self, TukeyError> {
        cfg.validate()?;
        Ok(TukeyState {
            cfg,
            buffers: vec![VecDeque::with_capacity(cfg.window); 9],
        })
    }

    /// Window seeded with the Normal beats of a training set, most recent last.
    pub fn warm<'a>(cfg: TukeyConfig, beats: impl IntoIterator<Item = &'a BeatFeatures>) -> Result<Self, TukeyError> {
        let mut s = Self::new(cfg)?;
        for b in beats {
            if b.true_class == Some(crate::wfdb::AnomalyClass::Normal) {
                s.push_values(&b.values);
            }
        }
        Ok(s)
    }

    pub fn config(&self) -> TukeyConfig {
        self.cfg
    }

    /// Missing or non-finite parameters leave their window untouched.
    pub fn push_values(&mut self, values: &[Option<f64>; 9]) {
        for (buf, v) in self.buffers.iter_mut().zip(values) {
            if let Some(x) = v.filter(|x| x.is_finite()) {
                if buf.len() == self.cfg.window {
                    buf.pop_front();
                }
                buf.push_back(x);
            }
        }
    }

    pub fn push(&mut self, beat: &BeatFeatures) {
        self.push_values(&beat.values);
    }

    pub fn window(&self, f: Feature) -> Vec<f64> {
        self.buffers[f.index()].iter().copied().collect()
    }

    pub fn stats(&self) -> BoxplotStats {
        BoxplotStats {
            params: std::array::from_fn(|i| {
                let v: Vec<f64> = self.buffers[i].iter().copied().collect();
                ParamStats::from_values(&v, self.cfg.k).ok()
            }),
            window: self.cfg.window,
            k: self.cfg.k,
        }
    }

    /// True once every parameter that has ever been pushed has statistics.
    pub fn is_warm(&self) -> bool {
        self.buffers.iter().any(|b| b.len() >= 4) && self.buffers.iter().all(|b| b.is_empty() || b.len() >= 4)
    }
}
