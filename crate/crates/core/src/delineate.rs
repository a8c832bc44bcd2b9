//! Beat delineation: R peaks from the undecimated wavelet transform, then
//! Q/S, QRS limits and the P and T waves from the time-domain signal.
//!
//! R detection runs coarse to fine. Pairs of opposite-sign modulus maxima
//! above a relative threshold at the coarsest QRS scale give candidate zero
//! crossings. Each candidate is moved to the nearest zero crossing of the next
//! finer band until the finest band is reached, then snapped to the largest
//! deflection of the signal.
//!
//! Wave limits use the tangent rule: the tangent at the steepest point of the
//! flank is intersected with the isoelectric level. When the flank has no
//! usable slope the extreme sample of the search window is used instead.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{preprocess, PreprocessConfig, PreprocessError, Preprocessed};
use crate::wavelet::{uwt, uwt_min_len, WaveletBasis, WaveletError};
use crate::wfdb::EcgRecord;

#[derive(Debug, Error)]
pub enum DelineateError {
    #[error("signal of {len} samples is too short, need at least {required}")]
    SignalTooShort { len: usize, required: usize },
    #[error("search window of {window} samples around sample {index} leaves the signal")]
    WindowOutOfBounds { index: usize, window: usize },
    #[error("lead {0:?} not found in record")]
    LeadNotFound(String),
    #[error("invalid delineation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

/// Onset, peak and offset sample of one wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveFiducials {
    pub onset: usize,
    pub peak: usize,
    pub offset: usize,
}

impl WaveFiducials {
    fn is_ordered(&self) -> bool {
        self.onset <= self.peak && self.peak <= self.offset
    }
}

/// Fiducial samples of one beat. A `None` wave is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub p: Option<WaveFiducials>,
    pub qrs_onset: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub qrs_offset: usize,
    pub t: Option<WaveFiducials>,
}

impl BeatFiducials {
    pub fn p_absent(&self) -> bool {
        self.p.is_none()
    }

    pub fn t_absent(&self) -> bool {
        self.t.is_none()
    }

    pub fn t_offset(&self) -> Option<usize> {
        self.t.map(|t| t.offset)
    }

    /// All eleven indices in temporal order; absent waves give `None`.
    pub fn indices(&self) -> [Option<usize>; 11] {
        let p = self.p;
        let t = self.t;
        [
            p.map(|w| w.onset),
            p.map(|w| w.peak),
            p.map(|w| w.offset),
            Some(self.qrs_onset),
            Some(self.q),
            Some(self.r),
            Some(self.s),
            Some(self.qrs_offset),
            t.map(|w| w.onset),
            t.map(|w| w.peak),
            t.map(|w| w.offset),
        ]
    }

    /// Present indices are non-decreasing.
    pub fn is_ordered(&self) -> bool {
        if self.p.is_some_and(|p| !p.is_ordered()) || self.t.is_some_and(|t| !t.is_ordered()) {
            return false;
        }
        let present: Vec<usize> = self.indices().into_iter().flatten().collect();
        present.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn within(&self, n_samples: usize) -> bool {
        self.indices().into_iter().flatten().all(|i| i < n_samples)
    }

    /// The same beat `m` samples later.
    pub fn shifted(&self, m: usize) -> Self {
        let w = |x: WaveFiducials| WaveFiducials {
            onset: x.onset + m,
            peak: x.peak + m,
            offset: x.offset + m,
        };
        Self {
            p: self.p.map(w),
            qrs_onset: self.qrs_onset + m,
            q: self.q + m,
            r: self.r + m,
            s: self.s + m,
            qrs_offset: self.qrs_offset + m,
            t: self.t.map(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelineationConfig {
    pub uwt_levels: usize,
    /// Modulus maxima below this fraction of the local band RMS are rejected.
    pub peak_amplitude_threshold: f64,
    pub onset_window_ms: f64,
    pub qs_search_window_ms: f64,
    pub refractory_ms: f64,
    /// A candidate this soon after the previous beat with less than half its
    /// coarse-band modulus is taken for a T wave.
    pub t_discrimination_ms: f64,
    pub rms_window_ms: f64,
    pub p_search_ms: f64,
    pub t_search_ms: f64,
    /// P, T, Q and S deflections smaller than this fraction of the R
    /// deflection count as absent.
    pub wave_presence_ratio: f64,
    /// Half-width of the triangular smoother applied before the P/T search.
    pub wave_smoothing_ms: f64,
}

impl Default for DelineationConfig {
    fn default() -> Self {
        Self {
            uwt_levels: 8,
            peak_amplitude_threshold: 0.7,
            onset_window_ms: 50.0,
            qs_search_window_ms: 50.0,
            refractory_ms: 200.0,
            t_discrimination_ms: 360.0,
            rms_window_ms: 2000.0,
            p_search_ms: 300.0,
            t_search_ms: 450.0,
            wave_presence_ratio: 0.05,
            wave_smoothing_ms: 20.0,
        }
    }
}

impl DelineationConfig {
    pub fn validate(&self) -> Result<(), DelineateError> {
        if self.uwt_levels < 3 {
            return Err(DelineateError::InvalidConfig(format!(
                "uwt_levels must be at least 3, got {}",
                self.uwt_levels
            )));
        }
        let windows = [
            ("onset_window_ms", self.onset_window_ms),
            ("qs_search_window_ms", self.qs_search_window_ms),
            ("refractory_ms", self.refractory_ms),
            ("t_discrimination_ms", self.t_discrimination_ms),
            ("rms_window_ms", self.rms_window_ms),
            ("p_search_ms", self.p_search_ms),
            ("t_search_ms", self.t_search_ms),
            ("wave_smoothing_ms", self.wave_smoothing_ms),
        ];
        for (name, v) in windows {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DelineateError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.peak_amplitude_threshold >= 0.0) || !(self.wave_presence_ratio >= 0.0) {
            return Err(DelineateError::InvalidConfig("thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

fn samples(ms: f64, fs: f64) -> usize {
    ((ms * fs / 1000.0).round() as usize).max(1)
}

/// Coarsest detail level carrying the QRS complex: level 4 at 250 Hz, one
/// level more per doubling of the sampling rate.
fn qrs_level(fs: f64, max: usize) -> usize {
    let shift = (fs / 250.0).log2().round() as isize;
    (4 + shift).clamp(2, max as isize) as usize
}

/// Zero crossings between the largest opposite-sign extrema.
fn largest_pair_crossing(d: &[f64]) -> Option<f64> {
    let k = (1..d.len() - 1).max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))?;
    let sign = d[k].signum();
    // nearest opposite-sign extremum on each side, keep the stronger
    let scan = |range: &mut dyn Iterator<Item = usize>| {
        let mut best: Option<usize> = None;
        for i in range {
            if d[i].signum() == -sign && best.is_none_or(|b| d[i].abs() > d[b].abs()) {
                best = Some(i);
            } else if best.is_some_and(|b| d[i].signum() == sign && d[b].abs() > 0.0) {
                break;
            }
        }
        best
    };
    let left = scan(&mut (0..k).rev());
    let right = scan(&mut (k + 1..d.len()));
    let other = match (left, right) {
        (Some(l), Some(r)) => {
            if d[l].abs() >= d[r].abs() {
                l
            } else {
                r
            }
        }
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => return None,
    };
    let (a, b) = (k.min(other), k.max(other));
    (a..b).find(|&i| d[i] * d[i + 1] <= 0.0 && d[i] != d[i + 1]).map(|i| {
        let frac = d[i] / (d[i] - d[i + 1]);
        i as f64 + frac
    })
}

/// Per-level position of the response to a symmetric bump, relative to its centre.
fn level_delays(basis: &WaveletBasis, levels: usize, fs: f64) -> Vec<isize> {
    let n = (uwt_min_len(basis, levels) * 2).max(4096);
    let centre = n / 2;
    let width = 0.010 * fs;
    let probe: Vec<f64> = (0..n)
        .map(|i| {
            let z = (i as f64 - centre as f64) / width;
            (-0.5 * z * z).exp()
        })
        .collect();
    let decomp = uwt(&probe, basis, levels).expect("probe is long enough");
    (1..=levels)
        .map(|j| {
            largest_pair_crossing(decomp.detail(j))
                .map(|z| (z - centre as f64).round() as isize)
                .unwrap_or(0)
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn local_rms(d: &[f64], k: usize, half: usize) -> f64 {
    let lo = k.saturating_sub(half);
    let hi = (k + half).min(d.len() - 1);
    let sum: f64 = d[lo..=hi].iter().map(|v| v * v).sum();
    (sum / (2 * half + 1) as f64).sqrt()
}

fn nearest_crossing(d: &[f64], target: isize, radius: usize) -> Option<isize> {
    let n = d.len() as isize;
    (0..=radius as isize)
        .flat_map(|off| [target - off, target + off])
        .find(|&i| i >= 0 && i + 1 < n && d[i as usize] * d[i as usize + 1] < 0.0)
}

/// R-peak sample indices, ascending.
pub fn detect_r_peaks(signal: &[f64], fs: f64, cfg: &DelineationConfig) -> Result<Vec<usize>, DelineateError> {
    cfg.validate()?;
    let required = (2.0 * fs).ceil() as usize;
    if signal.len() < required {
        return Err(DelineateError::SignalTooShort {
            len: signal.len(),
            required,
        });
    }
    let basis = WaveletBasis::daubechies4();
    let levels = cfg.uwt_levels;
    let coarse = qrs_level(fs, levels);
    let half_rms = samples(cfg.rms_window_ms, fs) / 2;
    let snap = samples(cfg.qs_search_window_ms, fs);
    let context = samples(cfg.refractory_ms, fs);

    // Zero padding keeps every band free of wrap-around inside the signal,
    // so results do not depend on where the record starts.
    let margin = (basis.len() - 1) * (1 << coarse) + half_rms + context + snap;
    let mut padded = vec![0.0; margin];
    padded.extend_from_slice(signal);
    padded.resize(signal.len() + 2 * margin, 0.0);
    let min_len = uwt_min_len(&basis, levels);
    if padded.len() < min_len {
        padded.resize(min_len, 0.0);
    }
    let decomp = uwt(&padded, &basis, levels)?;
    let delays = level_delays(&basis, levels, fs);
    let delay = |j: usize| delays[j - 1];

    let d = decomp.detail(coarse);
    let pair_span = samples(120.0, fs);
    let significant =
        |band: &[f64], k: usize| band[k].abs() > cfg.peak_amplitude_threshold * local_rms(band, k, half_rms);
    let maxima: Vec<usize> = (1..d.len() - 1)
        .filter(|&k| d[k].abs() >= d[k - 1].abs() && d[k].abs() > d[k + 1].abs() && d[k] != 0.0)
        .filter(|&k| significant(d, k))
        .collect();

    // (R sample, deflection, coarse-band modulus)
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for pair in maxima.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > pair_span || d[a].signum() == d[b].signum() {
            continue;
        }
        let Some(z) = (a..b).find(|&i| d[i] * d[i + 1] <= 0.0) else {
            continue;
        };
        let mut pos = z as isize - delay(coarse);
        // refine toward the finest band
        for j in (1..coarse).rev() {
            let band = decomp.detail(j);
            if let Some(c) = nearest_crossing(band, pos + delay(j), (1 << j) + 1) {
                pos = c - delay(j);
            }
        }
        let pos = pos.clamp(0, padded.len() as isize - 1) as usize;
        // the next finer band must agree that a sharp wave is present
        let confirmed = (coarse - 1..coarse).all(|j| {
            let band = decomp.detail(j);
            let centre = (pos as isize + delay(j)).clamp(0, padded.len() as isize - 1) as usize;
            let lo = centre.saturating_sub(pair_span / 2);
            let hi = (centre + pair_span / 2).min(band.len() - 1);
            let k = (lo..=hi)
                .max_by(|&x, &y| band[x].abs().total_cmp(&band[y].abs()))
                .unwrap_or(centre);
            significant(band, k)
        });
        if !confirmed {
            continue;
        }
        let lo = pos.saturating_sub(context);
        let hi = (pos + context).min(padded.len() - 1);
        let mut around = padded[lo..=hi].to_vec();
        let base = median(&mut around);
        let lo = pos.saturating_sub(snap);
        let hi = (pos + snap).min(padded.len() - 1);
        let r = (lo..=hi)
            .max_by(|&x, &y| {
                (padded[x] - base)
                    .abs()
                    .total_cmp(&(padded[y] - base).abs())
                    .then(y.cmp(&x))
            })
            .unwrap_or(pos);
        candidates.push((r, (padded[r] - base).abs(), d[a].abs().max(d[b].abs())));
    }

    candidates.sort_by_key(|c| c.0);
    let refractory = samples(cfg.refractory_ms, fs);
    let mut kept: Vec<(usize, f64, f64)> = Vec::new();
    for c in candidates {
        match kept.last_mut() {
            Some(last) if c.0 - last.0 < refractory => {
                if c.1 > last.1 {
                    *last = c;
                }
            }
            _ => kept.push(c),
        }
    }
    // a slow wave shortly after a QRS is its T wave
    let t_window = samples(cfg.t_discrimination_ms, fs);
    let mut beats: Vec<(usize, f64, f64)> = Vec::with_capacity(kept.len());
    for c in kept {
        match beats.last() {
            Some(prev) if c.0 - prev.0 < t_window && c.2 < 0.5 * prev.2 => {}
            _ => beats.push(c),
        }
    }
    Ok(beats
        .into_iter()
        .filter(|&(r, _, _)| r >= margin && r < margin + signal.len())
        .map(|(r, _, _)| r - margin)
        .collect())
}

/// Q is the minimum in the window before R, S the minimum after; ties go to the sample nearest R.
pub fn locate_q_s(x: &[f64], r: usize, fs: f64, cfg: &DelineationConfig) -> Result<(usize, usize), DelineateError> {
    let w = samples(cfg.qs_search_window_ms, fs);
    if r < w || r + w >= x.len() {
        return Err(DelineateError::WindowOutOfBounds { index: r, window: w });
    }
    let nearest_min = |range: &mut dyn Iterator<Item = usize>| {
        let mut best = usize::MAX;
        for i in range {
            if best == usize::MAX || x[i] < x[best] {
                best = i;
            }
        }
        best
    };
    let q = nearest_min(&mut (r - w..r).rev());
    let s = nearest_min(&mut (r + 1..=r + w));
    Ok((q, s))
}

/// Median of `x` over the 30 ms stretch in the 250..40 ms before R where the
/// smoothed signal `xs` is flattest.
fn isoelectric(x: &[f64], xs: &[f64], r: usize, fs: f64) -> f64 {
    let w = samples(30.0, fs);
    let lo = r.saturating_sub(samples(250.0, fs));
    let hi = r.saturating_sub(samples(40.0, fs));
    if hi < lo + w {
        let lo = r.saturating_sub(w);
        return median(&mut x[lo..=r].to_vec());
    }
    let spread = |s: usize| {
        let seg = &xs[s..s + w];
        let (mn, mx) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &v| {
            (mn.min(v), mx.max(v))
        });
        mx - mn
    };
    let start = (lo..=hi - w)
        .min_by(|&a, &b| spread(a).total_cmp(&spread(b)))
        .unwrap_or(lo);
    median(&mut x[start..start + w].to_vec())
}

/// Onset of a wave peaking at `peak` with polarity `pol`, searched in `[lo, peak]`.
fn tangent_onset(x: &[f64], peak: usize, lo: usize, pol: f64, base: f64) -> usize {
    if peak < lo + 2 {
        return lo.min(peak);
    }
    let steepest = (lo + 1..peak)
        .map(|k| (k, 0.5 * (x[k + 1] - x[k - 1])))
        .max_by(|a, b| (pol * a.1).total_cmp(&(pol * b.1)).then(b.0.cmp(&a.0)));
    match steepest {
        Some((k, slope)) if pol * slope > 0.0 && k as f64 - (x[k] - base) / slope >= lo as f64 - 0.5 => {
            let t = k as f64 - (x[k] - base) / slope;
            (t.round() as usize).min(peak)
        }
        _ => (lo..=peak)
            .min_by(|&a, &b| (pol * (x[a] - base)).total_cmp(&(pol * (x[b] - base))).then(b.cmp(&a)))
            .unwrap_or(lo),
    }
}

/// Offset of a wave peaking at `peak`, searched in `[peak, hi]`.
fn tangent_offset(x: &[f64], peak: usize, hi: usize, pol: f64, base: f64) -> usize {
    if hi < peak + 2 {
        return hi.max(peak);
    }
    let steepest = (peak + 1..hi)
        .map(|k| (k, 0.5 * (x[k + 1] - x[k - 1])))
        .max_by(|a, b| (-pol * a.1).total_cmp(&(-pol * b.1)).then(b.0.cmp(&a.0)));
    match steepest {
        Some((k, slope)) if -pol * slope > 0.0 && k as f64 - (x[k] - base) / slope <= hi as f64 + 0.5 => {
            let t = k as f64 - (x[k] - base) / slope;
            (t.round().max(peak as f64)) as usize
        }
        _ => (peak..=hi)
            .min_by(|&a, &b| (pol * (x[a] - base)).total_cmp(&(pol * (x[b] - base))).then(a.cmp(&b)))
            .unwrap_or(hi),
    }
}

/// Symmetric triangular smoothing; a Gaussian bump keeps its centre.
fn smooth(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let weights: Vec<f64> = (0..=2 * half).map(|i| (half + 1 - i.abs_diff(half)) as f64).collect();
    (0..n)
        .map(|i| {
            let (mut s, mut w) = (0.0, 0.0);
            for (k, &wk) in weights.iter().enumerate() {
                let j = i as isize + k as isize - half as isize;
                if j >= 0 && (j as usize) < n {
                    s += wk * x[j as usize];
                    w += wk;
                }
            }
            s / w
        })
        .collect()
}

/// QRS part of a beat plus the reference levels the P/T search needs.
#[derive(Debug, Clone, Copy)]
struct Qrs {
    onset: usize,
    q: usize,
    r: usize,
    s: usize,
    offset: usize,
    base: f64,
    r_amp: f64,
}

fn locate_qrs(x: &[f64], xs: &[f64], r: usize, fs: f64, cfg: &DelineationConfig) -> Result<Qrs, DelineateError> {
    let (q, s) = locate_q_s(x, r, fs, cfg)?;
    let w = samples(cfg.onset_window_ms, fs);
    if q < w || s + w >= x.len() {
        return Err(DelineateError::WindowOutOfBounds { index: r, window: w });
    }
    let base = isoelectric(x, xs, r, fs);
    let pol = if x[r] >= base { 1.0 } else { -1.0 };
    let r_amp = (x[r] - base).abs();
    let floor = cfg.wave_presence_ratio * r_amp;
    let (first, first_pol) = if base - x[q] > floor { (q, -1.0) } else { (r, pol) };
    let rough = tangent_onset(x, first, first - w, first_pol, base);
    let onset = refine_limit(x, first - w, first, first, first_pol, base, rough, true);
    let (last, last_pol) = if base - x[s] > floor { (s, -1.0) } else { (r, pol) };
    let rough = tangent_offset(x, last, last + w, last_pol, base);
    let offset = refine_limit(x, last, last + w, last, last_pol, base, rough, false);
    // without a Q or S wave the window minimum may fall outside the complex
    Ok(Qrs {
        onset,
        q: q.max(onset),
        r,
        s: s.min(offset),
        offset,
        base,
        r_amp,
    })
}

/// Least-squares fit of `b + sum_k a_k exp(-(t - c_k)^2 / (2 s_k^2))` to `y`
/// (t = 0, 1, ...), Levenberg-Marquardt from `init = [b, a_1, c_1, s_1, ...]`.
/// Returns the parameters and the residual sum of squares.
fn fit_bumps(y: &[f64], init: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = init.len();
    let sse = |p: &[f64]| -> f64 {
        y.iter()
            .enumerate()
            .map(|(t, &v)| {
                let model: f64 = p[1..]
                    .chunks(3)
                    .map(|k| {
                        let z = (t as f64 - k[1]) / k[2];
                        k[0] * (-0.5 * z * z).exp()
                    })
                    .sum();
                let r = v - p[0] - model;
                r * r
            })
            .sum()
    };
    let mut p = init.to_vec();
    let mut err = sse(&p);
    let mut lambda = 1e-3;
    let mut g = vec![0.0; n];
    for _ in 0..100 {
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (t, &v) in y.iter().enumerate() {
            g[0] = 1.0;
            let mut model = 0.0;
            for (k, q) in p[1..].chunks(3).enumerate() {
                let dt = t as f64 - q[1];
                let e = (-0.5 * dt * dt / (q[2] * q[2])).exp();
                model += q[0] * e;
                g[1 + 3 * k] = e;
                g[2 + 3 * k] = q[0] * e * dt / (q[2] * q[2]);
                g[3 + 3 * k] = q[0] * e * dt * dt / (q[2] * q[2] * q[2]);
            }
            let r = v - p[0] - model;
            for i in 0..n {
                jtr[i] += g[i] * r;
                for j in 0..n {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut a = jtj.clone();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += lambda * jtj[i][i];
        }
        let step = cholesky_solve(a, jtr)?;
        let trial: Vec<f64> = p.iter().zip(&step).map(|(x, d)| x + d).collect();
        let trial_err = if trial[1..].chunks(3).all(|k| k[2] > 0.0) {
            sse(&trial)
        } else {
            f64::INFINITY
        };
        if trial_err < err {
            p = trial;
            err = trial_err;
            lambda = (lambda / 10.0).max(1e-12);
            if step[1..].chunks(3).all(|d| d[1].abs() < 1e-6 && d[2].abs() < 1e-6) {
                return Some((p, err));
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                return Some((p, err));
            }
        }
    }
    Some((p, err))
}

fn fit_bump(y: &[f64], init: [f64; 4]) -> Option<[f64; 4]> {
    fit_bumps(y, &init).map(|(p, _)| [p[0], p[1], p[2], p[3]])
}

fn cholesky_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let sum: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - sum;
                if !(d > 0.0) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - sum) / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Refit one flank of the wave peaking at `peak` over `[lo, hi]` and return
/// `c - 2s` (onset) or `c + 2s` (offset) of the fitted bump, or `rough` when
/// the fit does not describe the flank.
#[allow(clippy::too_many_arguments)]
fn refine_limit(x: &[f64], lo: usize, hi: usize, peak: usize, pol: f64, base: f64, rough: usize, onset: bool) -> usize {
    let width = (peak.abs_diff(rough) as f64 / 2.0).max(1.0);
    let init = [base, x[peak] - base, (peak - lo) as f64, width];
    let Some([_, a, c, s]) = fit_bump(&x[lo..=hi], init) else {
        return rough;
    };
    let span = (hi - lo) as f64;
    let limit = if onset { c - 2.0 * s } else { c + 2.0 * s };
    let near_peak = (c - (peak - lo) as f64).abs() <= 2.0;
    if a * pol > 0.0 && s >= 0.5 && near_peak && limit >= -0.5 && limit <= span + 0.5 {
        lo + (limit.round().max(0.0) as usize).min(hi - lo)
    } else {
        rough
    }
}

/// The largest deflection in `[lo, hi]` as a wave, or `None` when it is too small
/// or sits on the window edge.
///
/// The peak and a first set of limits come from the smoothed signal `xs`. A
/// single bump is then fitted to `x` over the window; its tangent at the
/// steepest point meets the fitted baseline at `c -/+ 2s`, which replaces the
/// first estimate when the fit stays inside the window.
///
/// With `split`, a second bump seeded at the largest residual of the single
/// fit is tried as well. When two distinct humps explain the window far
/// better than one, the hump with the larger area is the wave; the other is
/// an elevated ST segment ahead of it or the start of the next beat.
fn find_wave(x: &[f64], xs: &[f64], lo: usize, hi: usize, base: f64, floor: f64, split: bool) -> Option<WaveFiducials> {
    if hi < lo + 4 {
        return None;
    }
    let peak = (lo..=hi).max_by(|&a, &b| (xs[a] - base).abs().total_cmp(&(xs[b] - base).abs()).then(b.cmp(&a)))?;
    let amp = xs[peak] - base;
    if amp.abs() < floor || peak == lo || peak == hi {
        return None;
    }
    let pol = amp.signum();
    let rough = WaveFiducials {
        onset: tangent_onset(xs, peak, lo, pol, base),
        peak,
        offset: tangent_offset(xs, peak, hi, pol, base),
    };
    let y = &x[lo..=hi];
    let span = (hi - lo) as f64;
    let width = ((rough.offset - rough.onset) as f64 / 4.0).max(1.0);
    let single = fit_bumps(y, &[base, amp, (peak - lo) as f64, width]);
    let as_wave = |a: f64, c: f64, s: f64| {
        let on = c - 2.0 * s;
        let off = c + 2.0 * s;
        let ok = a * pol > 0.0 && s >= 1.0 && on >= -0.5 && off <= span + 0.5 && c.is_finite();
        ok.then(|| WaveFiducials {
            onset: lo + on.round().max(0.0) as usize,
            peak: lo + c.round() as usize,
            offset: lo + (off.round() as usize).min(hi - lo),
        })
    };
    let fitted = single.as_ref().and_then(|(p, _)| as_wave(p[1], p[2], p[3]));
    if split {
        let guess = [base, amp, (peak - lo) as f64, width];
        if let Some((p, sse)) = &single {
            let starts = [[p[0], p[1], p[2], p[3]], guess];
            if let Some(w) = split_wave(y, &starts, *sse, floor, &as_wave) {
                return Some(w);
            }
        }
    }
    Some(fitted.unwrap_or(rough))
}

/// Two-hump refit of a window whose best single bump `p` left `sse`.
///
/// The second hump is seeded at a residual peak of each starting bump in
/// `starts` (the fitted one and the initial guess, since a single bump forced
/// over two humps can run off to a degenerate width).
fn split_wave(
    y: &[f64],
    starts: &[[f64; 4]],
    sse: f64,
    floor: f64,
    as_wave: &dyn Fn(f64, f64, f64) -> Option<WaveFiducials>,
) -> Option<WaveFiducials> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in starts {
        let model = |t: f64| {
            let z = (t - p[2]) / p[3];
            p[0] + p[1] * (-0.5 * z * z).exp()
        };
        let resid: Vec<f64> = y.iter().enumerate().map(|(t, &v)| v - model(t as f64)).collect();
        let pol = p[1].signum();
        let argmax = |key: &dyn Fn(f64) -> f64| {
            (0..resid.len()).max_by(|&a, &b| key(resid[a]).total_cmp(&key(resid[b])).then(b.cmp(&a)))
        };
        // a missed hump of the wave's own polarity, or the largest misfit of any sign
        for k in [argmax(&|r| pol * r), argmax(&f64::abs)].into_iter().flatten() {
            if resid[k].abs() < floor {
                continue;
            }
            let init = [p[0], p[1], p[2], p[3] / 2.0, resid[k], k as f64, (p[3] / 2.0).max(1.0)];
            if let Some(fit) = fit_bumps(y, &init) {
                if best.as_ref().is_none_or(|b| fit.1 < b.1) {
                    best = Some(fit);
                }
            }
        }
    }
    let (q, sse2) = best?;
    // far better than one bump, and two humps rather than one skewed wave
    let (u, v) = (&q[1..4], &q[4..7]);
    let apart = (u[1] - v[1]).abs() > u[2] + v[2];
    let strong = u[0].abs() >= floor && v[0].abs() >= floor;
    let main = if (u[0] * u[2]).abs() >= (v[0] * v[2]).abs() {
        u
    } else {
        v
    };
    if sse2 < 0.25 * sse && apart && strong {
        as_wave(main[0], main[1], main[2])
    } else {
        None
    }
}

/// P and T waves of one beat given its QRS, the previous T offset and the next QRS onset.
///
/// Returns the P and T fiducials, `None` for absent waves.
pub fn locate_p_t(
    x: &[f64],
    qrs: (usize, usize, usize),
    prev_t_offset: Option<usize>,
    next_qrs_onset: Option<usize>,
    fs: f64,
    cfg: &DelineationConfig,
) -> (Option<WaveFiducials>, Option<WaveFiducials>) {
    let (onset, r, offset) = qrs;
    let xs = smooth(x, samples(cfg.wave_smoothing_ms, fs));
    let base = isoelectric(x, &xs, r, fs);
    let floor = cfg.wave_presence_ratio * (x[r] - base).abs();
    p_t_with(
        x,
        &xs,
        onset,
        r,
        offset,
        base,
        floor,
        prev_t_offset,
        next_qrs_onset,
        fs,
        cfg,
    )
}

#[allow(clippy::too_many_arguments)]
fn p_t_with(
    x: &[f64],
    xs: &[f64],
    qrs_onset: usize,
    r: usize,
    qrs_offset: usize,
    base: f64,
    floor: f64,
    prev_t_offset: Option<usize>,
    next_qrs_onset: Option<usize>,
    fs: f64,
    cfg: &DelineationConfig,
) -> (Option<WaveFiducials>, Option<WaveFiducials>) {
    let guard = samples(20.0, fs);
    let p_lo = r
        .saturating_sub(samples(cfg.p_search_ms, fs))
        .max(prev_t_offset.map_or(0, |t| t + 1));
    let p = find_wave(x, xs, p_lo, qrs_onset.saturating_sub(1), base, floor, false).map(|mut w| {
        w.offset = w.offset.min(qrs_onset);
        w
    });
    let mut t_hi = (qrs_offset + samples(cfg.t_search_ms, fs)).min(xs.len() - 1);
    if let Some(next) = next_qrs_onset {
        t_hi = t_hi.min(next.saturating_sub(1));
    }
    // the smoothed signal still carries the end of the QRS just after its offset
    let t = find_wave(x, xs, qrs_offset + guard, t_hi, base, floor, true);
    (p, t)
}

/// Fiducials of every beat of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Delineation {
    pub beats: Vec<BeatFiducials>,
    /// Detected R peaks whose beat could not be delineated in order.
    pub dropped: usize,
}

/// Delineate one signal, used both for R detection and for the wave limits.
pub fn delineate_signal(x: &[f64], fs: f64, cfg: &DelineationConfig) -> Result<Delineation, DelineateError> {
    delineate_signals(x, x, fs, cfg)
}

/// R peaks are detected on `detect`; every other fiducial is measured on `x`.
pub fn delineate_signals(
    detect: &[f64],
    x: &[f64],
    fs: f64,
    cfg: &DelineationConfig,
) -> Result<Delineation, DelineateError> {
    if detect.len() != x.len() {
        return Err(DelineateError::InvalidConfig(format!(
            "detection and measurement signals differ in length ({} vs {})",
            detect.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Ok(Delineation {
            beats: Vec::new(),
            dropped: 0,
        });
    }
    let peaks = detect_r_peaks(detect, fs, cfg)?;
    let xs = smooth(x, samples(cfg.wave_smoothing_ms, fs));
    let mut dropped = 0;
    let qrs: Vec<Qrs> = peaks
        .iter()
        .filter_map(|&r| match locate_qrs(x, &xs, r, fs, cfg) {
            Ok(q) => Some(q),
            Err(_) => {
                dropped += 1;
                None
            }
        })
        .collect();
    let mut beats = Vec::with_capacity(qrs.len());
    let mut prev_t: Option<usize> = None;
    for (i, b) in qrs.iter().enumerate() {
        let next = qrs.get(i + 1).map(|n| n.onset);
        let floor = cfg.wave_presence_ratio * b.r_amp;
        let (p, t) = p_t_with(x, &xs, b.onset, b.r, b.offset, b.base, floor, prev_t, next, fs, cfg);
        let fid = BeatFiducials {
            p,
            qrs_onset: b.onset,
            q: b.q,
            r: b.r,
            s: b.s,
            qrs_offset: b.offset,
            t,
        };
        if fid.is_ordered() && fid.within(x.len()) {
            prev_t = fid.t_offset().or(Some(fid.qrs_offset));
            beats.push(fid);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::debug!("{dropped} beats dropped during delineation");
    }
    Ok(Delineation { beats, dropped })
}

/// Preprocessed signals and fiducials of one lead.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadDelineation {
    pub lead: String,
    pub signals: Option<Preprocessed>,
    pub delineation: Delineation,
}

/// Preprocess one lead of a record and delineate its denoised signal.
pub fn delineate_record(
    record: &EcgRecord,
    lead: &str,
    pre: &PreprocessConfig,
    cfg: &DelineationConfig,
) -> Result<LeadDelineation, DelineateError> {
    let x = record
        .lead(lead)
        .ok_or_else(|| DelineateError::LeadNotFound(lead.to_string()))?;
    if x.is_empty() {
        return Ok(LeadDelineation {
            lead: lead.to_string(),
            signals: None,
            delineation: Delineation {
                beats: Vec::new(),
                dropped: 0,
            },
        });
    }
    let fs = record.sampling_rate();
    let signals = preprocess(x, fs, pre)?;
    let delineation = delineate_signal(&signals.clean.samples, fs, cfg)?;
    Ok(LeadDelineation {
        lead: lead.to_string(),
        signals: Some(signals),
        delineation,
    })
}

/// `beat,Pon,Ppk,Poff,QRSon,Q,R,S,QRSoff,Ton,Tpk,Toff,flags`; absent waves are `NA`.
pub fn write_fiducials_csv<W: Write>(beats: &[BeatFiducials], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "beat", "Pon", "Ppk", "Poff", "QRSon", "Q", "R", "S", "QRSoff", "Ton", "Tpk", "Toff", "flags",
    ])?;
    for (i, b) in beats.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(
            b.indices()
                .iter()
                .map(|v| v.map_or_else(|| "NA".to_string(), |v| v.to_string())),
        );
        let mut flags = Vec::new();
        if b.p_absent() {
            flags.push("P_absent");
        }
        if b.t_absent() {
            flags.push("T_absent");
        }
        row.push(flags.join("|"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
