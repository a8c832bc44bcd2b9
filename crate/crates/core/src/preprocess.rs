//! Baseline-wander removal and wide-band noise suppression for one lead.
//!
//! Two stages: a linear-phase windowed-sinc FIR high-pass (0.5 Hz by default),
//! applied with its group delay compensated, followed by wavelet shrinkage
//! (multi-level DWT, universal soft threshold per detail band, inverse DWT).
//! There is no separate power-line notch; mains interference is only reduced
//! to the extent it lands in the thresholded detail bands.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavelet::{
    dwt_with_mode, idwt, threshold_details, universal_thresholds, BoundaryMode, Family, ThresholdRule, WaveletBasis,
    WaveletError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("cutoff {cutoff} Hz must lie strictly between 0 and Nyquist ({nyquist} Hz)")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("FIR length must be odd, got {0}")]
    EvenTapCount(usize),
    #[error("signal of {len} samples is too short, more than {required} required")]
    SignalTooShort { len: usize, required: usize },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

/// Linear-phase FIR high-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub cutoff: f64,
    pub sampling_rate: f64,
}

impl FirFilter {
    /// Delay in samples of the linear-phase response.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude of the frequency response at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / self.sampling_rate;
        let (re, im) = self.taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &h)| {
            let phase = w * n as f64;
            (re + h * phase.cos(), im - h * phase.sin())
        });
        re.hypot(im)
    }
}

/// Default FIR length: 1001 taps at 250 Hz, scaled with the sampling rate and kept odd.
pub fn default_tap_count(sampling_rate: f64) -> usize {
    let n = (1001.0 * sampling_rate / 250.0).round() as usize;
    n | 1
}

/// Hamming-windowed sinc low-pass, normalised to unit DC gain, then spectrally inverted.
pub fn design_highpass(cutoff: f64, sampling_rate: f64, n_taps: usize) -> Result<FirFilter, PreprocessError> {
    let nyquist = sampling_rate / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(PreprocessError::InvalidCutoff { cutoff, nyquist });
    }
    if n_taps.is_multiple_of(2) {
        return Err(PreprocessError::EvenTapCount(n_taps));
    }
    let m = (n_taps - 1) / 2;
    let fc = cutoff / sampling_rate;
    let mut lowpass: Vec<f64> = (0..n_taps)
        .map(|n| {
            let k = n as f64 - m as f64;
            let sinc = if n == m {
                2.0 * fc
            } else {
                (2.0 * PI * fc * k).sin() / (PI * k)
            };
            let window = if n_taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * n as f64 / (n_taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    // mirror the right half onto the left so the taps are exactly symmetric
    for i in 0..m {
        lowpass[i] = lowpass[n_taps - 1 - i];
    }
    let sum: f64 = lowpass.iter().sum();
    let mut taps: Vec<f64> = lowpass.iter().map(|v| -v / sum).collect();
    taps[m] += 1.0;
    Ok(FirFilter {
        taps,
        cutoff,
        sampling_rate,
    })
}

/// Filter with group-delay compensation so output sample `i` aligns with input sample `i`.
///
/// The ends are extended by point reflection (`2 x[0] - x[k]`), which keeps
/// linear trends linear across the boundary.
pub fn apply_filter(signal: &[f64], filter: &FirFilter) -> Result<Vec<f64>, PreprocessError> {
    let taps = &filter.taps;
    if signal.len() <= taps.len() {
        return Err(PreprocessError::SignalTooShort {
            len: signal.len(),
            required: taps.len(),
        });
    }
    let m = filter.group_delay();
    let n = signal.len();
    let first = signal[0];
    let last = signal[n - 1];
    let mut padded = Vec::with_capacity(n + 2 * m);
    padded.extend((1..=m).rev().map(|k| 2.0 * first - signal[k]));
    padded.extend_from_slice(signal);
    padded.extend((1..=m).map(|k| 2.0 * last - signal[n - 1 - k]));

    // symmetric taps: pair samples equidistant from the centre
    let out = (0..n)
        .map(|i| {
            let window = &padded[i..i + taps.len()];
            let mut acc = taps[m] * window[m];
            for k in 0..m {
                acc += taps[k] * (window[k] + window[taps.len() - 1 - k]);
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Output of [`denoise`] / [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSignal {
    pub samples: Vec<f64>,
    pub fir_applied: bool,
    pub wavelet_denoised: bool,
    pub basis: Family,
    pub levels: usize,
}

/// Wavelet shrinkage: DWT, universal soft thresholds on every detail band, inverse DWT.
pub fn denoise(signal: &[f64], basis: &WaveletBasis, levels: usize) -> Result<CleanSignal, PreprocessError> {
    let required = 1usize << levels;
    if signal.len() < required {
        return Err(PreprocessError::SignalTooShort {
            len: signal.len(),
            required,
        });
    }
    let decomp = dwt_with_mode(signal, basis, levels, BoundaryMode::Symmetric)?;
    let thresholds = universal_thresholds(&decomp, signal.len());
    let shrunk = threshold_details(&decomp, ThresholdRule::Soft, &thresholds);
    let samples = idwt(&shrunk, basis)?;
    Ok(CleanSignal {
        samples,
        fir_applied: false,
        wavelet_denoised: true,
        basis: basis.family(),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    /// FIR length; `None` selects [`default_tap_count`].
    pub n_taps: Option<usize>,
    pub basis: Family,
    pub denoise_levels: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 0.5,
            n_taps: None,
            basis: Family::Daubechies(4),
            denoise_levels: 2,
        }
    }
}

/// Both signals the delineator works from.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    /// High-passed only: baseline wander removed, morphology untouched.
    pub filtered: Vec<f64>,
    /// High-passed and wavelet-denoised.
    pub clean: CleanSignal,
}

/// High-pass then denoise.
///
/// Records shorter than the default FIR get the longest odd filter that fits,
/// which widens the transition band.
pub fn preprocess(signal: &[f64], sampling_rate: f64, cfg: &PreprocessConfig) -> Result<Preprocessed, PreprocessError> {
    let wanted = cfg.n_taps.unwrap_or_else(|| default_tap_count(sampling_rate));
    let fit = if signal.len() > wanted {
        wanted
    } else {
        let n = signal.len().saturating_sub(1);
        if n.is_multiple_of(2) {
            n.saturating_sub(1)
        } else {
            n
        }
    };
    if fit < 3 {
        return Err(PreprocessError::SignalTooShort {
            len: signal.len(),
            required: 4,
        });
    }
    if fit != wanted {
        log::warn!(
            "record of {} samples is shorter than the {wanted}-tap FIR, using {fit} taps",
            signal.len()
        );
    }
    let fir = design_highpass(cfg.cutoff_hz, sampling_rate, fit)?;
    let filtered = apply_filter(signal, &fir)?;
    let basis = WaveletBasis::new(cfg.basis)?;
    let mut clean = denoise(&filtered, &basis, cfg.denoise_levels)?;
    clean.fir_applied = true;
    Ok(Preprocessed { filtered, clean })
}

pub fn write_signal_csv<W: std::io::Write>(mut out: W, samples: &[f64]) -> std::io::Result<()> {
    writeln!(out, "sample_index,mv")?;
    for (i, v) in samples.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    Ok(())
}
