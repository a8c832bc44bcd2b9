use serde::{Deserialize, Serialize};

use super::{WaveletBasis, WaveletError};

/// Signal extension used at the record boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Circular extension. Every level halves the length exactly, so the input
    /// length must be divisible by `2^levels`.
    #[default]
    Periodic,
    /// Half-sample symmetric extension. Bands are slightly longer than half the
    /// input (`floor((n + taps) / 2)`), any input length is accepted.
    Symmetric,
}

/// Multi-level decimated decomposition. `details[0]` is D_1 (finest).
#[derive(Debug, Clone, PartialEq)]
pub struct DwtDecomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    pub mode: BoundaryMode,
    /// Length of the signal entering each level; `input_lengths[0]` is the original length.
    pub input_lengths: Vec<usize>,
}

impl DwtDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Total number of stored coefficients.
    pub fn coefficient_count(&self) -> usize {
        self.approx.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }
}

#[inline]
fn wrap(k: isize, n: usize) -> usize {
    k.rem_euclid(n as isize) as usize
}

/// Index into the half-sample symmetric extension (period 2n) of a length-n signal.
#[inline]
fn reflect(k: isize, n: usize) -> usize {
    let r = k.rem_euclid(2 * n as isize) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

fn band_len(n: usize, taps: usize, mode: BoundaryMode) -> usize {
    match mode {
        BoundaryMode::Periodic => n / 2,
        BoundaryMode::Symmetric => (n + taps) / 2,
    }
}

/// One analysis step: `out[n] = sum_m f[m] x[2n - m]` under the boundary extension.
fn analyze(x: &[f64], lo: &[f64], hi: &[f64], mode: BoundaryMode) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let len = band_len(n, lo.len(), mode);
    let mut a = vec![0.0; len];
    let mut d = vec![0.0; len];
    for i in 0..len {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (m, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let k = 2 * i as isize - m as isize;
            let idx = match mode {
                BoundaryMode::Periodic => wrap(k, n),
                BoundaryMode::Symmetric => reflect(k, n),
            };
            sa += l * x[idx];
            sd += h * x[idx];
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// Transpose of [`analyze`], producing `n` output samples.
fn synthesize(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64], n: usize, mode: BoundaryMode) -> Vec<f64> {
    let mut out = vec![0.0; n];
    match mode {
        BoundaryMode::Periodic => {
            for i in 0..a.len() {
                for (m, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                    let k = wrap(2 * i as isize - m as isize, n);
                    out[k] += l * a[i] + h * d[i];
                }
            }
        }
        BoundaryMode::Symmetric => {
            // Only the in-range samples are needed: x[k] = sum_i L[2i-k] a[i] + H[2i-k] d[i].
            let taps = lo.len();
            for (k, o) in out.iter_mut().enumerate() {
                let first = k.div_ceil(2);
                let last = ((k + taps - 1) / 2).min(a.len() - 1);
                let mut s = 0.0;
                for i in first..=last {
                    let m = 2 * i - k;
                    s += lo[m] * a[i] + hi[m] * d[i];
                }
                *o = s;
            }
        }
    }
    out
}

/// Decimated discrete wavelet transform with periodic boundary handling.
pub fn dwt(signal: &[f64], basis: &WaveletBasis, levels: usize) -> Result<DwtDecomposition, WaveletError> {
    dwt_with_mode(signal, basis, levels, BoundaryMode::Periodic)
}

pub fn dwt_with_mode(
    signal: &[f64],
    basis: &WaveletBasis,
    levels: usize,
    mode: BoundaryMode,
) -> Result<DwtDecomposition, WaveletError> {
    if levels == 0 {
        return Err(WaveletError::InvalidLevels(levels));
    }
    let required = 1usize << levels;
    if signal.len() < required {
        return Err(WaveletError::SignalTooShort {
            len: signal.len(),
            required,
        });
    }
    if mode == BoundaryMode::Periodic && !signal.len().is_multiple_of(required) {
        return Err(WaveletError::LengthNotDivisible {
            len: signal.len(),
            levels,
        });
    }

    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut input_lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        input_lengths.push(approx.len());
        let (a, d) = analyze(&approx, basis.dec_lo(), basis.dec_hi(), mode);
        details.push(d);
        approx = a;
    }
    Ok(DwtDecomposition {
        approx,
        details,
        mode,
        input_lengths,
    })
}

/// Inverse of [`dwt`] / [`dwt_with_mode`].
pub fn idwt(decomp: &DwtDecomposition, basis: &WaveletBasis) -> Result<Vec<f64>, WaveletError> {
    let levels = decomp.levels();
    if levels == 0 || decomp.input_lengths.len() != levels {
        return Err(WaveletError::ShapeMismatch(format!(
            "{levels} detail bands but {} recorded level lengths",
            decomp.input_lengths.len()
        )));
    }
    let mut approx = decomp.approx.clone();
    for level in (0..levels).rev() {
        let n = decomp.input_lengths[level];
        let d = &decomp.details[level];
        let expected = band_len(n, basis.len(), decomp.mode);
        if approx.len() != expected || d.len() != expected {
            return Err(WaveletError::ShapeMismatch(format!(
                "level {}: expected bands of {expected}, found approx {} / detail {}",
                level + 1,
                approx.len(),
                d.len()
            )));
        }
        approx = synthesize(&approx, d, basis.dec_lo(), basis.dec_hi(), n, decomp.mode);
    }
    Ok(approx)
}
