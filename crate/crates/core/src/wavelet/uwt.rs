use super::{WaveletBasis, WaveletError};

/// Undecimated (à-trous, stationary) decomposition.
///
/// Every band keeps the input length. Level `j` uses the base filters with
/// `2^(j-1) - 1` zeros inserted between taps and circular indexing, so a
/// circular shift of the input shifts every band by the same amount.
///
/// The decimated transform with an arbitrary choice of even/odd samples at
/// each level (the ε-decimated DWT) is a subsampling of these bands: for a
/// choice sequence ε the level-j coefficients are the samples at indices
/// congruent to `sum_i ε_i 2^(i-1)` modulo `2^j`, up to the filter delay.
#[derive(Debug, Clone, PartialEq)]
pub struct UwtDecomposition {
    /// `details[j-1]` is the detail band of level j.
    pub details: Vec<Vec<f64>>,
    /// `approximations[j-1]` is the approximation of level j.
    pub approximations: Vec<Vec<f64>>,
}

impl UwtDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    pub fn approximation(&self, level: usize) -> &[f64] {
        &self.approximations[level - 1]
    }

    /// Approximation of the coarsest level.
    pub fn coarsest(&self) -> &[f64] {
        self.approximations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Samples of the ε-decimated DWT selected by `eps` (one bit per level, finest first).
    /// Returns the detail coefficients of the last level in `eps`.
    pub fn epsilon_decimated_detail(&self, eps: &[bool]) -> Vec<f64> {
        let level = eps.len();
        assert!(
            level >= 1 && level <= self.levels(),
            "epsilon path longer than decomposition"
        );
        let offset: usize = eps.iter().enumerate().map(|(i, &e)| usize::from(e) << i).sum();
        let step = 1usize << level;
        self.detail(level).iter().skip(offset).step_by(step).copied().collect()
    }
}

/// Minimum signal length accepted by [`uwt`] for `levels` levels.
pub fn uwt_min_len(basis: &WaveletBasis, levels: usize) -> usize {
    2 * basis.upsampled_len(levels)
}

fn atrous_step(x: &[f64], lo: &[f64], hi: &[f64], step: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut a = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (m, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let k = (i as isize - (m * step) as isize).rem_euclid(n as isize) as usize;
            sa += l * x[k];
            sd += h * x[k];
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// Undecimated wavelet transform with periodic boundary.
pub fn uwt(signal: &[f64], basis: &WaveletBasis, levels: usize) -> Result<UwtDecomposition, WaveletError> {
    if levels == 0 {
        return Err(WaveletError::InvalidLevels(levels));
    }
    let required = uwt_min_len(basis, levels);
    if signal.len() < required {
        return Err(WaveletError::SignalTooShort {
            len: signal.len(),
            required,
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut approximations = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for j in 0..levels {
        let (a, d) = atrous_step(&current, basis.dec_lo(), basis.dec_hi(), 1 << j);
        details.push(d);
        approximations.push(a.clone());
        current = a;
    }
    Ok(UwtDecomposition {
        details,
        approximations,
    })
}

/// Inverse of [`uwt`]; starts from the coarsest approximation and every detail band.
pub fn iuwt(decomp: &UwtDecomposition, basis: &WaveletBasis) -> Result<Vec<f64>, WaveletError> {
    let levels = decomp.levels();
    if levels == 0 || decomp.approximations.len() != levels {
        return Err(WaveletError::ShapeMismatch("empty or inconsistent UWT".into()));
    }
    let n = decomp.coarsest().len();
    if decomp.details.iter().any(|d| d.len() != n) {
        return Err(WaveletError::ShapeMismatch("UWT bands differ in length".into()));
    }
    let lo = basis.dec_lo();
    let hi = basis.dec_hi();
    let mut approx = decomp.coarsest().to_vec();
    for j in (0..levels).rev() {
        let step = 1usize << j;
        let d = &decomp.details[j];
        let mut prev = vec![0.0; n];
        for (k, p) in prev.iter_mut().enumerate() {
            let mut s = 0.0;
            for (m, (&l, &h)) in lo.iter().zip(hi).enumerate() {
                let idx = (k + m * step) % n;
                s += l * approx[idx] + h * d[idx];
            }
            *p = 0.5 * s;
        }
        approx = prev;
    }
    Ok(approx)
}
