use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WaveletError;

/// Orthogonal wavelet families with compact support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Haar,
    /// Daubechies with `k` vanishing moments (2k taps). Supported: 2, 3, 4.
    Daubechies(u8),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Haar => write!(f, "haar"),
            Family::Daubechies(k) => write!(f, "db{k}"),
        }
    }
}

impl FromStr for Family {
    type Err = WaveletError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "haar" | "db1" => Ok(Family::Haar),
            other => other
                .strip_prefix("db")
                .and_then(|k| k.parse::<u8>().ok())
                .filter(|k| (2..=4).contains(k))
                .map(Family::Daubechies)
                .ok_or_else(|| WaveletError::UnknownFamily(s.to_string())),
        }
    }
}

// Scaling (reconstruction low-pass) filters, normalised so that the taps sum to sqrt(2).
const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB2: [f64; 4] = [
    0.48296291314453416,
    0.8365163037378079,
    0.2241438680420134,
    -0.12940952255126037,
];
const DB3: [f64; 6] = [
    0.3326705529500826,
    0.8068915093110924,
    0.45987750211849154,
    -0.13501102001025458,
    -0.08544127388202666,
    0.035226291885709526,
];
const DB4: [f64; 8] = [
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859854,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
];

/// Analysis and synthesis filters of an orthogonal two-channel filter bank.
///
/// The analysis pair is used in convolution form: the level-one approximation
/// is `A[n] = sum_k s[k] L[2n - k]` and the detail `D[n] = sum_k s[k] H[2n - k]`.
/// Because the bank is orthogonal, synthesis is the transpose of analysis and
/// the reconstruction filters are the time-reversed analysis filters.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBasis {
    family: Family,
    dec_lo: Vec<f64>,
    dec_hi: Vec<f64>,
    rec_lo: Vec<f64>,
    rec_hi: Vec<f64>,
}

impl WaveletBasis {
    pub fn new(family: Family) -> Result<Self, WaveletError> {
        let scaling: &[f64] = match family {
            Family::Haar => &HAAR,
            Family::Daubechies(2) => &DB2,
            Family::Daubechies(3) => &DB3,
            Family::Daubechies(4) => &DB4,
            Family::Daubechies(_) => return Err(WaveletError::UnknownFamily(family.to_string())),
        };
        Ok(Self::from_scaling_filter(family, scaling))
    }

    pub fn haar() -> Self {
        Self::from_scaling_filter(Family::Haar, &HAAR)
    }

    pub fn daubechies4() -> Self {
        Self::from_scaling_filter(Family::Daubechies(4), &DB4)
    }

    fn from_scaling_filter(family: Family, scaling: &[f64]) -> Self {
        let n = scaling.len();
        let rec_lo = scaling.to_vec();
        // Quadrature mirror: g[k] = (-1)^k h[n-1-k].
        let rec_hi: Vec<f64> = (0..n)
            .map(|k| {
                let v = scaling[n - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let dec_lo = rec_lo.iter().rev().copied().collect();
        let dec_hi = rec_hi.iter().rev().copied().collect();
        Self {
            family,
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of taps of each filter.
    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }

    /// Analysis low-pass filter `L`.
    pub fn dec_lo(&self) -> &[f64] {
        &self.dec_lo
    }

    /// Analysis high-pass filter `H`.
    pub fn dec_hi(&self) -> &[f64] {
        &self.dec_hi
    }

    pub fn rec_lo(&self) -> &[f64] {
        &self.rec_lo
    }

    pub fn rec_hi(&self) -> &[f64] {
        &self.rec_hi
    }

    /// Support length of the level-`level` à-trous filter (taps upsampled by 2^(level-1)).
    pub fn upsampled_len(&self, level: usize) -> usize {
        (self.len() - 1) * (1usize << (level.saturating_sub(1))) + 1
    }
}

impl Default for WaveletBasis {
    fn default() -> Self {
        Self::daubechies4()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<WaveletBasis> {
        ["haar", "db2", "db3", "db4"]
            .iter()
            .map(|s| WaveletBasis::new(s.parse().unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn daubechies_k_has_2k_taps() {
        for k in 2..=4u8 {
            let b = WaveletBasis::new(Family::Daubechies(k)).unwrap();
            assert_eq!(b.len(), 2 * k as usize);
        }
        assert_eq!(WaveletBasis::haar().len(), 2);
    }

    #[test]
    fn filters_are_orthonormal_under_even_shifts() {
        for b in all() {
            let l = b.dec_lo();
            let h = b.dec_hi();
            let n = l.len() as isize;
            for shift in (0..n).step_by(2) {
                let dot = |a: &[f64], c: &[f64]| -> f64 {
                    (0..n)
                        .filter(|&m| m + shift < n)
                        .map(|m| a[m as usize] * c[(m + shift) as usize])
                        .sum()
                };
                let expect = if shift == 0 { 1.0 } else { 0.0 };
                assert!((dot(l, l) - expect).abs() < 1e-12, "{:?}", b.family());
                assert!((dot(h, h) - expect).abs() < 1e-12);
                assert!(dot(l, h).abs() < 1e-12);
            }
            assert!((l.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!(h.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn parses_family_names() {
        assert_eq!("DB4".parse::<Family>().unwrap(), Family::Daubechies(4));
        assert_eq!("haar".parse::<Family>().unwrap(), Family::Haar);
        assert!("db9".parse::<Family>().is_err());
        assert!("sym4".parse::<Family>().is_err());
    }
}
