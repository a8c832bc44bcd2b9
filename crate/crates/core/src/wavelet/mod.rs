//! Orthogonal wavelet filter banks: decimated DWT, à-trous UWT and
//! coefficient thresholding.

mod basis;
mod dwt;
mod threshold;
mod uwt;

use std::io::Write;

use thiserror::Error;

pub use basis::{Family, WaveletBasis};
pub use dwt::{dwt, dwt_with_mode, idwt, BoundaryMode, DwtDecomposition};
pub use threshold::{mad_sigma, threshold_details, universal_thresholds, ThresholdRule};
pub use uwt::{iuwt, uwt, uwt_min_len, UwtDecomposition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("signal of {len} samples is too short, at least {required} required")]
    SignalTooShort { len: usize, required: usize },
    #[error("signal length {len} is not divisible by 2^{levels} (periodic boundary)")]
    LengthNotDivisible { len: usize, levels: usize },
    #[error("decomposition depth must be at least 1, got {0}")]
    InvalidLevels(usize),
    #[error("coefficient shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported wavelet family {0:?}")]
    UnknownFamily(String),
}

/// Dump coefficient bands as `level,index,value` rows. Level 0 is the coarsest approximation.
pub fn write_coefficients_csv<W: Write>(mut out: W, details: &[Vec<f64>], approx: &[f64]) -> std::io::Result<()> {
    writeln!(out, "level,index,value")?;
    for (j, band) in details.iter().enumerate() {
        for (i, v) in band.iter().enumerate() {
            writeln!(out, "{},{i},{v}", j + 1)?;
        }
    }
    for (i, v) in approx.iter().enumerate() {
        writeln!(out, "0,{i},{v}")?;
    }
    Ok(())
}
