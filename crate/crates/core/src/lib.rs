//! Single-lead ECG beat classification: WFDB input, wavelet preprocessing and
//! delineation, a discrete Bayesian network classifier, boxplot screening of
//! its abnormal predictions and windowed alarms.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnc;
pub mod delineate;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod tukey;
pub mod wavelet;
pub mod wfdb;
