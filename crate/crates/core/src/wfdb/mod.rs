//! Reading and writing waveform-database records: the text header, the
//! packed signal file (formats 212 and 16) and the binary annotation stream.

mod annotation;
mod header;
mod record;
mod signal;

use std::path::PathBuf;

use thiserror::Error;

pub use annotation::{
    code_symbol, is_retained, read_annotations, symbol_code, write_annotations, AnnotationSet, BeatAnnotation,
};
pub use header::{parse_header, RecordHeader, SignalFormat, SignalSpec};
pub use record::{map_class, read_record, write_annotation_csv, write_record, AnomalyClass, EcgRecord};
pub use signal::{adc_to_mv, mv_to_adc, read_signal, read_signal_raw, write_signal, write_signal_raw};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WfdbError {
    #[error("malformed header, line {line}, field {field}: {reason}")]
    MalformedHeader { line: usize, field: String, reason: String },
    #[error("unsupported signal format {0} (supported: 212, 16)")]
    UnsupportedFormat(u32),
    #[error("signal data truncated: expected {expected} bytes, found {found}")]
    TruncatedSignal { expected: usize, found: usize },
    #[error("signal length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("raw sample {value} of signal {signal} at {sample} does not fit the storage format")]
    SampleOutOfRange { signal: usize, sample: usize, value: i32 },
    #[error("malformed annotation stream at byte {offset}: {reason}")]
    MalformedAnnotationStream { offset: usize, reason: String },
    #[error("annotation {index} is not after its predecessor")]
    NonMonotonicAnnotations { index: usize },
    #[error("annotation code {0} cannot be written")]
    InvalidAnnotationCode(u8),
    #[error("annotation at sample {sample} lies beyond the {n_samples}-sample record")]
    AnnotationOutOfRange { sample: usize, n_samples: usize },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}
