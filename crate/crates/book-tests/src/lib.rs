//! The guide's chapters, compiled so that every listing runs under `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/records.md")]
pub mod records {}

#[doc = include_str!("../../../book/src/wavelets.md")]
pub mod wavelets {}

#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod preprocessing {}

#[doc = include_str!("../../../book/src/delineation.md")]
pub mod delineation {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/classifier.md")]
pub mod classifier {}

#[doc = include_str!("../../../book/src/boxplot.md")]
pub mod boxplot {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
