//! Evaluation, postprocessing, ranking, ensembling, border-core instance
//! encoding and U-Net topology planning for multi-class CBCT segmentations.
//!
//! All volumes use x-fastest linear order (see [`volume`]).

#![allow(clippy::needless_range_loop)]

pub mod bordercore;
pub mod classes;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod nifti;
pub mod planner;
pub mod postprocess;
pub mod ranking;
pub mod synth;
pub mod volume;

pub use classes::{ClassEntry, ClassGroup, ClassTable};
pub use error::{Error, Result};
pub use volume::{
    class_mask, flip_axis, normalize_ct, LabelVolume, Mask, NormalizationScheme, Region,
    ScalarVolume, Spacing, Volume,
};
