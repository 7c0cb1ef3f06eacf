//! Evaluation toolkit for binary sample-level annotations from multiple raters.

pub mod agreement;
pub mod annotation;
pub mod config;
pub mod consensus;
pub mod equivalence;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod seed;
pub mod synth;

pub use annotation::{AnnotationSet, BinaryAnnotation, ConfusionCounts, Label, ProbabilitySequence};
pub use error::{Error, Result};
pub use metrics::{Measure, UndefinedReason};
