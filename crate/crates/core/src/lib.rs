//! Post-hoc out-of-distribution scoring by removing the dominant rank-1
//! component of a high-level feature map.

pub mod bounds;
pub mod eigen;
pub mod error;
pub mod eval_metrics;
pub mod feature;
pub mod feature_io;
pub mod head_model;
pub mod rmt;
pub mod scoring;
pub mod spectral;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use feature::FeatureMap;
pub use feature_io::{ClassifierHead, FeatureSet, ScoreSet};
pub use spectral::{PowerIterationConfig, Solver, Spectrum};
