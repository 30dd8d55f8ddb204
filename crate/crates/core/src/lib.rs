//! Intersectional bias analysis for image classifiers: environmental
//! attribute extraction, intersection statistics, bias-weighted augmentation,
//! fairness metrics and attribution aggregation.

pub mod attributes;
pub mod attribution;
pub mod augment;
pub mod canny;
pub mod compare;
pub mod error;
pub mod fairness;
pub mod intersections;
pub mod manifest;
pub mod rng;
pub mod run_config;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
