//! Review-based long-horizon stock direction prediction.
//!
//! The crate turns raw product reviews and daily prices into a firm-week
//! feature panel, screens features by per-firm Pearson significance against
//! forward returns, and evaluates boosted-tree classifiers against a
//! technical-indicator baseline.

pub mod calendar;
pub mod error;
pub mod features;
pub mod gbm;
pub mod ingest;
pub mod market;
pub mod numeric;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
