//! Temperature-driven hierarchical storage scheduling for cloud-edge-end
//! time-series data.
//!
//! The crate is organized bottom-up:
//!
//! - [`temperature`]: per-segment data temperature (exponential cooling plus
//!   access-driven heating), windowed updates and the 8-byte record encoding.
//! - [`workload`]: synthetic query workloads from five template kinds and four
//!   arrival-rate patterns.
//! - [`cluster`]: template extraction and online DTW clustering of arrival
//!   histories.
//! - [`forecast`]: linear, LSTM and error-weighted ensemble arrival-rate
//!   forecasting.
//! - [`frequent`]: Misra-Gries mining of frequently accessed timestamp buckets.
//! - [`scheduler`]: tier placement, preheating, demotion and summarization.
//! - [`harness`]: dataset ingestion, experiment orchestration, baselines and
//!   reports; backs the `thermotier` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod error;
pub mod forecast;
pub mod frequent;
pub mod harness;
pub mod scheduler;
pub mod temperature;
pub mod workload;

pub use error::{Error, Result};

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

/// Identifies one time series (one tag-value combination of the dataset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesId(pub u32);

impl std::fmt::Display for SeriesId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
