// Block-structured kernels index several parallel collections by block id.
#![allow(clippy::needless_range_loop)]

//! Collaborative localization filters and simulation engine.
//!
//! This crate implements three estimators for a network of ground vehicles
//! equipped with IMU, wheel odometry, GPS, and UWB ranging:
//!
//! * [`filters::EkfFilter`] — a standalone per-vehicle EKF that ignores
//!   vehicle-to-vehicle measurements,
//! * [`filters::CclFilter`] — a centralized filter over the stacked state of
//!   all vehicles, the optimality reference,
//! * [`filters::DclVehicleFilter`] — a decentralized filter that tracks
//!   factored cross-correlations so two vehicles can fuse a relative range
//!   measurement by exchanging only two messages.
//!
//! The [`engine`] module replays identical noisy sensor streams through all
//! three filters and aggregates RMS error distributions over Monte-Carlo
//! batches, with deterministic output for a given seed regardless of the
//! parallelism degree.

pub mod engine;
pub mod filters;
pub mod models;
pub mod scenarios;
pub mod sensing;
pub mod types;

use thiserror::Error;

/// Errors surfaced by models, filters, and the simulation engine.
///
/// Configuration problems are reported before a run starts; numerical
/// problems abort the affected filter and are recorded on the run result
/// rather than silently ignored.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A measurement geometry too degenerate to linearize (for ranging:
    /// nearly coincident positions). The caller is expected to skip the
    /// measurement.
    #[error("degenerate measurement geometry: range {range:.3} m below {min:.3} m")]
    DegenerateGeometry { range: f64, min: f64 },

    /// The innovation covariance could not be inverted.
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,

    /// A prior covariance needed for factor rescaling stayed singular even
    /// after regularization.
    #[error("covariance matrix is numerically singular")]
    SingularCovariance,

    /// A non-finite value appeared in a filter state or covariance.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// An invalid configuration value, reported with the offending field.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

impl Error {
    pub fn invalid_config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors that indicate a numerical failure inside a filter,
    /// as opposed to bad configuration or skippable geometry.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularInnovation | Error::SingularCovariance | Error::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
