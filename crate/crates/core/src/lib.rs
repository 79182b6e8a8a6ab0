//! Dynamic SIR(D) modelling of regional epidemic counts.
//!
//! The pipeline: [`ingest`] cleans cumulative confirmed/recovered/deceased
//! counts, [`estimation`] refits `(beta, nu, mu)` every day over a sliding
//! window and derives a robust reproduction number, [`prediction`] projects
//! forward with empirical bands, and [`clustering`] groups regions by their
//! R0 trajectories.

pub mod clustering;
pub mod estimation;
pub mod ingest;
pub mod numfmt;
pub mod prediction;
pub mod report;
pub mod sird;
pub mod synthetic;

#[cfg(test)]
mod testutil;

pub use clustering::{align, cut, ward_cluster, AlignPolicy, AlignedSeriesMatrix, Dendrogram, Merge};
pub use estimation::{
    fit_region, fit_window, robust_r0, smooth_series, window_rss, EstimateSeries, FitConfig, FitError,
    GridSpec, MedianMode, ParamAxis,
};
pub use ingest::{clean, observed_increments, parse_input, CleanReport, RawTable, RegionCode, RegionSeries};
pub use prediction::{band, forecast, long_term, one_step_errors, predict, ErrorDistribution, Forecast};
pub use sird::{
    daily_increments, derivative, integrate, r0_of, CompartmentState, IncrementSeries, ModelError,
    SirdParams, Trajectory,
};
