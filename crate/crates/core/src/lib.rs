//! Probability of informed trading (PIN) and probability of heuristic-driven
//! trading (PH) from daily buy/sell trade counts.
//!
//! The model mixes three trader classes: informed traders who arrive only on
//! information-event days, uninformed liquidity traders, and contrarian
//! heuristic traders whose buy or sell flow is switched on by the sign of the
//! previous day's market return. Parameters are fitted per asset and period by
//! multistart maximum likelihood.
//!
//! Modules:
//! - [`model`]: parameter types, the daily/window log-likelihood, PIN and PH.
//! - [`estimator`]: Monte-Carlo multistart fitting with box constraints.
//! - [`simulator`]: exact data-generating process and a brute-force likelihood oracle.
//! - [`ingest`]: trade/market/metadata parsing, aggregation, filtering, periodization.
//! - [`stats`]: descriptive summaries, Welch mean-difference tables, OLS, size-group profiles.
//! - [`fixture`]: the shipped 45-asset cross-section used by the regression checks.

pub mod error;
pub mod estimator;
pub mod fixture;
pub mod ingest;
pub mod model;
pub mod optimize;
pub mod simulator;
pub mod stats;

pub use error::{EstimateError, IngestError, ModelError, StatsError};
pub use estimator::{
    compute_bounds, draw_candidates, estimate, estimate_panel, local_optimize, EstimatorConfig,
    LocalFit, ModelVariant, ParameterBounds,
};
pub use model::{
    average_pin_ph, daily_log_likelihood, daily_ph, daily_pin, heuristic_rates,
    window_log_likelihood, DailyCounts, EstimationResult, EstimationWindow, Indicator, ParamName,
    ParameterSet,
};
