//! Offline collaborative-BCI toolkit: SPD covariance geometry, quarantined
//! tangent-space classification, an adaptive phase × reaction-time oracle,
//! a synthetic operator cohort, exhaustive team simulation and the
//! statistics used to compare aggregation methods.

pub mod app;
pub mod classifier;
pub mod cohort;
pub mod domain;
pub mod oracle;
pub mod pipeline;
pub mod seed;
pub mod signal;
pub mod spd;
pub mod stats;
pub mod team;
