//! Longitudinal app-market analytics.
//!
//! The pipeline ingests timestamped app snapshots, reviews and ranked top-k
//! lists into an append-log [`snapstore`], diffs snapshots into change
//! [`timeline`]s and computes market statistics ([`marketmetrics`]), top-k
//! dynamics ([`topk`]) and fraud indicators ([`anomaly`]). The [`harvester`]
//! crawls a mock market, and [`simgen`] produces seeded synthetic markets with
//! known ground truth.

pub mod anomaly;
pub mod harvester;
pub mod marketmetrics;
pub mod model;
pub mod simgen;
pub mod snapstore;
pub mod timeline;
pub mod topk;

pub use model::*;
