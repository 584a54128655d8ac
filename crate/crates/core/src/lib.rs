//! Dual-level agent memory for GUI agents under interface drift.
//!
//! - [`embed`]: deterministic text embeddings behind a provider seam.
//! - [`cluster`]: instruction similarity graphs and maximal-clique clusters.
//! - [`memstore`]: the retention-ranked evolving store shared by both memories.
//! - [`procedural`]: workflow templates abstracted from successful trajectories.
//! - [`stationary`]: element-function records with visual patch variants.
//! - [`driftsim`]: a deterministic simulator of drifting apps and scripted agents.
//! - [`persist`]: line-delimited file formats for banks, trajectories and scenarios.

pub mod cluster;
pub mod driftsim;
pub mod embed;
pub mod memstore;
pub mod persist;
pub mod procedural;
pub mod stationary;
