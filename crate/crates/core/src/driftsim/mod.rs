//! Deterministic simulator of drifting apps and scripted memory agents.
//!
//! Apps are generated from a seed, then redesigned by appearance drift
//! (features and labels change, functions do not) and workflow drift
//! (navigation is rewired, goals stay reachable). Scripted agents act on what
//! they can see and, optionally, on procedural and stationary memory, which
//! evolves from their successful episodes.

mod agent;
mod app;
mod drift;
mod evolve;
pub mod presets;
mod suite;
pub mod vocab;

use thiserror::Error;

pub use agent::{run_episode, AgentConfig, EpisodeMemory, EpisodeResult, OriginBoundary, Provenance, TranscriptStep};
pub use app::{generate_app, generate_tasks, AppSpec, AppVersion, Screen, ScreenId, TaskGenSpec, TaskSpec, UiElement};
pub use drift::{apply_drift, DriftOp, MAX_DRIFT_ATTEMPTS};
pub use evolve::{
    build_initial_bank, evolve_after_episode, oracle_trajectory, ClusterBuffer, EvolutionConfig, EvolutionReport,
    MemoryBank,
};
pub use suite::{
    evaluate_suite, metrics_csv, BankSource, EpisodeRecord, MetricsRow, Scenario, ScheduledDrift, SuiteOutput,
};

use crate::cluster::ClusterError;
use crate::memstore::StoreError;
use crate::procedural::ProceduralError;
use crate::stationary::StationaryError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),
    #[error("drift lost reachability after {attempts} attempts")]
    ReachabilityLost { attempts: usize },
    #[error("screen {0} is unreachable from the entry")]
    Unreachable(ScreenId),
    #[error("goal screen has no element labelled {0:?}")]
    UnknownTarget(String),
    #[error("budget must be at least 1")]
    InvalidBudget,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Procedural(#[from] ProceduralError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}
