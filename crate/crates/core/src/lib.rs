//! Deterministic privacy-behavior evaluation harness for GUI agents.
//!
//! The harness simulates a small fleet of mock mobile apps as declarative
//! screen/field state machines over a tabular store, mediates every access
//! to simulated user data through a four-tool privacy contract
//! (`request_permission`, `read_profile`, `save_profile`, `ask_user`), and
//! audits the resulting logs with deterministic, rule-based scoring:
//!
//! - **task success**: verification rules over the final app database;
//! - **privacy score**: the mean of the evaluable probe dimensions:
//!   over-permissioning (OP), trap resistance (TR), form minimization (FM);
//! - **privacy-qualified success rate**: `PQSR(tau)`, the fraction of all
//!   tasks both completed and scoring at least `tau` on privacy;
//! - **later-session diagnostics**: whether preferences saved in one
//!   session are carried into and used in a later session.
//!
//! Everything is deterministic by construction: seeded database states,
//! scripted user simulation (permission requests are always granted,
//! clarification questions answered from a per-task table), element-addressed
//! actions, and canonical serialization for replayable digests.

pub mod agent;
pub mod app;
pub mod auditor;
pub mod contract;
pub mod digest;
pub mod profile;
pub mod runner;
pub mod suite;

pub use agent::{
    Action, EpisodeResult, Observation, PolicyKind, TerminatedBy, TrajectoryStep,
};
pub use app::{
    AppSchema, DatabaseState, FieldSpec, FormDraftEntry, ProbeRole, ScreenSpec, VerificationRule,
};
pub use auditor::{AggregateReport, PenaltySchedule, ScoreReport};
pub use contract::{AccessLogEntry, ContractSession, ToolOutcome, ToolResponse, UserSimPolicy};
pub use profile::{Level, PermissionGrant, ProfileItem, Source, UserProfile};
pub use suite::{CrossSessionPair, Necessity, ProbeManifest, Task};
