//! Memory-bounded KV-cache management with a ladder-shaped retention
//! pattern.
//!
//! Each layer of a decoder keeps a different subset of past tokens: token
//! segments are assigned to overlapping windows of consecutive layers that
//! step deeper as the stream advances, so the cache as a whole spans far more
//! tokens than a sliding window of the same size. When a layer reaches its
//! budget the pattern is applied again to the already-compacted slots
//! ([`kvcache`]), which compresses old content more than new.
//!
//! * [`pattern`]: geometry and materialized masks
//! * [`kvcache`]: the budgeted store and iterative compaction
//! * [`refmodel`]: toy attention decoder plus the masked-full oracle
//! * [`metrics`]: coverage, survival and Pareto fronts
//! * [`simulator`]: stream runs and the random-pattern sweep

pub mod error;
pub mod exec;
pub mod kvcache;
pub mod metrics;
pub mod pattern;
pub mod refmodel;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kvcache::{CompactionEvent, KvCache, KvEntry, KvPair, PositionMode};
pub use metrics::{coverage_report, pareto_front, survival_profile, CoverageReport, ParetoPoint, SurvivalProfile};
pub use pattern::{
    is_retained, materialize, random_pattern, segment_window, LadderConfig, LayerWindow, PatternKind, RetentionMask,
};
pub use refmodel::{build_model, EvictedSet, FullHistory, ToyModel, ToyModelConfig};
pub use rng::{splitmix64_next, SplitMix64};
pub use simulator::{
    run, run_stream, sliding_window_run, sweep, sweep_with, Protocol, SimConfig, SweepResult, Trace, TraceEvent,
    TraceRow,
};
