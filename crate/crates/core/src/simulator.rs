//! Token-stream driver, chunked (sliding-window) protocol and the random
//! pattern sweep.
//!
//! Structural runs append zero-width payloads, so very long streams are
//! cheap; numeric runs decode every token through a [`ToyModel`]. Policy
//! decisions never read payloads, which makes the two modes produce the same
//! retention trace.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kvcache::{CompactionEvent, KvCache};
use crate::metrics::{coverage_report, pareto_indices, CoverageReport, ParetoPoint};
use crate::pattern::{materialize_with, random_pattern_with, BitRow, LadderConfig, PatternKind, RetentionMask};
use crate::refmodel::{build_model, ToyModelConfig};
use crate::rng::SplitMix64;

pub const DEFAULT_SNAPSHOT_EVERY: usize = 256;
/// Window length of the chunked long-document protocol.
pub const DEFAULT_WINDOW: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Protocol {
    #[default]
    TokenByToken,
    /// Consecutive chunks of this many tokens; the cache persists across chunks.
    SlidingWindow(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cache: LadderConfig,
    pub policy: PatternKind,
    /// Numeric mode when present, structural otherwise.
    pub model: Option<ToyModelConfig>,
    pub steps: usize,
    pub protocol: Protocol,
    pub snapshot_every: usize,
    /// Keep per-layer retained ids after every compaction.
    pub record_survival: bool,
    /// Emit one `append` row per layer per step. Off by default because it
    /// dominates trace size on long runs.
    pub record_appends: bool,
}

impl SimConfig {
    pub fn structural(cache: LadderConfig, policy: PatternKind, steps: usize) -> Self {
        Self {
            cache,
            policy,
            model: None,
            steps,
            protocol: Protocol::TokenByToken,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            record_survival: true,
            record_appends: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.protocol == Protocol::SlidingWindow(0) {
            return bad("window must be at least 1");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1");
        }
        if let Some(model) = &self.model {
            model.validate()?;
            if model.layers != self.cache.layers {
                return Err(Error::InvalidConfig(format!(
                    "model has {} layers, cache {}",
                    model.layers, self.cache.layers
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Append,
    Compact,
    Snapshot,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Append => "append",
            TraceEvent::Compact => "compact",
            TraceEvent::Snapshot => "snapshot",
        }
    }
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One occupancy observation. `compact` rows carry the occupancy right after
/// compaction, the others the occupancy after appending token `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub step: usize,
    pub event: TraceEvent,
    pub layer: usize,
    pub occupancy: usize,
    pub n_compactions: usize,
}

/// Token ids each layer retained right after one compaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalRecord {
    pub step: usize,
    pub retained: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub policy: PatternKind,
    pub layers: usize,
    pub budget: usize,
    pub rows: Vec<TraceRow>,
    pub survival: Option<Vec<SurvivalRecord>>,
    pub events: Vec<CompactionEvent>,
    pub final_occupancy: Vec<usize>,
    /// Coverage over the token universe `0..steps_completed`.
    pub final_coverage: CoverageReport,
    pub steps_completed: usize,
    /// Step at which a Full cache ran out of budget (the OOM analog).
    pub exhausted_at: Option<usize>,
    pub chunks: usize,
}

impl Trace {
    pub fn n_compactions(&self) -> usize {
        self.events.len()
    }

    pub fn max_row_occupancy(&self) -> usize {
        self.rows.iter().map(|r| r.occupancy).max().unwrap_or(0)
    }

    /// Equal retention behaviour, ignoring how the stream was chunked.
    pub fn same_retention(&self, other: &Trace) -> bool {
        self.rows == other.rows
            && self.survival == other.survival
            && self.events == other.events
            && self.final_occupancy == other.final_occupancy
            && self.steps_completed == other.steps_completed
            && self.exhausted_at == other.exhausted_at
    }
}

/// Runs `cfg` under its own protocol.
pub fn run(cfg: &SimConfig) -> Result<Trace> {
    match cfg.protocol {
        Protocol::TokenByToken => run_stream(cfg),
        Protocol::SlidingWindow(_) => sliding_window_run(cfg),
    }
}

/// Appends `cfg.steps` tokens one at a time.
pub fn run_stream(cfg: &SimConfig) -> Result<Trace> {
    cfg.validate()?;
    drive(cfg, cfg.steps)
}

/// Processes the stream in consecutive windows; the compacted cache carries
/// over from one window to the next.
pub fn sliding_window_run(cfg: &SimConfig) -> Result<Trace> {
    cfg.validate()?;
    match cfg.protocol {
        Protocol::SlidingWindow(window) => drive(cfg, window),
        Protocol::TokenByToken => Err(Error::InvalidConfig(
            "sliding-window run needs a sliding-window protocol".into(),
        )),
    }
}

fn drive(cfg: &SimConfig, chunk: usize) -> Result<Trace> {
    let layers = cfg.cache.layers;
    let model = cfg.model.map(build_model).transpose()?;
    let kv_width = model.as_ref().map_or(0, |m| m.width());
    let mut cache = KvCache::new(cfg.cache, cfg.policy, kv_width)?;
    let mut rows = Vec::new();
    let mut survival = cfg.record_survival.then(Vec::new);
    let mut exhausted_at = None;
    let mut chunks = 0;

    'stream: for chunk_start in (0..cfg.steps).step_by(chunk) {
        chunks += 1;
        for t in chunk_start..(chunk_start + chunk).min(cfg.steps) {
            let before = cache.n_compactions();
            let outcome = match &model {
                Some(m) => m.decode_step(&mut cache, &m.embedding(t), t).map(drop),
                None => cache.append_structural(t).map(drop),
            };
            match outcome {
                Ok(()) => {}
                Err(Error::BudgetExhausted { step, .. }) => {
                    exhausted_at = Some(step);
                    break 'stream;
                }
                Err(e) => return Err(e),
            }
            if cache.n_compactions() > before {
                let event = cache.events().last().expect("compaction recorded");
                rows.extend(event.after.iter().enumerate().map(|(layer, &occupancy)| TraceRow {
                    step: t,
                    event: TraceEvent::Compact,
                    layer,
                    occupancy,
                    n_compactions: cache.n_compactions(),
                }));
                if let Some(records) = survival.as_mut() {
                    records.push(SurvivalRecord {
                        step: t,
                        retained: (0..layers).map(|l| retained_before(&cache, l, t)).collect(),
                    });
                }
            }
            if cfg.record_appends {
                push_rows(&mut rows, &cache, t, TraceEvent::Append);
            }
            if (t + 1) % cfg.snapshot_every == 0 || t + 1 == cfg.steps {
                push_rows(&mut rows, &cache, t, TraceEvent::Snapshot);
            }
        }
    }

    let steps_completed = cache.step();
    let mut universe = vec![BitRow::new(steps_completed); layers];
    for (l, row) in universe.iter_mut().enumerate() {
        for e in cache.entries(l)? {
            row.set(e.token_id);
        }
    }
    let final_coverage = coverage_report(&RetentionMask::from_rows(steps_completed, universe), &cfg.cache)?;
    Ok(Trace {
        policy: cfg.policy,
        layers,
        budget: cfg.cache.budget,
        rows,
        survival,
        events: cache.events().to_vec(),
        final_occupancy: cache.occupancies(),
        final_coverage,
        steps_completed,
        exhausted_at,
        chunks,
    })
}

/// Retained ids of `layer` excluding token `t`, which was appended right
/// after the compaction.
fn retained_before(cache: &KvCache, layer: usize, t: usize) -> Vec<usize> {
    let entries = cache.entries(layer).expect("layer in range");
    entries
        .iter()
        .map(|e| e.token_id)
        .filter(|&id| id != t)
        .collect()
}

fn push_rows(rows: &mut Vec<TraceRow>, cache: &KvCache, step: usize, event: TraceEvent) {
    rows.extend(cache.occupancies().into_iter().enumerate().map(|(layer, occupancy)| TraceRow {
        step,
        event,
        layer,
        occupancy,
        n_compactions: cache.n_compactions(),
    }));
}

/// Runs the same stream under each policy, in parallel when `exec` allows.
/// Results follow the order of `policies`.
pub fn compare_policies(exec: Execution, base: &SimConfig, policies: &[PatternKind]) -> Result<Vec<Trace>> {
    exec.map(policies, |&policy| run(&SimConfig { policy, ..base.clone() }))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub seed: u64,
    pub n: usize,
    /// Ladder, streaming, then the random patterns in seed order.
    pub points: Vec<ParetoPoint>,
    pub on_front: Vec<bool>,
    pub front: Vec<ParetoPoint>,
}

impl SweepResult {
    pub fn point(&self, label: &str) -> Option<(&ParetoPoint, bool)> {
        self.points
            .iter()
            .zip(&self.on_front)
            .find(|(p, _)| p.label == label)
            .map(|(p, &f)| (p, f))
    }
}

pub const LADDER_LABEL: &str = "ladder";
pub const STREAMING_LABEL: &str = "streaming";

pub fn sweep(seed: u64, n: usize, cfg: &LadderConfig, n_slots: usize, ratios: &[f64]) -> Result<SweepResult> {
    sweep_with(Execution::default(), seed, n, cfg, n_slots, ratios)
}

/// Scores `n` random patterns plus the ladder and streaming baselines by
/// `(total cells, min coverage)`. Pattern `i` uses seed `value_at(seed, i)`
/// and ratio `ratios[i % ratios.len()]`.
pub fn sweep_with(
    exec: Execution,
    seed: u64,
    n: usize,
    cfg: &LadderConfig,
    n_slots: usize,
    ratios: &[f64],
) -> Result<SweepResult> {
    if n == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one pattern".into()));
    }
    if ratios.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one ratio".into()));
    }
    let score = |mask: RetentionMask, label: String| -> Result<ParetoPoint> {
        let report = coverage_report(&mask, cfg)?;
        Ok(ParetoPoint::new(report.total_cells, report.min_coverage, label))
    };
    let mut points = vec![
        score(materialize_with(exec, PatternKind::Ladder, cfg, n_slots)?, LADDER_LABEL.into())?,
        score(materialize_with(exec, PatternKind::Streaming, cfg, n_slots)?, STREAMING_LABEL.into())?,
    ];
    let randoms: Result<Vec<ParetoPoint>> = exec
        .map_range(n, |i| {
            let pattern_seed = SplitMix64::value_at(seed, i as u64);
            let mask = random_pattern_with(Execution::Sequential, pattern_seed, cfg, n_slots, ratios[i % ratios.len()])?;
            score(mask, format!("random-{i}"))
        })
        .into_iter()
        .collect();
    points.extend(randoms?);
    let front_idx = pareto_indices(&points);
    let mut on_front = vec![false; points.len()];
    for &i in &front_idx {
        on_front[i] = true;
    }
    Ok(SweepResult {
        seed,
        n,
        front: front_idx.iter().map(|&i| points[i].clone()).collect(),
        points,
        on_front,
    })
}
