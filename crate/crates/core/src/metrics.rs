//! Retention quality: per-slot coverage, survival under iterative
//! compaction, and Pareto fronts over (cells, min coverage).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::pattern::{LadderConfig, RetentionMask};
use crate::simulator::Trace;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Layers retaining each slot.
    pub per_token_layers: Vec<usize>,
    /// Minimum over non-exempt slots (sinks and the recent tail excluded).
    /// Falls back to all slots when every slot is exempt.
    pub min_coverage: usize,
    /// Mean over the same slots as `min_coverage`.
    pub mean_coverage: f64,
    /// Slots retained by at least one layer.
    pub distinct_tokens: usize,
    pub per_layer_occupancy: Vec<usize>,
    pub total_cells: usize,
}

pub fn coverage_report(mask: &RetentionMask, cfg: &LadderConfig) -> Result<CoverageReport> {
    if mask.layers() != cfg.layers {
        return Err(Error::Shape(format!(
            "mask has {} layers, config {}",
            mask.layers(),
            cfg.layers
        )));
    }
    let slots = mask.slots();
    let per_token_layers = mask.per_slot_counts();
    let lo = cfg.sinks.min(slots);
    let hi = slots.saturating_sub(cfg.recent_exempt).max(lo);
    let scored = if lo < hi { &per_token_layers[lo..hi] } else { &per_token_layers[..] };
    let min_coverage = scored.iter().copied().min().unwrap_or(0);
    let mean_coverage = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<usize>() as f64 / scored.len() as f64
    };
    let per_layer_occupancy = mask.layer_popcounts();
    Ok(CoverageReport {
        distinct_tokens: per_token_layers.iter().filter(|&&c| c > 0).count(),
        total_cells: per_layer_occupancy.iter().sum(),
        per_token_layers,
        min_coverage,
        mean_coverage,
        per_layer_occupancy,
    })
}

/// Layers retaining each token after each compaction of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivalProfile {
    pub layers: usize,
    /// Trigger step of each compaction; compaction `k` saw tokens `0..steps[k]`.
    pub steps: Vec<usize>,
    /// `counts[k][t]` for `t < steps[k]`.
    pub counts: Vec<Vec<usize>>,
}

impl SurvivalProfile {
    /// Layers retaining `token` after compaction `k`, if it existed then.
    pub fn count(&self, token: usize, k: usize) -> Option<usize> {
        self.counts.get(k)?.get(token).copied()
    }

    /// Tokens appended between compactions `c - 1` and `c` (cohort 0 is
    /// everything before the first compaction).
    pub fn cohort(&self, c: usize) -> Range<usize> {
        let start = if c == 0 { 0 } else { self.steps[c - 1] };
        start..self.steps.get(c).copied().unwrap_or(start)
    }

    /// Fraction of `(layer, token)` cells for `tokens` still present after
    /// compaction `k`. Tokens not yet appended at `k` are ignored.
    pub fn fraction(&self, tokens: Range<usize>, k: usize) -> f64 {
        let row = &self.counts[k];
        let tokens = tokens.start.min(row.len())..tokens.end.min(row.len());
        if tokens.is_empty() {
            return 1.0;
        }
        let kept: usize = row[tokens.clone()].iter().sum();
        kept as f64 / (tokens.len() * self.layers) as f64
    }
}

pub fn survival_profile(trace: &Trace) -> Result<SurvivalProfile> {
    let records = trace.survival.as_ref().ok_or(Error::MissingSurvival)?;
    let mut steps = Vec::with_capacity(records.len());
    let mut counts = Vec::with_capacity(records.len());
    for rec in records {
        let mut row = vec![0; rec.step];
        for ids in &rec.retained {
            for &t in ids {
                row[t] += 1;
            }
        }
        steps.push(rec.step);
        counts.push(row);
    }
    Ok(SurvivalProfile {
        layers: trace.layers,
        steps,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParetoPoint {
    pub cache_cells: usize,
    pub min_coverage: usize,
    pub label: String,
}

impl ParetoPoint {
    pub fn new(cache_cells: usize, min_coverage: usize, label: impl Into<String>) -> Self {
        Self {
            cache_cells,
            min_coverage,
            label: label.into(),
        }
    }

    /// Strictly better on one axis and no worse on the other.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.cache_cells <= other.cache_cells
            && self.min_coverage >= other.min_coverage
            && (self.cache_cells < other.cache_cells || self.min_coverage > other.min_coverage)
    }
}

/// Indices of the non-dominated points, ordered by `cache_cells` with ties
/// in input order. Points equal on both axes are all kept.
pub fn pareto_indices(points: &[ParetoPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| points[i].cache_cells);
    let mut front = Vec::new();
    // Best coverage among points with strictly fewer cells.
    let mut best_before: Option<usize> = None;
    let mut i = 0;
    while i < order.len() {
        let cells = points[order[i]].cache_cells;
        let group_end = order[i..]
            .iter()
            .position(|&k| points[k].cache_cells != cells)
            .map_or(order.len(), |p| i + p);
        let group = &order[i..group_end];
        let top = group.iter().map(|&k| points[k].min_coverage).max().expect("non-empty group");
        if best_before.is_none_or(|b| top > b) {
            front.extend(group.iter().copied().filter(|&k| points[k].min_coverage == top));
            best_before = Some(top);
        }
        i = group_end;
    }
    front
}

pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    pareto_indices(points).into_iter().map(|i| points[i].clone()).collect()
}
