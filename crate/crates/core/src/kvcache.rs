//! Budgeted per-layer KV store with iterative compaction.
//!
//! Every append adds one entry to every layer. When any layer reaches the
//! per-layer budget the cache compacts before the next append: the ladder
//! mask is materialized over the *slot* indices of each layer's current
//! contents and unselected slots are dropped. Because the mask is applied to
//! an already-compacted grid, old entries are re-masked at every compaction
//! and decay geometrically while recent ones are compressed at most once.
//!
//! Compaction `k` (counting from zero) applies the ladder shifted `k` layers
//! deeper (cyclically). A fixed mask would hand the lowest slots the same
//! windows at every compaction, freezing the oldest segments in the same
//! layers forever and keeping layers that share window boundaries in
//! lockstep. The first compaction is exactly the one-shot mask.

use crate::error::{Error, Result};
use crate::pattern::{ladder_row, LadderConfig, PatternKind};

#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    /// Position of the token in the original stream.
    pub token_id: usize,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
    /// Compactions the cache had undergone when the entry was appended.
    pub birth_compaction: usize,
}

/// Key/value vectors produced for one layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvPair {
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

impl KvPair {
    pub fn new(key: Vec<f64>, value: Vec<f64>) -> Self {
        Self { key, value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactionEvent {
    /// Token id whose append triggered the compaction.
    pub step: usize,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub freed: usize,
}

/// How positions are assigned to cached entries for rotary encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PositionMode {
    /// Original stream index of each token.
    #[default]
    AbsoluteOriginal,
    /// Slot index within the layer's current (compacted) contents.
    CacheRelative,
    /// No positional encoding.
    None,
}

#[derive(Debug, Clone)]
pub struct KvCache {
    layers: Vec<Vec<KvEntry>>,
    cfg: LadderConfig,
    policy: PatternKind,
    kv_width: usize,
    n_compactions: usize,
    step: usize,
    events: Vec<CompactionEvent>,
}

impl KvCache {
    /// Creates an empty cache.
    ///
    /// A ladder policy is rejected when some layer would keep every slot of
    /// a full `budget`-slot grid, since that layer could never be compacted.
    /// Phase shifts only relabel layers, so checking phase zero suffices.
    /// Random patterns are analysis-only and cannot drive eviction.
    pub fn new(cfg: LadderConfig, policy: PatternKind, kv_width: usize) -> Result<Self> {
        match policy {
            PatternKind::Ladder => {
                cfg.validate_for_eviction()?;
                for layer in 0..cfg.layers {
                    if ladder_row(&cfg, layer, cfg.budget, 0).count_ones() >= cfg.budget {
                        return Err(Error::NoProgress(format!(
                            "layer {layer} keeps every slot of a full {}-slot grid",
                            cfg.budget
                        )));
                    }
                }
            }
            PatternKind::Streaming | PatternKind::Full => cfg.validate()?,
            PatternKind::Random(_) => {
                return Err(Error::Unsupported(
                    "random patterns are for analysis and cannot drive eviction".into(),
                ))
            }
        }
        Ok(Self {
            layers: vec![Vec::with_capacity(cfg.budget); cfg.layers],
            cfg,
            policy,
            kv_width,
            n_compactions: 0,
            step: 0,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &LadderConfig {
        &self.cfg
    }

    pub fn policy(&self) -> PatternKind {
        self.policy
    }

    pub fn kv_width(&self) -> usize {
        self.kv_width
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Tokens appended so far; also the id the next append must carry.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn n_compactions(&self) -> usize {
        self.n_compactions
    }

    /// Layer shift of the ladder the next compaction applies.
    pub fn phase(&self) -> usize {
        self.n_compactions % self.cfg.layers
    }

    pub fn events(&self) -> &[CompactionEvent] {
        &self.events
    }

    pub fn occupancy(&self, layer: usize) -> usize {
        self.layers[layer].len()
    }

    pub fn occupancies(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn max_occupancy(&self) -> usize {
        self.layers.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn entries(&self, layer: usize) -> Result<&[KvEntry]> {
        self.check_layer(layer)?;
        Ok(&self.layers[layer])
    }

    pub fn needs_compaction(&self) -> bool {
        self.max_occupancy() >= self.cfg.budget
    }

    /// Appends one token's KV pairs to every layer, compacting first when a
    /// layer is at budget. Returns the compaction event, if one ran.
    pub fn append(&mut self, token_id: usize, per_layer_kv: Vec<KvPair>) -> Result<Option<CompactionEvent>> {
        if per_layer_kv.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} KV pairs for {} layers",
                per_layer_kv.len(),
                self.layers.len()
            )));
        }
        for pair in &per_layer_kv {
            self.check_width(&pair.key, &pair.value)?;
        }
        let event = self.begin_step(token_id)?;
        for (layer, pair) in per_layer_kv.into_iter().enumerate() {
            self.push_entry(layer, pair.key, pair.value);
        }
        self.finish_step();
        Ok(event)
    }

    /// Appends a token with zero-width payloads (structural simulation).
    pub fn append_structural(&mut self, token_id: usize) -> Result<Option<CompactionEvent>> {
        if self.kv_width != 0 {
            return Err(Error::Shape(format!(
                "structural append on a cache with kv width {}",
                self.kv_width
            )));
        }
        let event = self.begin_step(token_id)?;
        for layer in 0..self.layers.len() {
            self.push_entry(layer, Vec::new(), Vec::new());
        }
        self.finish_step();
        Ok(event)
    }

    pub(crate) fn check_width(&self, key: &[f64], value: &[f64]) -> Result<()> {
        if key.len() != self.kv_width || value.len() != self.kv_width {
            return Err(Error::Shape(format!(
                "key/value lengths {}/{} with kv width {}",
                key.len(),
                value.len(),
                self.kv_width
            )));
        }
        Ok(())
    }

    /// First half of an append: order check plus any compaction. The caller
    /// must push exactly one entry per layer and then call `finish_step`.
    pub(crate) fn begin_step(&mut self, token_id: usize) -> Result<Option<CompactionEvent>> {
        if token_id != self.step {
            return Err(Error::OutOfOrder {
                expected: self.step,
                got: token_id,
            });
        }
        if !self.needs_compaction() {
            return Ok(None);
        }
        if self.policy == PatternKind::Full {
            return Err(Error::BudgetExhausted {
                step: self.step,
                budget: self.cfg.budget,
            });
        }
        self.compact().map(Some)
    }

    pub(crate) fn push_entry(&mut self, layer: usize, key: Vec<f64>, value: Vec<f64>) {
        let entry = KvEntry {
            token_id: self.step,
            key,
            value,
            birth_compaction: self.n_compactions,
        };
        self.layers[layer].push(entry);
    }

    pub(crate) fn finish_step(&mut self) {
        debug_assert!(self.layers.iter().all(|l| l.last().map(|e| e.token_id) == Some(self.step)));
        self.step += 1;
    }

    /// Applies the policy mask to every layer's current slots.
    pub fn compact(&mut self) -> Result<CompactionEvent> {
        let cfg = self.cfg;
        let phase = self.phase();
        let keep: Vec<Vec<bool>> = match self.policy {
            PatternKind::Ladder => self
                .layers
                .iter()
                .enumerate()
                .map(|(layer, entries)| {
                    let n = entries.len();
                    if n < cfg.sinks + cfg.recent_exempt {
                        return vec![true; n];
                    }
                    let row = ladder_row(&cfg, layer, n, phase);
                    (0..n).map(|s| row.get(s)).collect()
                })
                .collect(),
            PatternKind::Streaming => {
                // Keeps one segment less than the steady-state window so each
                // compaction frees `segment_width` slots.
                let window = cfg.budget - cfg.sinks - cfg.segment_width;
                self.layers
                    .iter()
                    .map(|entries| {
                        let n = entries.len();
                        (0..n).map(|s| s < cfg.sinks || s + window >= n).collect()
                    })
                    .collect()
            }
            other => {
                return Err(Error::Unsupported(format!("compaction under the {other} policy")));
            }
        };

        let before = self.occupancies();
        let kept: Vec<usize> = keep.iter().map(|k| k.iter().filter(|&&b| b).count()).collect();
        let freed: usize = before.iter().zip(&kept).map(|(b, k)| b - k).sum();
        if freed == 0 {
            return Err(Error::NoProgress(format!(
                "nothing to evict at occupancies {before:?}"
            )));
        }
        for (entries, keep) in self.layers.iter_mut().zip(&keep) {
            let mut flags = keep.iter();
            entries.retain(|_| *flags.next().unwrap());
        }
        self.n_compactions += 1;
        let event = CompactionEvent {
            step: self.step,
            before,
            after: kept,
            freed,
        };
        self.events.push(event.clone());
        Ok(event)
    }

    pub fn retained_token_ids(&self, layer: usize) -> Result<Vec<usize>> {
        self.check_layer(layer)?;
        Ok(self.layers[layer].iter().map(|e| e.token_id).collect())
    }

    pub fn positions(&self, layer: usize, mode: PositionMode) -> Result<Vec<usize>> {
        self.check_layer(layer)?;
        let entries = &self.layers[layer];
        Ok(match mode {
            PositionMode::AbsoluteOriginal => entries.iter().map(|e| e.token_id).collect(),
            PositionMode::CacheRelative => (0..entries.len()).collect(),
            PositionMode::None => vec![0; entries.len()],
        })
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.layers.len() {
            return Err(Error::OutOfRange(format!(
                "layer {layer} with {} layers",
                self.layers.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(budget: usize, sinks: usize, recent: usize) -> LadderConfig {
        LadderConfig {
            layers: 4,
            span: 2,
            overlap: 0,
            segment_width: 1,
            sinks,
            recent_exempt: recent,
            budget,
        }
    }

    fn fill(cache: &mut KvCache, upto: usize) -> Vec<Option<CompactionEvent>> {
        (cache.step()..upto).map(|t| cache.append_structural(t).unwrap()).collect()
    }

    #[test]
    fn language_modeling_defaults_build() {
        let cfg = LadderConfig {
            layers: 32,
            span: 8,
            overlap: 4,
            segment_width: 16,
            sinks: 4,
            recent_exempt: 16,
            budget: 512,
        };
        assert!(KvCache::new(cfg, PatternKind::Ladder, 0).is_ok());
    }

    #[test]
    fn full_span_ladder_rejected() {
        let mut cfg = small(8, 0, 0);
        cfg.span = 4;
        assert!(matches!(KvCache::new(cfg, PatternKind::Ladder, 0), Err(Error::NoProgress(_))));
        let cache = KvCache::new(cfg, PatternKind::Full, 0).unwrap();
        assert_eq!(cache.n_compactions(), 0);
    }

    #[test]
    fn stalled_geometry_rejected() {
        // One body segment of 4 slots: layers 0..2 would keep it all.
        let cfg = LadderConfig {
            layers: 4,
            span: 2,
            overlap: 0,
            segment_width: 4,
            sinks: 1,
            recent_exempt: 1,
            budget: 6,
        };
        assert!(matches!(KvCache::new(cfg, PatternKind::Ladder, 0), Err(Error::NoProgress(_))));
    }

    #[test]
    fn random_policy_rejected() {
        assert!(matches!(
            KvCache::new(small(8, 1, 1), PatternKind::Random(1), 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn trigger_point() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        assert!(!cache.needs_compaction());
        assert!(fill(&mut cache, 8).iter().all(Option::is_none));
        assert!(cache.needs_compaction());
        let event = cache.append_structural(8).unwrap().expect("compaction at budget");
        assert_eq!(event.step, 8);
        assert_eq!(event.before, vec![8; 4]);
        assert_eq!(event.after, vec![5; 4]);
        assert_eq!(event.freed, 12);
    }

    #[test]
    fn needs_compaction_below_budget() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        fill(&mut cache, 7);
        assert!(!cache.needs_compaction());
    }

    #[test]
    fn hand_enumerated_compaction() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        fill(&mut cache, 8);
        let event = cache.compact().unwrap();
        assert_eq!(event.freed, 12);
        assert_eq!(cache.retained_token_ids(0).unwrap(), vec![0, 1, 3, 5, 7]);
        assert_eq!(cache.retained_token_ids(2).unwrap(), vec![0, 2, 4, 6, 7]);
        // Layers disagree on absolute positions but each is contiguous
        // relative to its own slots.
        assert_ne!(
            cache.positions(0, PositionMode::AbsoluteOriginal).unwrap(),
            cache.positions(2, PositionMode::AbsoluteOriginal).unwrap()
        );
        assert_eq!(cache.positions(0, PositionMode::CacheRelative).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(cache.positions(0, PositionMode::None).unwrap(), vec![0; 5]);
    }

    #[test]
    fn fresh_cache_inspection() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        fill(&mut cache, 5);
        for layer in 0..4 {
            assert_eq!(cache.retained_token_ids(layer).unwrap(), vec![0, 1, 2, 3, 4]);
            assert_eq!(cache.positions(layer, PositionMode::AbsoluteOriginal).unwrap(), vec![0, 1, 2, 3, 4]);
        }
        assert!(matches!(cache.retained_token_ids(4), Err(Error::OutOfRange(_))));
        assert!(matches!(cache.positions(9, PositionMode::None), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn full_policy_exhausts() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Full, 0).unwrap();
        fill(&mut cache, 8);
        assert_eq!(
            cache.append_structural(8),
            Err(Error::BudgetExhausted { step: 8, budget: 8 })
        );
        assert_eq!(cache.step(), 8);
    }

    #[test]
    fn streaming_compaction_keeps_sinks_and_tail() {
        let cfg = LadderConfig {
            sinks: 4,
            ..small(8, 4, 0)
        };
        let mut cache = KvCache::new(cfg, PatternKind::Streaming, 0).unwrap();
        fill(&mut cache, 8);
        let event = cache.append_structural(8).unwrap().unwrap();
        assert_eq!(event.freed, 4);
        assert_eq!(cache.retained_token_ids(0).unwrap(), vec![0, 1, 2, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn empty_compaction_is_no_progress() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        assert!(matches!(cache.compact(), Err(Error::NoProgress(_))));
        // Only sinks and recent slots: nothing evictable.
        fill(&mut cache, 2);
        assert!(matches!(cache.compact(), Err(Error::NoProgress(_))));
        let mut full = KvCache::new(small(8, 1, 1), PatternKind::Full, 0).unwrap();
        fill(&mut full, 3);
        assert!(matches!(full.compact(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn append_errors() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 2).unwrap();
        let pairs = |w| vec![KvPair::new(vec![0.0; w], vec![0.0; w]); 4];
        assert_eq!(
            cache.append(1, pairs(2)),
            Err(Error::OutOfOrder { expected: 0, got: 1 })
        );
        assert!(matches!(cache.append(0, pairs(3)), Err(Error::Shape(_))));
        assert!(matches!(cache.append(0, pairs(2)[..3].to_vec()), Err(Error::Shape(_))));
        assert!(matches!(cache.append_structural(0), Err(Error::Shape(_))));
        assert_eq!(cache.append(0, pairs(2)), Ok(None));
        assert_eq!(cache.entries(0).unwrap()[0].key, vec![0.0, 0.0]);
    }

    #[test]
    fn second_compaction_remasks_old_entries() {
        let mut cache = KvCache::new(small(8, 1, 1), PatternKind::Ladder, 0).unwrap();
        fill(&mut cache, 11);
        assert_eq!(cache.n_compactions(), 1);
        // Layer 0 after the first compaction: [0,1,3,5,7] then 8..10 appended.
        assert_eq!(cache.retained_token_ids(0).unwrap(), vec![0, 1, 3, 5, 7, 8, 9, 10]);
        fill(&mut cache, 12);
        assert_eq!(cache.n_compactions(), 2);
        // Slots 1..6 are segments 0..5. At phase 1 the windows start at
        // layers 1, 3, 1, 3, .. so layer 0 keeps the odd segments.
        assert_eq!(cache.retained_token_ids(0).unwrap(), vec![0, 3, 7, 9, 10, 11]);
        let birth: Vec<usize> = cache.entries(0).unwrap().iter().map(|e| e.birth_compaction).collect();
        assert_eq!(birth, vec![0, 0, 0, 1, 1, 2]);
    }
}
