//! Retention geometries: the ladder pattern, the streaming (sink + recent
//! window) baseline, the full cache, and seeded random patterns.
//!
//! Token slots past the `sinks` prefix are grouped into segments of
//! `segment_width` slots. Segment `j` is kept by a window of `span`
//! consecutive layers (cyclic in the layer index). Consecutive windows
//! advance by `step = span - overlap` layers, so neighbouring segments share
//! `overlap` layers and the pattern walks from shallow to deep layers before
//! wrapping around to start the next rung.
//!
//! Window starts live on the lattice of multiples of `g = gcd(step, layers)`.
//! When `g` divides `span` every layer is covered by exactly `span / g`
//! windows per lattice period. Otherwise the lattice is rotated by one
//! residue class per period, in van der Corput order, so that over `layers`
//! consecutive segments every layer is covered exactly `span` times and
//! every layer is also skipped by some segment (compaction always frees
//! space in every layer).

mod mask;

pub use mask::{BitRow, RetentionMask};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::SplitMix64;

/// Geometry of a ladder retention pattern and the cache budget it runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LadderConfig {
    /// Decoder layers `L`.
    pub layers: usize,
    /// Layers that keep each segment (`S`).
    pub span: usize,
    /// Layers shared by consecutive segments (`O`).
    pub overlap: usize,
    /// Token slots per segment (`W`).
    pub segment_width: usize,
    /// Leading slots kept by every layer (`A`).
    pub sinks: usize,
    /// Trailing slots kept by every layer (`R`).
    pub recent_exempt: usize,
    /// Maximum slots per layer (`B`).
    pub budget: usize,
}

pub const DEFAULT_SEGMENT_WIDTH: usize = 16;
pub const DEFAULT_SINKS: usize = 4;

impl Default for LadderConfig {
    fn default() -> Self {
        Self::for_language_modeling(32, 512)
    }
}

impl LadderConfig {
    /// Language-modeling defaults: span is a quarter of the layers and the
    /// overlap half the span.
    pub fn for_language_modeling(layers: usize, budget: usize) -> Self {
        let span = (layers / 4).max(1);
        Self {
            layers,
            span,
            overlap: span / 2,
            segment_width: DEFAULT_SEGMENT_WIDTH,
            sinks: DEFAULT_SINKS,
            recent_exempt: DEFAULT_SEGMENT_WIDTH,
            budget,
        }
    }

    /// Long-context-understanding defaults: span is the layer count times the
    /// overall compression ratio, rounded, so every position is compressed
    /// by roughly the same ratio.
    pub fn for_compression_ratio(layers: usize, ratio: f64, budget: usize) -> Self {
        let span = ((layers as f64 * ratio).round() as usize).clamp(1, layers.max(1));
        Self {
            span,
            overlap: span / 2,
            ..Self::for_language_modeling(layers, budget)
        }
    }

    /// Checks the geometry invariants. Analysis-only uses (materializing,
    /// coverage) accept `span == layers`.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.span == 0 || self.span > self.layers {
            return bad(format!("span {} must lie in 1..={}", self.span, self.layers));
        }
        if self.overlap >= self.span {
            return bad(format!("overlap {} must be below span {}", self.overlap, self.span));
        }
        if self.segment_width == 0 {
            return bad("segment_width must be at least 1".into());
        }
        let floor = self.sinks + self.recent_exempt + self.segment_width;
        if self.budget < floor {
            return bad(format!(
                "budget {} is below sinks + recent_exempt + segment_width = {floor}",
                self.budget
            ));
        }
        Ok(())
    }

    /// Additional requirement when the ladder drives eviction: a full-span
    /// ladder keeps everything, so compaction could never free space.
    pub fn validate_for_eviction(&self) -> Result<()> {
        self.validate()?;
        if self.span >= self.layers {
            return Err(Error::NoProgress(format!(
                "span {} covers all {} layers",
                self.span, self.layers
            )));
        }
        Ok(())
    }

    /// Layers between the starts of consecutive segment windows (`S - O`).
    pub fn step(&self) -> usize {
        self.span - self.overlap
    }

    /// Spacing of the window-start lattice, `gcd(step, layers)`.
    pub fn lattice(&self) -> usize {
        gcd(self.step(), self.layers)
    }

    /// Segments whose starts repeat before any rotation (`layers / lattice`).
    pub fn lattice_period(&self) -> usize {
        self.layers / self.lattice()
    }

    /// Whether window starts rotate between lattice periods.
    pub fn rotates(&self) -> bool {
        !self.span.is_multiple_of(self.lattice())
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The `index`-th element of the van der Corput order of `0..n`
/// (bit-reversed counting, skipping values `>= n`).
fn van_der_corput(index: usize, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let bits = usize::BITS - (n - 1).leading_zeros();
    let mut seen = 0;
    for i in 0..(1usize << bits) {
        let rev = i.reverse_bits() >> (usize::BITS - bits);
        if rev < n {
            if seen == index % n {
                return rev;
            }
            seen += 1;
        }
    }
    unreachable!("van der Corput order covers 0..n")
}

/// Cyclic interval of layers `start, start+1, .., start+len-1 (mod layers)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerWindow {
    pub start: usize,
    pub len: usize,
    pub layers: usize,
}

impl LayerWindow {
    #[inline]
    pub fn contains(&self, layer: usize) -> bool {
        layer < self.layers && (layer + self.layers - self.start) % self.layers < self.len
    }

    /// Exclusive end in unwrapped coordinates; exceeds `layers` when the
    /// window wraps to the shallow layers.
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn wraps(&self) -> bool {
        self.end() > self.layers
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |i| (self.start + i) % self.layers)
    }
}

/// Layer window of segment `j`. Total on valid configurations.
pub fn segment_window(j: usize, cfg: &LadderConfig) -> LayerWindow {
    segment_window_at(j, cfg, 0)
}

/// Layer window of segment `j` with the whole ladder shifted `phase` layers
/// deeper. Iterative compaction advances the phase by one layer per
/// compaction so that the oldest slots do not meet the same windows forever.
pub fn segment_window_at(j: usize, cfg: &LadderConfig, phase: usize) -> LayerWindow {
    let layers = cfg.layers;
    let mut start = (j % layers) * cfg.step() % layers;
    if cfg.rotates() {
        let g = cfg.lattice();
        let period = j / cfg.lattice_period();
        start += van_der_corput(period % g, g);
    }
    LayerWindow {
        start: (start + phase) % layers,
        len: cfg.span,
        layers,
    }
}

fn check_geometry(cfg: &LadderConfig, n_slots: usize) -> Result<()> {
    cfg.validate()?;
    if n_slots < cfg.sinks + cfg.recent_exempt {
        return Err(Error::InvalidGeometry(format!(
            "{n_slots} slots cannot hold {} sinks and {} recent slots",
            cfg.sinks, cfg.recent_exempt
        )));
    }
    Ok(())
}

/// Whether `layer` keeps `slot` in an `n_slots`-slot ladder grid.
pub fn is_retained(cfg: &LadderConfig, layer: usize, slot: usize, n_slots: usize) -> Result<bool> {
    cfg.validate()?;
    if layer >= cfg.layers {
        return Err(Error::OutOfRange(format!(
            "layer {layer} with {} layers",
            cfg.layers
        )));
    }
    if slot >= n_slots {
        return Err(Error::OutOfRange(format!("slot {slot} with {n_slots} slots")));
    }
    Ok(retained_unchecked(cfg, layer, slot, n_slots))
}

#[inline]
pub(crate) fn retained_unchecked(cfg: &LadderConfig, layer: usize, slot: usize, n_slots: usize) -> bool {
    if slot < cfg.sinks || slot + cfg.recent_exempt >= n_slots {
        return true;
    }
    segment_window((slot - cfg.sinks) / cfg.segment_width, cfg).contains(layer)
}

/// Per-segment windows for the ladder body of an `n_slots` grid.
fn body_windows(cfg: &LadderConfig, n_slots: usize, phase: usize) -> Vec<LayerWindow> {
    let body = n_slots.saturating_sub(cfg.sinks + cfg.recent_exempt);
    (0..body.div_ceil(cfg.segment_width))
        .map(|j| segment_window_at(j, cfg, phase))
        .collect()
}

fn ladder_row_from(cfg: &LadderConfig, windows: &[LayerWindow], layer: usize, n_slots: usize) -> BitRow {
    let mut row = BitRow::new(n_slots);
    let body_end = n_slots - cfg.recent_exempt;
    row.set_range(0, cfg.sinks);
    row.set_range(body_end, n_slots);
    for (j, window) in windows.iter().enumerate() {
        if window.contains(layer) {
            let start = cfg.sinks + j * cfg.segment_width;
            row.set_range(start, (start + cfg.segment_width).min(body_end));
        }
    }
    row
}

/// One layer's ladder row at `phase`; used by compaction, which only needs
/// the row of the layer it is compacting.
pub(crate) fn ladder_row(cfg: &LadderConfig, layer: usize, n_slots: usize, phase: usize) -> BitRow {
    ladder_row_from(cfg, &body_windows(cfg, n_slots, phase), layer, n_slots)
}

/// Selects one of the retention geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    Full,
    Streaming,
    Ladder,
    Random(u64),
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternKind::Full => f.write_str("full"),
            PatternKind::Streaming => f.write_str("streaming"),
            PatternKind::Ladder => f.write_str("ladder"),
            PatternKind::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    /// Accepts `full`, `streaming`, `ladder`, `random` and `random:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "full" => Ok(PatternKind::Full),
            "streaming" => Ok(PatternKind::Streaming),
            "ladder" => Ok(PatternKind::Ladder),
            "random" => Ok(PatternKind::Random(0)),
            other => other
                .strip_prefix("random:")
                .and_then(|seed| seed.parse().ok())
                .map(PatternKind::Random)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}`"))),
        }
    }
}

pub fn materialize(kind: PatternKind, cfg: &LadderConfig, n_slots: usize) -> Result<RetentionMask> {
    materialize_with(Execution::Sequential, kind, cfg, n_slots)
}

/// Materializes `kind` over `n_slots` slots, computing layer rows under `exec`.
///
/// `Random(seed)` samples at the ladder's own density `span / layers`.
pub fn materialize_with(
    exec: Execution,
    kind: PatternKind,
    cfg: &LadderConfig,
    n_slots: usize,
) -> Result<RetentionMask> {
    check_geometry(cfg, n_slots)?;
    let layers = cfg.layers;
    let mask = match kind {
        PatternKind::Full => RetentionMask::full(layers, n_slots),
        PatternKind::Streaming => {
            let mut row = BitRow::new(n_slots);
            row.set_range(0, cfg.sinks);
            let window = cfg.budget - cfg.sinks;
            row.set_range(n_slots.saturating_sub(window), n_slots);
            RetentionMask::from_rows(n_slots, vec![row; layers])
        }
        PatternKind::Ladder => {
            let windows = body_windows(cfg, n_slots, 0);
            let rows = exec.map_range(layers, |l| ladder_row_from(cfg, &windows, l, n_slots));
            RetentionMask::from_rows(n_slots, rows)
        }
        PatternKind::Random(seed) => {
            let ratio = cfg.span as f64 / cfg.layers as f64;
            return random_pattern_with(exec, seed, cfg, n_slots, ratio);
        }
    };
    Ok(mask)
}

pub fn random_pattern(seed: u64, cfg: &LadderConfig, n_slots: usize, ratio: f64) -> Result<RetentionMask> {
    random_pattern_with(Execution::Sequential, seed, cfg, n_slots, ratio)
}

/// Random pattern: every layer keeps the sinks and the recent slots, plus
/// `floor(body * ratio / W)` distinct width-W segments of the body drawn
/// uniformly without replacement. Layer `l` draws from the SplitMix64
/// stream seeded with output `l` of the stream seeded with `seed`.
pub fn random_pattern_with(
    exec: Execution,
    seed: u64,
    cfg: &LadderConfig,
    n_slots: usize,
    ratio: f64,
) -> Result<RetentionMask> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!("ratio {ratio} must lie in (0, 1]")));
    }
    check_geometry(cfg, n_slots)?;
    let w = cfg.segment_width;
    let body_end = n_slots - cfg.recent_exempt;
    let body = body_end - cfg.sinks;
    let pool = body.div_ceil(w);
    let picks = if ratio >= 1.0 {
        pool
    } else {
        ((body as f64 * ratio / w as f64).floor() as usize).min(pool)
    };
    let rows = exec.map_range(cfg.layers, |layer| {
        let mut rng = SplitMix64::new(SplitMix64::value_at(seed, layer as u64));
        let mut order: Vec<usize> = (0..pool).collect();
        let mut row = BitRow::new(n_slots);
        row.set_range(0, cfg.sinks);
        row.set_range(body_end, n_slots);
        for i in 0..picks {
            let j = i + rng.next_below(pool - i);
            order.swap(i, j);
            let start = cfg.sinks + order[i] * w;
            row.set_range(start, (start + w).min(body_end));
        }
        row
    });
    Ok(RetentionMask::from_rows(n_slots, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(layers: usize, span: usize, overlap: usize, w: usize, sinks: usize, recent: usize) -> LadderConfig {
        LadderConfig {
            layers,
            span,
            overlap,
            segment_width: w,
            sinks,
            recent_exempt: recent,
            budget: 1 << 20,
        }
    }

    fn layers_of(win: LayerWindow) -> Vec<usize> {
        let mut v: Vec<usize> = win.iter().collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn first_segment_is_base_window() {
        for (l, s, o) in [(8, 4, 1), (32, 8, 4), (4, 2, 0), (16, 11, 3)] {
            let w = segment_window(0, &cfg(l, s, o, 1, 0, 0));
            assert_eq!(layers_of(w), (0..s).collect::<Vec<_>>());
        }
    }

    #[test]
    fn window_examples() {
        // L=8, S=4, O=1: starts walk 0, 3, 6, 1, ... (step 3, lattice 1).
        let c = cfg(8, 4, 1, 1, 0, 0);
        assert_eq!(layers_of(segment_window(3, &c)), vec![1, 2, 3, 4]);
        let w2 = segment_window(2, &c);
        assert!(w2.wraps());
        assert_eq!(layers_of(w2), vec![0, 1, 6, 7]);
        // L=8, S=4, O=2, j=5: start 10 mod 8 = 2.
        assert_eq!(layers_of(segment_window(5, &cfg(8, 4, 2, 1, 0, 0))), vec![2, 3, 4, 5]);
    }

    #[test]
    fn rotation_visits_every_start() {
        // L=8, S=7, O=3: step 4, lattice {0,4}; 7 is not a multiple of 4 so
        // the lattice rotates and all eight starts appear within 8 segments.
        let c = cfg(8, 7, 3, 1, 0, 0);
        assert!(c.rotates());
        let mut starts: Vec<usize> = (0..8).map(|j| segment_window(j, &c).start).collect();
        starts.sort_unstable();
        assert_eq!(starts, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn van_der_corput_is_permutation() {
        for n in 1..40 {
            let mut v: Vec<usize> = (0..n).map(|i| van_der_corput(i, n)).collect();
            v.sort_unstable();
            assert_eq!(v, (0..n).collect::<Vec<_>>());
        }
        assert_eq!((0..4).map(|i| van_der_corput(i, 4)).collect::<Vec<_>>(), vec![0, 2, 1, 3]);
    }

    #[test]
    fn sink_always_retained() {
        let c = cfg(4, 2, 0, 1, 1, 0);
        for layer in 0..4 {
            assert!(is_retained(&c, layer, 0, 10).unwrap());
        }
    }

    #[test]
    fn hand_enumerated_ladder() {
        let c = cfg(4, 2, 0, 1, 0, 0);
        let keep = |layer| {
            (0..6)
                .filter(|&s| is_retained(&c, layer, s, 6).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(keep(0), vec![0, 2, 4]);
        assert_eq!(keep(1), vec![0, 2, 4]);
        assert_eq!(keep(2), vec![1, 3, 5]);
        assert_eq!(keep(3), vec![1, 3, 5]);
    }

    #[test]
    fn full_span_retains_everything() {
        let c = cfg(5, 5, 0, 2, 0, 0);
        for l in 0..5 {
            for s in 0..20 {
                assert!(is_retained(&c, l, s, 20).unwrap());
            }
        }
        assert_eq!(materialize(PatternKind::Ladder, &c, 20).unwrap(), RetentionMask::full(5, 20));
    }

    #[test]
    fn out_of_range_is_usage_error() {
        let c = cfg(4, 2, 0, 1, 0, 0);
        assert!(matches!(is_retained(&c, 4, 0, 6), Err(Error::OutOfRange(_))));
        assert!(matches!(is_retained(&c, 0, 6, 6), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn materialize_examples() {
        let mut c = cfg(4, 2, 0, 1, 0, 0);
        assert_eq!(materialize(PatternKind::Full, &c, 10).unwrap().total_cells(), 40);

        let ladder = materialize(PatternKind::Ladder, &c, 6).unwrap();
        assert_eq!(ladder.layer_popcounts(), vec![3; 4]);

        c.budget = 8;
        c.sinks = 4;
        let streaming = materialize(PatternKind::Streaming, &c, 20).unwrap();
        for l in 0..4 {
            assert_eq!(streaming.row(l).iter_ones().collect::<Vec<_>>(), vec![0, 1, 2, 3, 16, 17, 18, 19]);
        }
    }

    #[test]
    fn geometry_error_when_exemptions_overflow() {
        let c = cfg(4, 2, 0, 1, 3, 3);
        assert!(matches!(
            materialize(PatternKind::Ladder, &c, 5),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(cfg(4, 0, 0, 1, 0, 0).validate().is_err());
        assert!(cfg(4, 5, 0, 1, 0, 0).validate().is_err());
        assert!(cfg(4, 2, 2, 1, 0, 0).validate().is_err());
        assert!(cfg(4, 2, 0, 0, 0, 0).validate().is_err());
        let mut tight = cfg(4, 2, 0, 4, 2, 2);
        tight.budget = 7;
        assert!(tight.validate().is_err());
        tight.budget = 8;
        assert!(tight.validate().is_ok());
        assert!(cfg(4, 4, 0, 1, 0, 0).validate_for_eviction().is_err());
    }

    #[test]
    fn default_rules() {
        let c = LadderConfig::for_language_modeling(32, 512);
        assert_eq!((c.span, c.overlap), (8, 4));
        let c = LadderConfig::for_compression_ratio(32, 0.5, 512);
        assert_eq!(c.span, 16);
        assert!(LadderConfig::default().validate_for_eviction().is_ok());
    }

    #[test]
    fn random_full_ratio_is_full() {
        let c = cfg(4, 2, 0, 4, 2, 2);
        let m = random_pattern(3, &c, 4 + 4 * 6, 1.0).unwrap();
        assert_eq!(m, RetentionMask::full(4, 28));
    }

    #[test]
    fn random_deterministic_per_seed() {
        let c = cfg(4, 2, 0, 2, 0, 0);
        let a = random_pattern(7, &c, 16, 0.5).unwrap();
        assert_eq!(a, random_pattern(7, &c, 16, 0.5).unwrap());
        assert_ne!(a, random_pattern(8, &c, 16, 0.5).unwrap());
    }

    #[test]
    fn random_popcount_forced() {
        let c = cfg(4, 2, 0, 1, 0, 0);
        let m = random_pattern(11, &c, 8, 0.5).unwrap();
        assert_eq!(m.layer_popcounts(), vec![4; 4]);
    }

    #[test]
    fn random_rejects_bad_ratio() {
        let c = cfg(4, 2, 0, 1, 0, 0);
        assert!(random_pattern(1, &c, 8, 0.0).is_err());
        assert!(random_pattern(1, &c, 8, 1.5).is_err());
        // Too small to yield a segment: sinks and exemptions only.
        let c = cfg(4, 2, 0, 4, 1, 1);
        assert_eq!(random_pattern(1, &c, 6, 0.1).unwrap().layer_popcounts(), vec![2; 4]);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("Ladder".parse::<PatternKind>().unwrap(), PatternKind::Ladder);
        assert_eq!("random:9".parse::<PatternKind>().unwrap(), PatternKind::Random(9));
        assert!("lru".parse::<PatternKind>().is_err());
        assert_eq!(PatternKind::Random(9).to_string(), "random:9");
    }

    fn geometry() -> impl Strategy<Value = (usize, usize, usize)> {
        (2usize..=16).prop_flat_map(|l| (Just(l), 1..l)).prop_flat_map(|(l, s)| (Just(l), Just(s), 0..s))
    }

    proptest! {
        #[test]
        fn windows_span_exactly_s((l, s, o) in geometry(), j in 0usize..200) {
            let c = cfg(l, s, o, 1, 0, 0);
            let w = segment_window(j, &c);
            prop_assert_eq!(w.len, s);
            prop_assert_eq!((0..l).filter(|&x| w.contains(x)).count(), s);
        }

        #[test]
        fn materialize_agrees_with_predicate((l, s, o) in geometry(), w in 1usize..5,
                                             a in 0usize..3, r in 0usize..4, extra in 0usize..60) {
            let c = cfg(l, s, o, w, a, r);
            let n = a + r + extra;
            let m = materialize(PatternKind::Ladder, &c, n).unwrap();
            for layer in 0..l {
                for slot in 0..n {
                    prop_assert_eq!(m.get(layer, slot), is_retained(&c, layer, slot, n).unwrap());
                }
            }
        }

        #[test]
        fn appending_keeps_earlier_decisions((l, s, o) in geometry(), w in 1usize..5,
                                             a in 0usize..3, r in 0usize..4, extra in 0usize..60) {
            let c = cfg(l, s, o, w, a, r);
            let n = a + r + extra;
            let before = materialize(PatternKind::Ladder, &c, n).unwrap();
            let after = materialize(PatternKind::Ladder, &c, n + w).unwrap();
            for layer in 0..l {
                for slot in 0..n - r {
                    prop_assert_eq!(before.get(layer, slot), after.get(layer, slot));
                }
            }
        }

        #[test]
        fn streaming_popcount_is_min_n_b(budget in 3usize..40, sinks in 0usize..3, n in 3usize..100) {
            let mut c = cfg(3, 1, 0, 1, sinks, 0);
            c.budget = budget.max(sinks + 1);
            let m = materialize(PatternKind::Streaming, &c, n.max(sinks)).unwrap();
            for layer in 0..3 {
                prop_assert_eq!(m.layer_popcount(layer), n.max(sinks).min(c.budget));
            }
        }

        #[test]
        fn parallel_rows_match_sequential((l, s, o) in geometry(), n in 0usize..300) {
            let c = cfg(l, s, o, 3, 0, 0);
            prop_assert_eq!(
                materialize_with(Execution::Parallel, PatternKind::Ladder, &c, n).unwrap(),
                materialize_with(Execution::Sequential, PatternKind::Ladder, &c, n).unwrap()
            );
        }
    }

    /// Brute-force coverage law and equal-coverage check over every
    /// geometry with L <= 16, using the window layers enumerated directly.
    #[test]
    fn coverage_law_all_small_geometries() {
        for l in 2..=16 {
            for s in 1..l {
                for o in 0..s {
                    let w = 3;
                    let c = cfg(l, s, o, w, 0, 0);
                    let unit = w * l / c.lattice();
                    for k in 1..=2 * c.lattice() + 1 {
                        let n = k * unit;
                        let counts = materialize(PatternKind::Ladder, &c, n).unwrap().layer_popcounts();
                        let expect = (n * s) as f64 / l as f64;
                        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
                        assert!(
                            (lo as f64 - expect).abs() <= (2 * w) as f64
                                && (hi as f64 - expect).abs() <= (2 * w) as f64
                                && hi - lo <= 2 * w,
                            "L={l} S={s} O={o} n={n}: counts {lo}..{hi}, expected {expect}"
                        );
                    }
                }
            }
        }
    }
}
