//! Deterministic toy attention decoder used to check compaction numerically.
//!
//! Each layer is rotary multi-head attention plus a residual connection.
//! Weights and token embeddings come from one SplitMix64 stream: weights in
//! layer-major order (then q, k, v, o, then row-major), followed by the
//! embeddings of tokens 0, 1, 2, ... Each weight is
//! `(u - 0.5) * 2 / sqrt(H * d_k)` and each embedding component `2u - 1`,
//! with `u = value / 2^64`.
//!
//! [`ToyModel::masked_full_decode`] runs the same computation over the
//! complete, never-evicted history and suppresses evicted entries with
//! `-inf` logits. Under absolute positions it must agree with
//! [`ToyModel::decode_step`] on the compacted cache.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::kvcache::KvCache;
pub use crate::kvcache::PositionMode;
pub use crate::rng::{splitmix64_next, SplitMix64};
use crate::rng::to_unit;

const ROPE_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub seed: u64,
    pub position_mode: PositionMode,
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 {
            return Err(Error::InvalidConfig("layers and heads must be at least 1".into()));
        }
        if self.head_dim < 2 || !self.head_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "head_dim {} must be even and at least 2",
                self.head_dim
            )));
        }
        Ok(())
    }

    /// Model width `H * d_k`; also the KV width of caches it decodes into.
    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerWeights {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    o: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    cfg: ToyModelConfig,
    layers: Vec<LayerWeights>,
    /// Stream index of the first embedding draw.
    embed_offset: u64,
}

/// Every KV entry ever produced, per layer, in token order.
#[derive(Debug, Clone, Default)]
pub struct FullHistory {
    layers: Vec<Vec<HistoryEntry>>,
    next_token: usize,
}

#[derive(Debug, Clone)]
struct HistoryEntry {
    token_id: usize,
    key: Vec<f64>,
    value: Vec<f64>,
}

/// `(layer, token_id)` pairs suppressed in the masked-full computation.
pub type EvictedSet = HashSet<(usize, usize)>;

impl FullHistory {
    pub fn new(layers: usize) -> Self {
        Self {
            layers: vec![Vec::new(); layers],
            next_token: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.next_token
    }

    pub fn is_empty(&self) -> bool {
        self.next_token == 0
    }

    /// Every history entry that `cache` no longer holds.
    pub fn evicted_relative_to(&self, cache: &KvCache) -> Result<EvictedSet> {
        let mut evicted = EvictedSet::new();
        for (layer, entries) in self.layers.iter().enumerate() {
            let kept: HashSet<usize> = cache.retained_token_ids(layer)?.into_iter().collect();
            evicted.extend(
                entries
                    .iter()
                    .filter(|e| !kept.contains(&e.token_id))
                    .map(|e| (layer, e.token_id)),
            );
        }
        Ok(evicted)
    }
}

pub fn build_model(cfg: ToyModelConfig) -> Result<ToyModel> {
    cfg.validate()?;
    let d = cfg.width();
    let scale = 2.0 / (d as f64).sqrt();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut matrix = || -> Vec<f64> { (0..d * d).map(|_| (rng.next_unit() - 0.5) * scale).collect() };
    let layers = (0..cfg.layers)
        .map(|_| LayerWeights {
            q: matrix(),
            k: matrix(),
            v: matrix(),
            o: matrix(),
        })
        .collect();
    Ok(ToyModel {
        cfg,
        layers,
        embed_offset: (cfg.layers * 4 * d * d) as u64,
    })
}

fn matvec(w: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks_exact(x.len())
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// In-place rotary encoding of every head of `v` at position `pos`.
fn rotate(v: &mut [f64], pos: usize, head_dim: usize) {
    let p = pos as f64;
    for head in v.chunks_exact_mut(head_dim) {
        for (i, pair) in head.chunks_exact_mut(2).enumerate() {
            let theta = p * ROPE_BASE.powf(-2.0 * i as f64 / head_dim as f64);
            let (sin, cos) = theta.sin_cos();
            let (a, b) = (pair[0], pair[1]);
            pair[0] = a * cos - b * sin;
            pair[1] = a * sin + b * cos;
        }
    }
}

/// Softmax in place. `-inf` logits get weight exactly zero; at least one
/// logit must be finite.
pub fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// One attended entry: its key, value, rotary position and whether it is live.
struct Attended<'a> {
    key: &'a [f64],
    value: &'a [f64],
    pos: usize,
    live: bool,
}

impl ToyModel {
    pub fn config(&self) -> &ToyModelConfig {
        &self.cfg
    }

    pub fn width(&self) -> usize {
        self.cfg.width()
    }

    /// First weight of layer 0's query matrix; handy for seed checks.
    pub fn first_weight(&self) -> f64 {
        self.layers[0].q[0]
    }

    /// Input embedding for `token_id`, drawn from the weight stream after
    /// all weights.
    pub fn embedding(&self, token_id: usize) -> Vec<f64> {
        let d = self.width();
        let base = self.embed_offset + (token_id * d) as u64;
        (0..d)
            .map(|i| 2.0 * to_unit(SplitMix64::value_at(self.cfg.seed, base + i as u64)) - 1.0)
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.width() {
            return Err(Error::Shape(format!(
                "input length {} with model width {}",
                x.len(),
                self.width()
            )));
        }
        Ok(())
    }

    /// Multi-head attention of `q` (already rotated) over `items`, then the
    /// output projection. Returns `W_o * concat(heads)`.
    fn attend(&self, layer: &LayerWeights, q: &[f64], items: &[Attended<'_>], rotary: bool) -> Vec<f64> {
        let dk = self.cfg.head_dim;
        let inv_sqrt = 1.0 / (dk as f64).sqrt();
        let keys: Vec<Vec<f64>> = items
            .iter()
            .map(|it| {
                let mut k = it.key.to_vec();
                if rotary {
                    rotate(&mut k, it.pos, dk);
                }
                k
            })
            .collect();
        let mut concat = vec![0.0; self.width()];
        let mut weights = vec![0.0; items.len()];
        for h in 0..self.cfg.heads {
            let range = h * dk..(h + 1) * dk;
            for ((w, key), it) in weights.iter_mut().zip(&keys).zip(items) {
                *w = if it.live {
                    q[range.clone()].iter().zip(&key[range.clone()]).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt
                } else {
                    f64::NEG_INFINITY
                };
            }
            softmax(&mut weights);
            debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let out = &mut concat[range.clone()];
            for (w, it) in weights.iter().zip(items) {
                for (o, v) in out.iter_mut().zip(&it.value[range.clone()]) {
                    *o += w * v;
                }
            }
        }
        matvec(&layer.o, &concat)
    }

    /// Decodes `token_id` against `cache`, appending this token's KV entries
    /// (compacting first if the cache is at budget). Returns the final
    /// residual stream.
    pub fn decode_step(&self, cache: &mut KvCache, x: &[f64], token_id: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if cache.num_layers() != self.cfg.layers {
            return Err(Error::Shape(format!(
                "cache has {} layers, model {}",
                cache.num_layers(),
                self.cfg.layers
            )));
        }
        if cache.kv_width() != self.width() {
            return Err(Error::Shape(format!(
                "cache kv width {} with model width {}",
                cache.kv_width(),
                self.width()
            )));
        }
        cache.begin_step(token_id)?;
        let mode = self.cfg.position_mode;
        let rotary = mode != PositionMode::None;
        let mut x = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut q = matvec(&layer.q, &x);
            cache.push_entry(l, matvec(&layer.k, &x), matvec(&layer.v, &x));
            let entries = cache.entries(l)?;
            let positions = cache.positions(l, mode)?;
            if rotary {
                rotate(&mut q, *positions.last().expect("entry just pushed"), self.cfg.head_dim);
            }
            let items: Vec<Attended<'_>> = entries
                .iter()
                .zip(&positions)
                .map(|(e, &pos)| Attended {
                    key: &e.key,
                    value: &e.value,
                    pos,
                    live: true,
                })
                .collect();
            let delta = self.attend(layer, &q, &items, rotary);
            x.iter_mut().zip(delta).for_each(|(a, d)| *a += d);
        }
        cache.finish_step();
        Ok(x)
    }

    /// Decodes `token_id` over the full history with `-inf` logits on the
    /// `evicted` entries. Appends this token's entries to `history`.
    /// Only absolute positions are supported.
    pub fn masked_full_decode(
        &self,
        history: &mut FullHistory,
        evicted: &EvictedSet,
        x: &[f64],
        token_id: usize,
    ) -> Result<Vec<f64>> {
        if self.cfg.position_mode != PositionMode::AbsoluteOriginal {
            return Err(Error::Unsupported(
                "masked-full decoding is only equivalent under absolute positions".into(),
            ));
        }
        self.check_input(x)?;
        if history.layers.len() != self.cfg.layers {
            return Err(Error::Shape(format!(
                "history has {} layers, model {}",
                history.layers.len(),
                self.cfg.layers
            )));
        }
        if token_id != history.next_token {
            return Err(Error::OutOfOrder {
                expected: history.next_token,
                got: token_id,
            });
        }
        if let Some(&(layer, tok)) = evicted.iter().find(|(l, t)| *l >= self.cfg.layers || *t >= token_id) {
            return Err(Error::OutOfRange(format!(
                "evicted entry ({layer}, {tok}) is not in the history"
            )));
        }
        let mut x = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut q = matvec(&layer.q, &x);
            history.layers[l].push(HistoryEntry {
                token_id,
                key: matvec(&layer.k, &x),
                value: matvec(&layer.v, &x),
            });
            rotate(&mut q, token_id, self.cfg.head_dim);
            let items: Vec<Attended<'_>> = history.layers[l]
                .iter()
                .map(|e| Attended {
                    key: &e.key,
                    value: &e.value,
                    pos: e.token_id,
                    live: !evicted.contains(&(l, e.token_id)),
                })
                .collect();
            let delta = self.attend(layer, &q, &items, true);
            x.iter_mut().zip(delta).for_each(|(a, d)| *a += d);
        }
        history.next_token += 1;
        Ok(x)
    }
}
