//! Brute-force reference for iterative compaction, written from the rule
//! alone: no library pattern code, one slot at a time.

#![allow(dead_code)]

use ladder_kv::LadderConfig;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Values `0..n` ordered by their bit-reversed binary representation.
fn bit_reversal_order(n: usize) -> Vec<usize> {
    let mut bits = 0;
    while (1usize << bits) < n {
        bits += 1;
    }
    let reverse = |v: usize| (0..bits).fold(0, |acc, b| acc | ((v >> b) & 1) << (bits - 1 - b));
    let mut values: Vec<usize> = (0..n).collect();
    values.sort_by_key(|&v| reverse(v));
    values
}

/// First layer of segment `j`'s window at compaction `k`.
pub fn window_start(cfg: &LadderConfig, j: usize, k: usize) -> usize {
    let l = cfg.layers;
    let d = cfg.span - cfg.overlap;
    let g = gcd(d, l);
    let mut start = j * d % l;
    if !cfg.span.is_multiple_of(g) {
        let period = j / (l / g);
        start += bit_reversal_order(g)[period % g];
    }
    (start + k) % l
}

pub fn keeps(cfg: &LadderConfig, layer: usize, slot: usize, n: usize, k: usize) -> bool {
    if slot < cfg.sinks || slot >= n - cfg.recent_exempt {
        return true;
    }
    let start = window_start(cfg, (slot - cfg.sinks) / cfg.segment_width, k);
    (layer + cfg.layers - start) % cfg.layers < cfg.span
}

/// Appends `steps` tokens to a ladder cache, compacting slot by slot when a
/// layer reaches the budget. Compaction `k` shifts every window `k` layers. Returns each layer's retained ids right after
/// every compaction, and the final contents.
pub fn replay(cfg: &LadderConfig, steps: usize) -> (Vec<Vec<Vec<usize>>>, Vec<Vec<usize>>) {
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); cfg.layers];
    let mut snapshots = Vec::new();
    for t in 0..steps {
        if layers.iter().any(|l| l.len() >= cfg.budget) {
            for (layer, ids) in layers.iter_mut().enumerate() {
                let n = ids.len();
                if n < cfg.sinks + cfg.recent_exempt {
                    continue;
                }
                let mut kept = Vec::new();
                for (slot, &id) in ids.iter().enumerate() {
                    if keeps(cfg, layer, slot, n, snapshots.len()) {
                        kept.push(id);
                    }
                }
                *ids = kept;
            }
            snapshots.push(layers.clone());
        }
        for ids in layers.iter_mut() {
            ids.push(t);
        }
    }
    (snapshots, layers)
}

/// Relative agreement within `1e-5`; components below `1e-9` in magnitude
/// are compared absolutely at `1e-9`.
pub fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            let diff = (x - y).abs();
            if y.abs() < 1e-9 {
                diff <= 1e-9
            } else {
                diff <= 1e-5 * y.abs()
            }
        })
}
