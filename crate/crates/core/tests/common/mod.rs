//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{HashMap, VecDeque};

use evpose::event::{Event, EventStream, Polarity, SensorGeometry};
use evpose::mask::BinaryMask;
use rand::Rng;

/// TORE volume recomputed from scratch: for every pixel and polarity, sort all
/// events at or before `tq` newest first and transform the first `k` ages.
pub fn tore_oracle(
    events: &[Event],
    g: SensorGeometry,
    k: usize,
    tau_us: u64,
    tq: u64,
) -> Vec<f32> {
    let mut by_slot: HashMap<(u16, u16, i8), Vec<u64>> = HashMap::new();
    for e in events.iter().filter(|e| e.t <= tq) {
        by_slot
            .entry((e.x, e.y, e.polarity.as_i8()))
            .or_default()
            .push(e.t);
    }
    let (w, h) = (g.width(), g.height());
    let mut out = vec![0f32; 2 * k * w * h];
    let ln_tau = (tau_us as f64).ln();
    for ((x, y, p), mut ts) in by_slot {
        ts.sort_unstable_by(|a, b| b.cmp(a));
        let pol = if p > 0 { 0 } else { 1 };
        for (depth, t) in ts.into_iter().take(k).enumerate() {
            let age = ((tq - t) as f64).max(1.0);
            let raw = 1.0 - age.ln() / ln_tau;
            let v = raw.clamp(0.0, 0.7) / 0.7;
            out[(pol * k + depth) * w * h + y as usize * w + x as usize] = v as f32;
        }
    }
    out
}

/// Random time-ordered stream.
pub fn random_stream<R: Rng>(
    rng: &mut R,
    g: SensorGeometry,
    n: usize,
    max_gap: u64,
) -> EventStream {
    let mut t = rng.random_range(0..1000);
    let events = (0..n)
        .map(|_| {
            t += rng.random_range(0..=max_gap);
            let p = if rng.random::<bool>() {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            Event::new(
                t,
                rng.random_range(0..g.width() as u16),
                rng.random_range(0..g.height() as u16),
                p,
            )
        })
        .collect();
    EventStream::new(g, events).unwrap()
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

pub fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

pub fn bce_oracle(t: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        let q = p[i].clamp(1e-7, 1.0 - 1e-7);
        s -= t[i] * q.ln() + (1.0 - t[i]) * (1.0 - q).ln();
    }
    s / t.len() as f64
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Sizes of 8-connected components via union-find.
pub fn component_sizes(bits: &[bool], w: usize, h: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..bits.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for i in 0..bits.len() {
        if bits[i] {
            let r = find(&mut parent, i);
            *sizes.entry(r).or_default() += 1;
        }
    }
    let mut v: Vec<usize> = sizes.into_values().collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Hand-written reuse scheduler: plans are per-offset score lists, only the newest is kept.
pub fn schedule_oracle(scores: &[f64], frames: usize, beta: f64) -> Vec<bool> {
    let mut out = Vec::new();
    let mut issued: Option<usize> = None;
    for k in 0..frames {
        let reuse = match issued {
            Some(p) => k - p < scores.len() && scores[k - p] >= beta,
            None => false,
        };
        if !reuse {
            issued = Some(k);
        }
        out.push(!reuse);
    }
    out
}

pub fn rect_mask(g: SensorGeometry, x0: usize, y0: usize, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(g, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
}

/// Flood-fill check that `bits` is exactly one 8-connected blob.
pub fn is_single_component(bits: &[bool], w: usize, h: usize) -> bool {
    let Some(start) = bits.iter().position(|&b| b) else {
        return false;
    };
    let mut seen = vec![false; bits.len()];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    let mut n = 0;
    while let Some(i) = q.pop_front() {
        n += 1;
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
    }
    n == bits.iter().filter(|&&b| b).count()
}
