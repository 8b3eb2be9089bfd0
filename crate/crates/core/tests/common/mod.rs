//! Brute-force oracles and random instance generators shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use rand::Rng;
use scramble_forge::measures::CylinderMeasure;
use scramble_forge::shiftspace::{max_word_len, ShiftModel};

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Random mixing adjacency on 2..=max_nodes symbols (rejection sampled).
pub fn random_mixing_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> (Vec<Vec<bool>>, ShiftModel) {
    loop {
        let n = rng.gen_range(2..=max_nodes);
        let p: f64 = rng.gen_range(0.3..0.8);
        let adj: Vec<Vec<bool>> = (0..n).map(|_| (0..n).map(|_| rng.gen_bool(p)).collect()).collect();
        if let Ok(model) = ShiftModel::sft(adj.clone()) {
            return (adj, model);
        }
    }
}

pub fn random_rational<R: Rng>(rng: &mut R) -> BigRational {
    rat(rng.gen_range(-12..=12), rng.gen_range(1..=7))
}

/// Every simple cycle of the graph, each listed once (smallest node first).
pub fn simple_cycles(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn dfs(adj: &[Vec<bool>], start: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        for w in 0..adj.len() {
            if !adj[v][w] {
                continue;
            }
            if w == start {
                out.push(path.clone());
            } else if w > start && !on[w] {
                on[w] = true;
                path.push(w);
                dfs(adj, start, path, on, out);
                path.pop();
                on[w] = false;
            }
        }
    }
    let mut out = Vec::new();
    for s in 0..adj.len() {
        let mut on = vec![false; adj.len()];
        on[s] = true;
        dfs(adj, s, &mut vec![s], &mut on, &mut out);
    }
    out
}

/// (min, max) cycle mean of a depth-1 (node) or depth-2 (edge) weight
/// table indexed by word code, over all simple cycles.
pub fn brute_cycle_means(adj: &[Vec<bool>], depth: usize, values: &[BigRational]) -> (BigRational, BigRational) {
    let q = adj.len();
    let means: Vec<BigRational> = simple_cycles(adj)
        .into_iter()
        .map(|c| {
            let len = c.len();
            let total: BigRational = (0..len)
                .map(|i| match depth {
                    1 => values[c[i]].clone(),
                    2 => values[c[i] * q + c[(i + 1) % len]].clone(),
                    _ => unreachable!("oracle covers depth 1 and 2"),
                })
                .sum();
            total / BigRational::from_integer(BigInt::from(len))
        })
        .collect();
    let lo = means.iter().min().unwrap().clone();
    let hi = means.iter().max().unwrap().clone();
    (lo, hi)
}

/// All four densities by direct enumeration: tail n in
/// [max(ceil(H/2), w), H] and every window [i, j) of length at least w.
pub fn brute_density(horizon: u64, members: &[u64], w: u64) -> [Ratio<u64>; 4] {
    let h = horizon as usize;
    let mut hit = vec![false; h + 1];
    for &m in members {
        hit[m as usize] = true;
    }
    let mut prefix = vec![0u64; h + 1];
    for n in 1..=h {
        prefix[n] = prefix[n - 1] + hit[n] as u64;
    }
    let from = horizon.div_ceil(2).max(w) as usize;
    let tail: Vec<Ratio<u64>> = (from..=h).map(|n| Ratio::new(prefix[n], n as u64)).collect();
    let upper = *tail.iter().max().unwrap();
    let lower = *tail.iter().min().unwrap();
    let (mut best_hi, mut best_lo) = ((0u64, 1u64), (1u64, 1u64));
    for i in 0..h {
        for j in (i + w as usize)..=h {
            let (c, l) = (prefix[j] - prefix[i], (j - i) as u64);
            if c * best_hi.1 > best_hi.0 * l {
                best_hi = (c, l);
            }
            if c * best_lo.1 < best_lo.0 * l {
                best_lo = (c, l);
            }
        }
    }
    [upper, lower, Ratio::new(best_hi.0, best_hi.1), Ratio::new(best_lo.0, best_lo.1)]
}

/// Random index set in [1, H] drawn from one of several regimes.
pub fn random_index_set<R: Rng>(rng: &mut R, horizon: u64) -> Vec<u64> {
    match rng.gen_range(0..4) {
        0 => {
            let p: f64 = rng.gen_range(0.0..1.0);
            (1..=horizon).filter(|_| rng.gen_bool(p)).collect()
        }
        1 => {
            let period = rng.gen_range(1..40u64);
            let phase = rng.gen_range(0..period);
            (1..=horizon).filter(|n| n % period == phase).collect()
        }
        2 => {
            let mut out = Vec::new();
            let mut n = 1;
            let mut on = rng.gen_bool(0.5);
            while n <= horizon {
                let len = rng.gen_range(1..300u64);
                if on {
                    out.extend(n..(n + len).min(horizon + 1));
                }
                n += len;
                on = !on;
            }
            out
        }
        _ => {
            let k = rng.gen_range(0..6);
            (0..k).map(|_| rng.gen_range(1..=horizon)).collect()
        }
    }
}

/// Empirical measure of a random word over `q` symbols, at word length L.
pub fn random_measure<R: Rng>(rng: &mut R, q: u8, depth: usize) -> CylinderMeasure {
    let l = max_word_len(q, depth);
    let cells = (q as usize).pow(l as u32);
    let mut counts = vec![0u64; cells];
    let support = rng.gen_range(1..=cells.min(8));
    let mut n = 0;
    for _ in 0..support {
        let c = rng.gen_range(1..50);
        counts[rng.gen_range(0..cells)] += c;
        n += c;
    }
    CylinderMeasure::from_counts(q, l, &counts, n).unwrap()
}

/// Length-L prefix of a random point.
pub fn random_prefix<R: Rng>(rng: &mut R, q: u8, l: usize) -> Vec<u8> {
    (0..l).map(|_| rng.gen_range(0..q)).collect()
}

/// Empirical measure of the Dirac masses at the given prefixes.
pub fn dirac_average(q: u8, prefixes: &[&[u8]]) -> CylinderMeasure {
    let l = prefixes[0].len();
    let mut counts = vec![0u64; (q as usize).pow(l as u32)];
    for p in prefixes {
        let code = p.iter().fold(0usize, |r, &s| r * q as usize + s as usize);
        counts[code] += 1;
    }
    CylinderMeasure::from_counts(q, l, &counts, prefixes.len() as u64).unwrap()
}

/// An averaging instance: sequences (x_i), (y_i)
/// with pointwise distance below eps, and an index set J of deficiency
/// below delta.
pub struct AveragingInstance {
    pub q: u8,
    pub eps: f64,
    pub delta: f64,
    pub xs: Vec<Vec<u8>>,
    pub ys: Vec<Vec<u8>>,
    pub keep: Vec<usize>,
}

pub fn averaging_instance<R: Rng>(rng: &mut R, depth: usize) -> AveragingInstance {
    use scramble_forge::shiftspace::prefix_distance;
    let q = rng.gen_range(2..=3u8);
    let l = max_word_len(q, depth);
    let n = rng.gen_range(1..60usize);
    let eps: f64 = rng.gen_range(0.01..1.0);
    let delta: f64 = rng.gen_range(0.01..0.5);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    while xs.len() < n {
        let x = random_prefix(rng, q, l);
        let mut y = x.clone();
        let flips = rng.gen_range(0..=l);
        for _ in 0..flips {
            let at = rng.gen_range(0..l);
            y[at] = rng.gen_range(0..q);
        }
        if prefix_distance(q, depth, &x, &y) < eps {
            xs.push(x);
            ys.push(y);
        }
    }
    // largest number of drops keeping (n - |J|)/n < delta
    let max_drop = ((delta * n as f64).ceil() as usize).saturating_sub(1).min(n - 1);
    let drop = rng.gen_range(0..=max_drop);
    let mut keep: Vec<usize> = (0..n).collect();
    for _ in 0..drop {
        let at = rng.gen_range(0..keep.len());
        keep.remove(at);
    }
    AveragingInstance { q, eps, delta, xs, ys, keep }
}

impl AveragingInstance {
    pub fn deficiency(&self) -> f64 {
        (self.xs.len() - self.keep.len()) as f64 / self.xs.len() as f64
    }

    pub fn average_x(&self) -> CylinderMeasure {
        dirac_average(self.q, &self.xs.iter().map(Vec::as_slice).collect::<Vec<_>>())
    }

    pub fn average_y(&self) -> CylinderMeasure {
        dirac_average(self.q, &self.ys.iter().map(Vec::as_slice).collect::<Vec<_>>())
    }

    pub fn average_y_kept(&self) -> CylinderMeasure {
        dirac_average(self.q, &self.keep.iter().map(|&i| self.ys[i].as_slice()).collect::<Vec<_>>())
    }
}

/// Whether some suffix of `w` is lexicographically above the expansion
/// of 1 (zero padded when finite); None when the cached prefix is too short.
pub fn lex_breaks(one: &[u8], finite: bool, w: &[u8]) -> Option<bool> {
    for k in 0..w.len() {
        let s = &w[k..];
        if s.len() > one.len() && !finite {
            return None;
        }
        let mut padded = one.to_vec();
        padded.resize(padded.len().max(s.len()), 0);
        if s > &padded[..s.len()] {
            return Some(true);
        }
    }
    Some(false)
}

/// Word built digit by digit, each digit random when it keeps the word
/// admissible and 0 otherwise.
pub fn random_admissible<R: Rng>(rng: &mut R, beta: &scramble_forge::betashift::BetaParams, len: usize) -> Vec<u8> {
    let mut w = Vec::with_capacity(len);
    for _ in 0..len {
        w.push(rng.gen_range(0..=beta.max_digit()));
        if !beta.parry_admissible(&w).unwrap() {
            *w.last_mut().unwrap() = 0;
        }
    }
    w
}

pub const GOLDEN: f64 = 1.618_033_988_749_895;
