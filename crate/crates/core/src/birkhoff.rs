//! Birkhoff averages of locally constant observables, the interval of
//! invariant-measure integrals via mean-cycle optimization, and oscillation
//! statistics of average traces.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{parse_ratio, ratio_to_f64, ser_ratio, CylinderMeasure};
use crate::shiftspace::{LazyPoint, ShiftModel, SymbolWord};

/// Maximal number of m-block nodes handled by the mean-cycle solver.
pub const MAX_GRAPH_NODES: usize = 1024;

/// φ(x) = values[x_0 … x_{m−1}].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObservable {
    q: u8,
    depth: usize,
    values: Vec<BigRational>,
    scaled: Vec<i128>,
    denom: i128,
}

fn encode(q: u8, w: &[u8]) -> usize {
    w.iter().fold(0usize, |c, &s| c * q as usize + s as usize)
}

fn decode(q: u8, m: usize, mut c: usize) -> Vec<u8> {
    let mut w = vec![0u8; m];
    for slot in w.iter_mut().rev() {
        *slot = (c % q as usize) as u8;
        c /= q as usize;
    }
    w
}

impl LocalObservable {
    /// Values for length-m words given by code; missing codes are zero.
    pub fn new(q: u8, depth: usize, values: Vec<BigRational>) -> Result<Self> {
        if depth == 0 || (q as usize).checked_pow(depth as u32) != Some(values.len()) {
            return Err(Error::InvalidParameter("observable needs one value per length-m word".into()));
        }
        let mut denom = BigInt::one();
        for v in &values {
            denom = denom.lcm(v.denom());
        }
        let to_i128 = |b: BigInt| b.to_i128().ok_or_else(|| Error::InvalidParameter("observable values too large".into()));
        let scaled = values
            .iter()
            .map(|v| to_i128(v.numer() * (&denom / v.denom())))
            .collect::<Result<Vec<_>>>()?;
        let denom = to_i128(denom)?;
        Ok(Self { q, depth, values, scaled, denom })
    }

    /// Builds from a word map; every admissible length-m word must be listed.
    pub fn from_map(model: &ShiftModel, depth: usize, map: &BTreeMap<SymbolWord, BigRational>) -> Result<Self> {
        let q = model.q();
        let n = (q as usize)
            .checked_pow(depth as u32)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::InvalidParameter(format!("observable depth {depth} too large")))?;
        let mut values = vec![BigRational::zero(); n];
        let mut seen = vec![false; n];
        for (w, v) in map {
            w.check_alphabet(q)?;
            if w.len() != depth {
                return Err(Error::InvalidParameter(format!("word {w} has length {} not {depth}", w.len())));
            }
            let c = encode(q, w.symbols());
            values[c] = v.clone();
            seen[c] = true;
        }
        for (c, s) in seen.iter().enumerate() {
            let w = SymbolWord::new(decode(q, depth, c));
            if !s && model.word_admissible(&w)? {
                return Err(Error::InvalidParameter(format!("observable misses admissible word {w}")));
            }
        }
        Self::new(q, depth, values)
    }

    /// φ(x) = x_0.
    pub fn first_coordinate(q: u8) -> Self {
        Self::new(q, 1, (0..q).map(|s| BigRational::from_integer(s.into())).collect()).expect("valid")
    }

    /// Indicator of the cylinder [w].
    pub fn cylinder_indicator(q: u8, w: &SymbolWord) -> Result<Self> {
        w.check_alphabet(q)?;
        let mut values = vec![BigRational::zero(); (q as usize).pow(w.len() as u32)];
        values[encode(q, w.symbols())] = BigRational::one();
        Self::new(q, w.len(), values)
    }

    pub fn constant(q: u8, c: BigRational) -> Self {
        Self::new(q, 1, vec![c; q as usize]).expect("valid")
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn value(&self, w: &[u8]) -> &BigRational {
        &self.values[encode(self.q, w)]
    }

    pub fn min_value(&self) -> &BigRational {
        self.values.iter().min().expect("nonempty")
    }

    pub fn max_value(&self) -> &BigRational {
        self.values.iter().max().expect("nonempty")
    }

    /// ⟨φ, μ⟩ for a measure of depth ≥ m.
    pub fn integrate(&self, mu: &CylinderMeasure) -> Result<BigRational> {
        let mut total = BigRational::zero();
        for (c, v) in self.values.iter().enumerate() {
            if !v.is_zero() {
                total += v * mu.weight(&SymbolWord::new(decode(self.q, self.depth, c)))?;
            }
        }
        Ok(total)
    }

    pub fn to_file(&self) -> ObservableFile {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(c, v)| (SymbolWord::new(decode(self.q, self.depth, c)).to_string(), v.to_string()))
            .collect();
        ObservableFile { q: Some(self.q), depth: self.depth, values }
    }

    pub fn from_file(model: &ShiftModel, file: &ObservableFile) -> Result<Self> {
        if let Some(q) = file.q {
            if q != model.q() {
                return Err(Error::AlphabetMismatch(q, model.q()));
            }
        }
        let map = file
            .values
            .iter()
            .map(|(w, v)| Ok((SymbolWord::parse(w)?, parse_ratio(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::from_map(model, file.depth, &map)
    }
}

/// JSON form `{"depth":m,"values":{"01":"1",…}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u8>,
    pub depth: usize,
    pub values: BTreeMap<String, String>,
}

fn check_q(x: &LazyPoint, phi: &LocalObservable) -> Result<()> {
    if x.q() != phi.q {
        return Err(Error::AlphabetMismatch(x.q(), phi.q));
    }
    Ok(())
}

/// Scaled sums Σ_{i<n} φ(f^i x)·denom at each ascending checkpoint n.
pub fn birkhoff_sums(x: &LazyPoint, phi: &LocalObservable, checkpoints: &[u64]) -> Result<Vec<i128>> {
    check_q(x, phi)?;
    if checkpoints.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::InvalidParameter("checkpoints must be ascending".into()));
    }
    let Some(&last) = checkpoints.last() else { return Ok(Vec::new()) };
    let pieces = x.window_pieces(phi.depth, 0, last)?;
    let mut prefix_cache: HashMap<usize, Arc<Vec<i128>>> = HashMap::new();
    let overflow = || Error::InvalidParameter("Birkhoff sum overflows i128".into());
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc: i128 = 0;
    let mut pi = 0;
    let mut pos = 0u64;
    for &cp in checkpoints {
        while pos < cp {
            let piece = &pieces[pi];
            let end = piece.start + piece.len;
            let stop = end.min(cp);
            let prefix = prefix_cache
                .entry(Arc::as_ptr(&piece.codes) as *const u32 as usize)
                .or_insert_with(|| {
                    let mut p = Vec::with_capacity(piece.codes.len() + 1);
                    p.push(0i128);
                    for &c in piece.codes.iter() {
                        p.push(p.last().unwrap() + phi.scaled[c as usize]);
                    }
                    Arc::new(p)
                })
                .clone();
            let p = piece.codes.len() as u64;
            let count = stop - pos;
            let o = ((piece.phase as u64 + (pos - piece.start) % p) % p) as usize;
            let full = (count / p) as i128;
            let r = (count % p) as usize;
            let cyc = prefix[p as usize];
            let part = if o + r <= p as usize {
                prefix[o + r] - prefix[o]
            } else {
                (cyc - prefix[o]) + prefix[o + r - p as usize]
            };
            acc = full
                .checked_mul(cyc)
                .and_then(|v| v.checked_add(part))
                .and_then(|v| v.checked_add(acc))
                .ok_or_else(overflow)?;
            pos = stop;
            if stop == end {
                pi += 1;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// (1/n) Σ_{i<n} φ(f^i x), exact.
pub fn birkhoff_average(x: &LazyPoint, phi: &LocalObservable, n: u64) -> Result<BigRational> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let s = birkhoff_sums(x, phi, &[n])?[0];
    Ok(BigRational::new(BigInt::from(s), BigInt::from(phi.denom) * BigInt::from(n)))
}

/// Partial averages A_j on a grid of j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageTrace {
    pub horizon: u64,
    pub samples: Vec<(u64, f64)>,
    #[serde(skip)]
    pub exact: Vec<BigRational>,
}

impl AverageTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,A_n\n");
        for (n, a) in &self.samples {
            out.push_str(&format!("{n},{a}\n"));
        }
        out
    }
}

pub fn average_trace(x: &LazyPoint, phi: &LocalObservable, grid: &[u64]) -> Result<AverageTrace> {
    if grid.first() == Some(&0) {
        return Err(Error::InvalidParameter("grid points must be positive".into()));
    }
    let sums = birkhoff_sums(x, phi, grid)?;
    let exact: Vec<BigRational> = sums
        .iter()
        .zip(grid)
        .map(|(&s, &n)| BigRational::new(BigInt::from(s), BigInt::from(phi.denom) * BigInt::from(n)))
        .collect();
    Ok(AverageTrace {
        horizon: grid.last().copied().unwrap_or(0),
        samples: grid.iter().zip(&exact).map(|(&n, a)| (n, ratio_to_f64(a))).collect(),
        exact,
    })
}

/// Sample grid for the tail [from, to]: evenly spaced points plus the
/// boundaries of window pieces, where averages turn.
pub fn tail_grid(x: &LazyPoint, depth: usize, from: u64, to: u64, samples: u64) -> Result<Vec<u64>> {
    let from = from.max(1);
    if from > to {
        return Ok(Vec::new());
    }
    let mut grid: Vec<u64> = (0..=samples).map(|i| from + ((to - from) as u128 * i as u128 / samples.max(1) as u128) as u64).collect();
    let pieces = x.window_pieces(depth, from, to)?;
    if pieces.len() <= 1 << 14 {
        for p in pieces {
            for b in [p.start, p.start + p.len] {
                if (from..=to).contains(&b) {
                    grid.push(b);
                }
            }
        }
    }
    grid.sort_unstable();
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationReport {
    pub horizon: u64,
    pub tail_start: u64,
    pub samples: usize,
    pub liminf_est: f64,
    pub limsup_est: f64,
    pub oscillation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_consistent: Option<bool>,
}

/// liminf/limsup estimates of A_j over j ∈ [tail_fraction·horizon, horizon].
pub fn oscillation_stats(
    x: &LazyPoint,
    phi: &LocalObservable,
    horizon: u64,
    target: Option<&BigRational>,
    tol: f64,
    tail_fraction: f64,
) -> Result<OscillationReport> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if !(0.0..1.0).contains(&tail_fraction) {
        return Err(Error::InvalidParameter("tail fraction must lie in [0,1)".into()));
    }
    let tail_start = ((horizon as f64 * tail_fraction) as u64).max(1);
    let grid = tail_grid(x, phi.depth, tail_start, horizon, 1024)?;
    let trace = average_trace(x, phi, &grid)?;
    let lo = trace.exact.iter().min().expect("nonempty grid");
    let hi = trace.exact.iter().max().expect("nonempty grid");
    let level_consistent = target.map(|a| {
        let worst = (lo - a).abs().max((hi - a).abs());
        ratio_to_f64(&worst) <= tol
    });
    Ok(OscillationReport {
        horizon,
        tail_start,
        samples: grid.len(),
        liminf_est: ratio_to_f64(lo),
        limsup_est: ratio_to_f64(hi),
        oscillation: ratio_to_f64(&(hi - lo)),
        level_consistent,
    })
}

/// Exact [inf, sup] of ∫φ dμ over invariant measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LphiInterval {
    #[serde(serialize_with = "ser_ratio")]
    pub lo: BigRational,
    #[serde(serialize_with = "ser_ratio")]
    pub hi: BigRational,
    pub interior_empty: bool,
    /// Periodic words whose orbits attain the endpoints.
    pub min_cycle: SymbolWord,
    pub max_cycle: SymbolWord,
}

struct BlockGraph {
    q: u8,
    m: usize,
    nodes: Vec<usize>,
    succ: Vec<Vec<usize>>,
}

impl BlockGraph {
    fn new(model: &ShiftModel, m: usize) -> Result<Self> {
        let q = model.q();
        let total = (q as usize)
            .checked_pow(m as u32)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::InvalidParameter(format!("block depth {m} too large")))?;
        let mut index = vec![usize::MAX; total];
        let mut nodes = Vec::new();
        for c in 0..total {
            if model.word_admissible(&SymbolWord::new(decode(q, m, c)))? {
                index[c] = nodes.len();
                nodes.push(c);
            }
        }
        if nodes.len() > MAX_GRAPH_NODES {
            return Err(Error::InvalidParameter(format!("{} block nodes exceed the solver cap", nodes.len())));
        }
        let low = (q as usize).pow(m as u32 - 1);
        let succ = nodes
            .iter()
            .map(|&c| {
                (0..q as usize)
                    .map(|s| (c % low) * q as usize + s)
                    .filter(|&d| index[d] != usize::MAX && model.allows((c % q as usize) as u8, (d % q as usize) as u8))
                    .map(|d| index[d])
                    .collect()
            })
            .collect();
        Ok(Self { q, m, nodes, succ })
    }

    /// Karp's minimum cycle mean over integer node weights, as (p, r) with
    /// mean p/r in lowest terms.
    fn min_mean(&self, w: &[i128]) -> (i128, i128) {
        let n = self.nodes.len();
        let mut d: Vec<Vec<Option<i128>>> = vec![vec![None; n]; n + 1];
        d[0][0] = Some(0);
        for k in 1..=n {
            for u in 0..n {
                if let Some(du) = d[k - 1][u] {
                    for &v in &self.succ[u] {
                        let cand = du + w[u];
                        if d[k][v].is_none_or(|dv| cand < dv) {
                            d[k][v] = Some(cand);
                        }
                    }
                }
            }
        }
        let mut best: Option<BigRational> = None;
        for v in 0..n {
            let Some(dn) = d[n][v] else { continue };
            let worst = (0..n)
                .filter_map(|k| d[k][v].map(|dk| BigRational::new((dn - dk).into(), ((n - k) as i128).into())))
                .max();
            if let Some(val) = worst {
                if best.as_ref().is_none_or(|b| val < *b) {
                    best = Some(val);
                }
            }
        }
        let best = best.expect("strongly connected graph has a cycle");
        (best.numer().to_i128().unwrap(), best.denom().to_i128().unwrap())
    }

    /// A cycle of minimum mean p/r, as the periodic word of first symbols.
    fn critical_cycle(&self, w: &[i128], p: i128, r: i128) -> SymbolWord {
        let n = self.nodes.len();
        let red: Vec<i128> = w.iter().map(|&x| x * r - p).collect();
        let mut dist = vec![0i128; n];
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                for &v in &self.succ[u] {
                    if dist[u] + red[u] < dist[v] {
                        dist[v] = dist[u] + red[u];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let tight: Vec<Vec<usize>> = (0..n)
            .map(|u| self.succ[u].iter().copied().filter(|&v| dist[u] + red[u] == dist[v]).collect())
            .collect();
        // Iterative DFS for a cycle in the tight subgraph.
        let mut state = vec![0u8; n];
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            state[root] = 1;
            while let Some(&mut (u, ref mut i)) = stack.last_mut() {
                if *i < tight[u].len() {
                    let v = tight[u][*i];
                    *i += 1;
                    match state[v] {
                        0 => {
                            state[v] = 1;
                            stack.push((v, 0));
                        }
                        1 => {
                            let at = stack.iter().position(|&(x, _)| x == v).unwrap();
                            let cyc: Vec<u8> = stack[at..]
                                .iter()
                                .map(|&(x, _)| decode(self.q, self.m, self.nodes[x])[0])
                                .collect();
                            return SymbolWord::new(min_rotation(&cyc));
                        }
                        _ => {}
                    }
                } else {
                    state[u] = 2;
                    stack.pop();
                }
            }
        }
        unreachable!("a critical cycle is tight")
    }
}

fn min_rotation(w: &[u8]) -> Vec<u8> {
    (0..w.len())
        .map(|k| w[k..].iter().chain(&w[..k]).copied().collect::<Vec<u8>>())
        .min()
        .unwrap_or_default()
}

pub fn lphi_interval(model: &ShiftModel, phi: &LocalObservable) -> Result<LphiInterval> {
    if let ShiftModel::Beta(_) = model {
        return Err(Error::Unsupported("mean-cycle optimization needs a full shift or SFT"));
    }
    if model.q() != phi.q {
        return Err(Error::AlphabetMismatch(model.q(), phi.q));
    }
    let g = BlockGraph::new(model, phi.depth)?;
    let w: Vec<i128> = g.nodes.iter().map(|&c| phi.scaled[c]).collect();
    let neg: Vec<i128> = w.iter().map(|x| -x).collect();
    let (p_lo, r_lo) = g.min_mean(&w);
    let (p_hi, r_hi) = g.min_mean(&neg);
    let d = BigInt::from(phi.denom);
    let lo = BigRational::new(BigInt::from(p_lo), BigInt::from(r_lo) * &d);
    let hi = BigRational::new(BigInt::from(-p_hi), BigInt::from(r_hi) * &d);
    Ok(LphiInterval {
        interior_empty: lo == hi,
        min_cycle: g.critical_cycle(&w, p_lo, r_lo),
        max_cycle: g.critical_cycle(&neg, p_hi, r_hi),
        lo,
        hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{empirical_measure, ratio};

    fn w(s: &str) -> SymbolWord {
        SymbolWord::parse(s).unwrap()
    }

    fn per(s: &str) -> LazyPoint {
        LazyPoint::periodic(2, &w(s)).unwrap()
    }

    #[test]
    fn average_examples() {
        let phi = LocalObservable::first_coordinate(2);
        assert_eq!(birkhoff_average(&per("01"), &phi, 2).unwrap(), ratio(1, 2));
        assert_eq!(birkhoff_average(&per("01"), &phi, 3).unwrap(), ratio(1, 3));
        let ind = LocalObservable::cylinder_indicator(2, &w("01")).unwrap();
        assert!(birkhoff_average(&per("0"), &ind, 50).unwrap().is_zero());
    }

    #[test]
    fn average_matches_empirical_pairing() {
        let x = LazyPoint::prefix_periodic(2, &w("1101110"), Some(&w("00101"))).unwrap();
        let phi = LocalObservable::new(2, 2, vec![ratio(1, 3), ratio(-2, 5), ratio(7, 1), ratio(0, 1)]).unwrap();
        for n in [1u64, 3, 8, 19, 101] {
            let e = empirical_measure(&x, n, 2).unwrap();
            assert_eq!(birkhoff_average(&x, &phi, n).unwrap(), phi.integrate(&e).unwrap());
        }
    }

    #[test]
    fn lphi_examples() {
        let phi = LocalObservable::first_coordinate(2);
        let g = lphi_interval(&ShiftModel::golden_mean(), &phi).unwrap();
        assert_eq!((g.lo.clone(), g.hi.clone()), (ratio(0, 1), ratio(1, 2)));
        assert_eq!(g.max_cycle, w("01"));
        assert_eq!(g.min_cycle, w("0"));
        let f = lphi_interval(&ShiftModel::full(2).unwrap(), &phi).unwrap();
        assert_eq!((f.lo, f.hi), (ratio(0, 1), ratio(1, 1)));
        let c = lphi_interval(&ShiftModel::full(2).unwrap(), &LocalObservable::constant(2, ratio(3, 7))).unwrap();
        assert_eq!((c.lo.clone(), c.hi.clone()), (ratio(3, 7), ratio(3, 7)));
        assert!(c.interior_empty);
    }

    #[test]
    fn oscillation_examples() {
        let phi = LocalObservable::first_coordinate(2);
        let r = oscillation_stats(&per("01"), &phi, 1 << 12, Some(&ratio(1, 2)), 0.01, 0.5).unwrap();
        assert!(r.oscillation < 1e-3);
        assert_eq!(r.level_consistent, Some(true));

        let mut runs = Vec::new();
        let mut start = 0u64;
        for k in 0..20u32 {
            runs.push(crate::shiftspace::Run::periodic(start, Arc::from(vec![(k % 2) as u8]), 0));
            start += 1 << k;
        }
        let blocks = LazyPoint::from_runs(2, runs).unwrap();
        let r = oscillation_stats(&blocks, &phi, 1 << 16, None, 0.0, 0.5).unwrap();
        let tol = 0.01;
        assert!(r.liminf_est <= 1.0 / 3.0 + tol, "{r:?}");
        assert!(r.limsup_est >= 2.0 / 3.0 - tol, "{r:?}");

        let c = LocalObservable::constant(2, ratio(2, 3));
        assert_eq!(oscillation_stats(&blocks, &c, 1 << 16, None, 0.0, 0.5).unwrap().oscillation, 0.0);
    }

    #[test]
    fn observable_file_roundtrip() {
        let g = ShiftModel::golden_mean();
        let text = r#"{"depth":2,"values":{"00":"1","01":"1/2","10":"0"}}"#;
        let file: ObservableFile = serde_json::from_str(text).unwrap();
        let phi = LocalObservable::from_file(&g, &file).unwrap();
        assert_eq!(phi.value(&[0, 1]), &ratio(1, 2));
        let missing: ObservableFile = serde_json::from_str(r#"{"depth":2,"values":{"00":"1"}}"#).unwrap();
        assert!(LocalObservable::from_file(&g, &missing).is_err());
    }
}
