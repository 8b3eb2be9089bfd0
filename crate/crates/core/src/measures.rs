//! Cylinder measures with exact rational weights, the truncated weak* metric,
//! empirical and periodic measures, and distances to chains of segments.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shiftspace::{cylinder_word, cylinders_up_to, max_word_len, LazyPoint, ShiftModel, SymbolWord};

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("bad rational {s:?}"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

fn pow2_inv(k: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << k)
}

/// Finite convex combination of periodic orbit measures; lets constructions
/// realize generic points for a measure by time-sharing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicMix {
    parts: Vec<(SymbolWord, BigRational)>,
}

impl PeriodicMix {
    pub fn single(w: SymbolWord) -> Self {
        Self { parts: vec![(w, BigRational::one())] }
    }

    fn combine(a: &Self, b: &Self, theta: &BigRational) -> Self {
        let mut acc: BTreeMap<SymbolWord, BigRational> = BTreeMap::new();
        let rest = BigRational::one() - theta;
        for (w, c) in &a.parts {
            *acc.entry(w.clone()).or_insert_with(BigRational::zero) += c * theta;
        }
        for (w, c) in &b.parts {
            *acc.entry(w.clone()).or_insert_with(BigRational::zero) += c * &rest;
        }
        Self { parts: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect() }
    }

    pub fn parts(&self) -> &[(SymbolWord, BigRational)] {
        &self.parts
    }
}

impl Serialize for PeriodicMix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, String> = self.parts.iter().map(|(w, c)| (w.to_string(), c.to_string())).collect();
        map.serialize(s)
    }
}

/// Weights on all cylinders of length ≤ depth, stored in canonical order.
#[derive(Debug, Clone)]
pub struct CylinderMeasure {
    q: u8,
    depth: usize,
    weights: Vec<BigRational>,
    recipe: Option<PeriodicMix>,
}

impl PartialEq for CylinderMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.depth == other.depth && self.weights == other.weights
    }
}

/// A metric value together with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub truncation_bound: f64,
}

impl CylinderMeasure {
    fn zeros(q: u8, depth: usize) -> Self {
        Self { q, depth, weights: vec![BigRational::zero(); cylinders_up_to(q, depth) as usize], recipe: None }
    }

    /// Validates nonnegativity, unit mass per length and Kolmogorov consistency.
    pub fn from_weights(q: u8, depth: usize, weights: &BTreeMap<SymbolWord, BigRational>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidMeasure("depth must be positive".into()));
        }
        let mut m = Self::zeros(q, depth);
        for (w, v) in weights {
            w.check_alphabet(q)?;
            if w.is_empty() || w.len() > depth {
                return Err(Error::InvalidMeasure(format!("word {w} outside lengths 1..={depth}")));
            }
            if v.is_negative() {
                return Err(Error::InvalidMeasure(format!("negative weight on {w}")));
            }
            m.weights[Self::slot(q, w.symbols())] = v.clone();
        }
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let q = self.q as usize;
        for l in 1..=self.depth {
            let base = cylinders_up_to(self.q, l - 1) as usize;
            let count = q.pow(l as u32);
            let total: BigRational = self.weights[base..base + count].iter().sum();
            if !total.is_one() {
                return Err(Error::InvalidMeasure(format!("length-{l} weights sum to {total}")));
            }
            if l < self.depth {
                let next = cylinders_up_to(self.q, l) as usize;
                for c in 0..count {
                    let ext: BigRational = self.weights[next + c * q..next + c * q + q].iter().sum();
                    if ext != self.weights[base + c] {
                        return Err(Error::InvalidMeasure(format!(
                            "inconsistent extensions of {}",
                            cylinder_word(self.q, (base + c + 1) as u64)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn slot(q: u8, w: &[u8]) -> usize {
        let rank = w.iter().fold(0usize, |r, &s| r * q as usize + s as usize);
        cylinders_up_to(q, w.len() - 1) as usize + rank
    }

    /// Measure from counts of length-`m` window codes over `n` positions.
    pub fn from_counts(q: u8, m: usize, counts: &[u64], n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empirical measure needs n ≥ 1".into()));
        }
        let mut out = Self::zeros(q, m);
        let mut ints = vec![0u64; out.weights.len()];
        for (code, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut prefix = code;
            for l in (1..=m).rev() {
                ints[cylinders_up_to(q, l - 1) as usize + prefix] += c;
                prefix /= q as usize;
            }
        }
        let denom = BigInt::from(n);
        for (w, c) in out.weights.iter_mut().zip(ints) {
            if c > 0 {
                *w = BigRational::new(BigInt::from(c), denom.clone());
            }
        }
        Ok(out)
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn recipe(&self) -> Option<&PeriodicMix> {
        self.recipe.as_ref()
    }

    pub fn with_recipe(mut self, recipe: PeriodicMix) -> Self {
        self.recipe = Some(recipe);
        self
    }

    /// ⟨f_k, μ⟩ for the k-th canonical cylinder (k ≥ 1).
    pub fn pairing(&self, k: usize) -> Result<&BigRational> {
        self.weights.get(k - 1).ok_or(Error::DepthExceeded {
            needed: cylinder_word(self.q, k as u64).len(),
            depth: self.depth,
        })
    }

    pub fn weight(&self, w: &SymbolWord) -> Result<&BigRational> {
        w.check_alphabet(self.q)?;
        if w.is_empty() || w.len() > self.depth {
            return Err(Error::DepthExceeded { needed: w.len(), depth: self.depth });
        }
        Ok(&self.weights[Self::slot(self.q, w.symbols())])
    }

    pub fn weight_f64(&self, w: &SymbolWord) -> Result<f64> {
        self.weight(w).map(ratio_to_f64)
    }

    /// Words of length `l` carrying positive weight.
    pub fn support(&self, l: usize) -> Result<Vec<SymbolWord>> {
        if l == 0 || l > self.depth {
            return Err(Error::DepthExceeded { needed: l, depth: self.depth });
        }
        let base = cylinders_up_to(self.q, l - 1) as usize;
        let count = (self.q as usize).pow(l as u32);
        Ok((0..count)
            .filter(|&c| self.weights[base + c].is_positive())
            .map(|c| cylinder_word(self.q, (base + c + 1) as u64))
            .collect())
    }

    pub fn to_file(&self) -> MeasureFile {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_zero())
            .map(|(i, w)| (cylinder_word(self.q, i as u64 + 1).to_string(), w.to_string()))
            .collect();
        MeasureFile { q: Some(self.q), depth: self.depth, weights }
    }

    pub fn from_file(file: &MeasureFile) -> Result<Self> {
        let mut weights = BTreeMap::new();
        let mut max_symbol = 1u8;
        for (w, v) in &file.weights {
            let word = SymbolWord::parse(w)?;
            max_symbol = max_symbol.max(word.symbols().iter().copied().max().unwrap_or(0));
            weights.insert(word, parse_ratio(v)?);
        }
        let q = file.q.unwrap_or(max_symbol + 1);
        Self::from_weights(q, file.depth, &weights)
    }
}

/// JSON form `{"depth":m,"weights":{"01":"1/2",…}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u8>,
    pub depth: usize,
    pub weights: BTreeMap<String, String>,
}

fn check_pair(mu: &CylinderMeasure, nu: &CylinderMeasure) -> Result<()> {
    if mu.q != nu.q {
        return Err(Error::AlphabetMismatch(mu.q, nu.q));
    }
    Ok(())
}

fn check_depth(mu: &CylinderMeasure, nu: &CylinderMeasure, depth: usize) -> Result<()> {
    let needed = max_word_len(mu.q, depth);
    let have = mu.depth.min(nu.depth);
    if needed > have {
        return Err(Error::DepthExceeded { needed, depth: have });
    }
    Ok(())
}

/// Exact Σ_{k≤depth} 2^{-k}|⟨f_k,μ⟩ − ⟨f_k,ν⟩|.
pub fn weakstar_exact(mu: &CylinderMeasure, nu: &CylinderMeasure, depth: usize) -> Result<BigRational> {
    check_pair(mu, nu)?;
    check_depth(mu, nu, depth)?;
    Ok((0..depth)
        .map(|i| (&mu.weights[i] - &nu.weights[i]).abs() * pow2_inv(i + 1))
        .sum())
}

pub fn weakstar_distance(mu: &CylinderMeasure, nu: &CylinderMeasure, depth: usize) -> Result<MetricValue> {
    let exact = weakstar_exact(mu, nu, depth)?;
    Ok(MetricValue { value: ratio_to_f64(&exact), truncation_bound: (-(depth as f64)).exp2() })
}

/// Counts of length-`l` window codes over positions `[0, n)` for every
/// checkpoint `n` (ascending).
pub fn window_counts(x: &LazyPoint, l: usize, checkpoints: &[u64]) -> Result<Vec<Vec<u64>>> {
    if checkpoints.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::InvalidParameter("checkpoints must be ascending".into()));
    }
    let ncodes = (x.q() as usize).pow(l as u32);
    let Some(&last) = checkpoints.last() else { return Ok(Vec::new()) };
    let pieces = x.window_pieces(l, 0, last)?;
    let mut acc = vec![0u64; ncodes];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut pi = 0;
    let mut pos = 0u64;
    for &cp in checkpoints {
        while pos < cp {
            let piece = &pieces[pi];
            let end = piece.start + piece.len;
            let stop = end.min(cp);
            add_range(piece, pos, stop, &mut acc);
            pos = stop;
            if stop == end {
                pi += 1;
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

fn add_range(piece: &crate::shiftspace::WindowPiece, a: u64, b: u64, acc: &mut [u64]) {
    let p = piece.codes.len() as u64;
    let count = b - a;
    if count <= p {
        for i in a..b {
            acc[piece.code_at(i) as usize] += 1;
        }
        return;
    }
    let first = (piece.phase as u64 + (a - piece.start) % p) % p;
    for j in 0..p {
        let code = piece.codes[((first + j) % p) as usize];
        acc[code as usize] += (count - j - 1) / p + 1;
    }
}

/// 𝓔_n(x) at depth m.
pub fn empirical_measure(x: &LazyPoint, n: u64, m: usize) -> Result<CylinderMeasure> {
    let counts = window_counts(x, m, &[n])?;
    CylinderMeasure::from_counts(x.q(), m, &counts[0], n)
}

/// Empirical measures at several checkpoints in one pass.
pub fn empirical_measures(x: &LazyPoint, checkpoints: &[u64], m: usize) -> Result<Vec<CylinderMeasure>> {
    window_counts(x, m, checkpoints)?
        .iter()
        .zip(checkpoints)
        .map(|(c, &n)| CylinderMeasure::from_counts(x.q(), m, c, n))
        .collect()
}

/// Invariant measure on the periodic orbit of w^∞.
pub fn periodic_measure(model: &ShiftModel, w: &SymbolWord, m: usize) -> Result<CylinderMeasure> {
    if !model.self_concatenable(w)? {
        return Err(Error::NotSelfConcatenable(w.to_string()));
    }
    let x = LazyPoint::periodic(model.q(), w)?;
    Ok(empirical_measure(&x, w.len() as u64, m)?.with_recipe(PeriodicMix::single(w.clone())))
}

/// θμ₁ + (1−θ)μ₂.
pub fn convex_combine(mu1: &CylinderMeasure, mu2: &CylinderMeasure, theta: &BigRational) -> Result<CylinderMeasure> {
    check_pair(mu1, mu2)?;
    if mu1.depth != mu2.depth {
        return Err(Error::InvalidMeasure(format!("depths {} and {} differ", mu1.depth, mu2.depth)));
    }
    if theta.is_negative() || theta > &BigRational::one() {
        return Err(Error::ThetaOutOfRange(theta.to_string()));
    }
    let rest = BigRational::one() - theta;
    let weights = mu1.weights.iter().zip(&mu2.weights).map(|(a, b)| a * theta + b * &rest).collect();
    let recipe = match (&mu1.recipe, &mu2.recipe) {
        (Some(a), Some(b)) => Some(PeriodicMix::combine(a, b, theta)),
        _ if theta.is_one() => mu1.recipe.clone(),
        _ if theta.is_zero() => mu2.recipe.clone(),
        _ => None,
    };
    Ok(CylinderMeasure { q: mu1.q, depth: mu1.depth, weights, recipe })
}

/// cov{start, end} = {θ·start + (1−θ)·end}.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSegment {
    pub start: CylinderMeasure,
    pub end: CylinderMeasure,
}

/// A position on a chain: segment index and convex weight of its start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainPoint {
    pub segment: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub theta: BigRational,
}

pub fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

/// Connected union of segments, consecutive ones sharing an endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureChain {
    segments: Vec<MeasureSegment>,
}

impl MeasureChain {
    pub fn new(segments: Vec<MeasureSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyChain);
        }
        for (i, pair) in segments.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            check_pair(&a.start, &b.start)?;
            let shared = [&a.start, &a.end].iter().any(|u| **u == b.start || **u == b.end);
            if !shared {
                return Err(Error::DisconnectedChain(i, i + 1));
            }
        }
        for s in &segments {
            check_pair(&s.start, &s.end)?;
            if s.start.depth != s.end.depth {
                return Err(Error::InvalidMeasure("segment endpoints differ in depth".into()));
            }
        }
        Ok(Self { segments })
    }

    /// Polygonal path through the given vertices.
    pub fn path(vertices: Vec<CylinderMeasure>) -> Result<Self> {
        match vertices.len() {
            0 => Err(Error::EmptyChain),
            1 => Self::singleton(vertices.into_iter().next().unwrap()),
            _ => Self::new(
                vertices
                    .windows(2)
                    .map(|p| MeasureSegment { start: p[0].clone(), end: p[1].clone() })
                    .collect(),
            ),
        }
    }

    pub fn singleton(mu: CylinderMeasure) -> Result<Self> {
        Self::new(vec![MeasureSegment { start: mu.clone(), end: mu }])
    }

    pub fn segments(&self) -> &[MeasureSegment] {
        &self.segments
    }

    pub fn q(&self) -> u8 {
        self.segments[0].start.q
    }

    pub fn point(&self, p: &ChainPoint) -> Result<CylinderMeasure> {
        let seg = self
            .segments
            .get(p.segment)
            .ok_or_else(|| Error::InvalidParameter(format!("segment {} out of range", p.segment)))?;
        convex_combine(&seg.start, &seg.end, &p.theta)
    }

    /// Chain positions of the shared vertices between consecutive segments.
    pub fn joints(&self) -> Vec<(ChainPoint, ChainPoint)> {
        self.segments
            .windows(2)
            .enumerate()
            .map(|(i, p)| {
                let a_theta = if p[0].start == p[1].start || p[0].start == p[1].end { 1 } else { 0 };
                let shared = if a_theta == 1 { &p[0].start } else { &p[0].end };
                let b_theta = if *shared == p[1].start { 1 } else { 0 };
                (
                    ChainPoint { segment: i, theta: ratio(a_theta, 1) },
                    ChainPoint { segment: i + 1, theta: ratio(b_theta, 1) },
                )
            })
            .collect()
    }
}

/// Exact distance to a chain with the minimizing position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDistance {
    pub value: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub exact: BigRational,
    pub witness: ChainPoint,
}

/// Minimum over θ ∈ [0,1] of the distance from ν to one segment. The
/// objective is convex piecewise linear, so its minimum sits at a breakpoint
/// or an endpoint.
pub fn dist_to_segment(nu: &CylinderMeasure, seg: &MeasureSegment, depth: usize) -> Result<(BigRational, BigRational)> {
    check_pair(nu, &seg.start)?;
    check_depth(nu, &seg.start, depth)?;
    check_depth(nu, &seg.end, depth)?;
    let terms: Vec<(BigRational, BigRational, BigRational)> = (0..depth)
        .map(|i| {
            let a = &seg.start.weights[i] - &seg.end.weights[i];
            let b = &seg.end.weights[i] - &nu.weights[i];
            (a, b, pow2_inv(i + 1))
        })
        .collect();
    let mut candidates = vec![BigRational::zero(), BigRational::one()];
    for (a, b, _) in &terms {
        if !a.is_zero() {
            let t = -(b / a);
            if t.is_positive() && t < BigRational::one() {
                candidates.push(t);
            }
        }
    }
    candidates.sort();
    candidates.dedup();
    let eval = |t: &BigRational| -> BigRational { terms.iter().map(|(a, b, w)| (a * t + b).abs() * w).sum() };
    let mut best: Option<(BigRational, BigRational)> = None;
    for t in candidates {
        let v = eval(&t);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, t));
        }
    }
    Ok(best.expect("at least two candidates"))
}

pub fn dist_to_chain(nu: &CylinderMeasure, chain: &MeasureChain, depth: usize) -> Result<ChainDistance> {
    let mut best: Option<(BigRational, ChainPoint)> = None;
    for (i, seg) in chain.segments.iter().enumerate() {
        let (v, theta) = dist_to_segment(nu, seg, depth)?;
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, ChainPoint { segment: i, theta }));
        }
    }
    let (exact, witness) = best.ok_or(Error::EmptyChain)?;
    Ok(ChainDistance { value: ratio_to_f64(&exact), exact, witness })
}
