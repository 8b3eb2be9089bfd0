//! Gluing orbit segments with connector words.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shiftspace::{max_word_len, prefix_distance, Fill, LazyPoint, PointSpec, Run, ShiftModel, SymbolWord};

/// Minimal admissible distance a_{m+1} − b_m between glued windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecGap {
    pub k: u64,
}

pub fn mixing_gap(model: &ShiftModel) -> Result<SpecGap> {
    match model {
        ShiftModel::FullShift { .. } => Ok(SpecGap { k: 1 }),
        ShiftModel::Sft { exponent, .. } => Ok(SpecGap { k: *exponent as u64 }),
        ShiftModel::Beta(_) => Err(Error::Unsupported("gluing on beta shifts goes through betashift surgery")),
    }
}

/// Lexicographically smallest w with |w| = len and u·w·v admissible.
pub fn connect(model: &ShiftModel, u: u8, v: u8, len: usize) -> Result<SymbolWord> {
    let q = model.q();
    for s in [u, v] {
        if s >= q {
            return Err(Error::SymbolOutOfRange { symbol: s, q });
        }
    }
    match model {
        ShiftModel::FullShift { .. } => return Ok(SymbolWord::new(vec![0; len])),
        ShiftModel::Beta(_) => return Err(Error::Unsupported("connectors need a full shift or SFT")),
        ShiftModel::Sft { .. } => {}
    }
    // reach[k][a]: a path of exactly k steps leads from a to v.
    let mut reach = vec![(0..q).map(|a| a == v).collect::<Vec<bool>>()];
    for k in 1..=len + 1 {
        let prev = &reach[k - 1];
        let row = (0..q).map(|a| (0..q).any(|b| model.allows(a, b) && prev[b as usize])).collect();
        reach.push(row);
    }
    if !reach[len + 1][u as usize] {
        return Err(Error::NoConnector { u, v, len });
    }
    let mut out = Vec::with_capacity(len);
    let mut cur = u;
    for i in 0..len {
        let next = (0..q)
            .find(|&b| model.allows(cur, b) && reach[len - i][b as usize])
            .expect("reachability guarantees a successor");
        out.push(next);
        cur = next;
    }
    Ok(SymbolWord::new(out))
}

/// Greedy smallest-successor continuation after symbol `u`, as
/// (pre-period, cycle).
pub fn smallest_continuation(model: &ShiftModel, u: u8) -> Result<(Vec<u8>, Vec<u8>)> {
    match model {
        ShiftModel::FullShift { .. } => Ok((Vec::new(), vec![0])),
        ShiftModel::Beta(_) => Err(Error::Unsupported("continuations need a full shift or SFT")),
        ShiftModel::Sft { q, .. } => {
            let mut seq: Vec<u8> = Vec::new();
            let mut seen = vec![None; *q as usize];
            let mut cur = u;
            loop {
                let next = (0..*q).find(|&b| model.allows(cur, b)).ok_or(Error::NoConnector { u: cur, v: 0, len: 0 })?;
                if let Some(at) = seen[next as usize] {
                    let cycle = seq.split_off(at);
                    return Ok((seq, cycle));
                }
                seen[next as usize] = Some(seq.len());
                seq.push(next);
                cur = next;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSegment {
    pub point: LazyPoint,
    pub a: u64,
    pub b: u64,
}

/// Windows [a_m, b_m] to be traced by f^{i−a_m} y_m.
#[derive(Debug, Clone)]
pub struct OrbitPlan {
    pub model: ShiftModel,
    pub segments: Vec<PlanSegment>,
    /// Extra coordinates of y_m copied after b_m.
    pub lookahead: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanEntry {
    pub point: PointSpec,
    pub a: u64,
    pub b: u64,
}

impl OrbitPlan {
    pub fn new(model: ShiftModel, segments: Vec<PlanSegment>) -> Self {
        Self { model, segments, lookahead: 0 }
    }

    pub fn with_lookahead(mut self, lookahead: u64) -> Self {
        self.lookahead = lookahead;
        self
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<PlanEntry> =
            self.segments.iter().map(|s| PlanEntry { point: s.point.spec(), a: s.a, b: s.b }).collect();
        serde_json::to_string(&entries).expect("plan serializes")
    }

    pub fn from_json(model: ShiftModel, text: &str) -> Result<Self> {
        let entries: Vec<PlanEntry> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let segments = entries
            .into_iter()
            .map(|e| Ok(PlanSegment { point: e.point.build()?, a: e.a, b: e.b }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(model, segments))
    }
}

/// Checks that coordinates [from, from+len) of `x` form an admissible word
/// without materializing them.
pub fn window_admissible(model: &ShiftModel, x: &LazyPoint, from: u64, len: u64) -> Result<bool> {
    if len == 0 {
        return Ok(true);
    }
    if let ShiftModel::Beta(_) = model {
        let w = x.orbit_window(from, from + len - 1)?;
        return model.word_admissible(&w);
    }
    let end = from + len;
    let runs = x.slice_runs(from, Some(len), from);
    for (i, run) in runs.iter().enumerate() {
        let run_end = runs.get(i + 1).map_or(end, |r| r.start);
        let Fill::Periodic { word, phase } = &run.fill else {
            return Err(Error::UnresolvedPlan(run.start));
        };
        let span = run_end - run.start;
        if span > word.len() as u64 {
            let w = SymbolWord::new(word.to_vec());
            let cyclic = model.word_admissible(&w)? && model.allows(word[word.len() - 1], word[0]);
            if !cyclic {
                return Ok(false);
            }
        } else {
            let mut buf = Vec::with_capacity(span as usize);
            for k in 0..span as usize {
                buf.push(word[(phase + k) % word.len()]);
            }
            if !model.word_admissible(&SymbolWord::new(buf))? {
                return Ok(false);
            }
        }
        if run_end < end && !model.allows(x.coord(run_end - 1)?, x.coord(run_end)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Builds the glued point of a plan: windows copied exactly, gaps filled by
/// connectors, and the smallest admissible continuation after the last window.
pub fn glue(plan: &OrbitPlan) -> Result<LazyPoint> {
    let model = &plan.model;
    let gap = mixing_gap(model)?.k;
    let segs = &plan.segments;
    let first = segs.first().ok_or_else(|| Error::MalformedPlan("plan has no segments".into()))?;
    if first.a != 0 {
        return Err(Error::MalformedPlan("first window must start at 0".into()));
    }
    let q = model.q();
    let mut runs: Vec<Run> = Vec::new();
    for (m, seg) in segs.iter().enumerate() {
        if seg.point.q() != q {
            return Err(Error::AlphabetMismatch(seg.point.q(), q));
        }
        if seg.b < seg.a {
            return Err(Error::MalformedPlan(format!("window {m} has b < a")));
        }
        let end = seg.b + plan.lookahead;
        let len = end - seg.a + 1;
        if !window_admissible(model, &seg.point, 0, len)? {
            return Err(Error::Inadmissible(format!("window {m} of the plan")));
        }
        runs.extend(seg.point.slice_runs(0, Some(len), seg.a));
        let last = seg.point.coord(len - 1)?;
        match segs.get(m + 1) {
            Some(next) => {
                if next.a <= end || next.a - end < gap {
                    return Err(Error::GapTooSmall { end, start: next.a, needed: gap });
                }
                let filler = connect(model, last, next.point.coord(0)?, (next.a - end - 1) as usize)?;
                if !filler.is_empty() {
                    runs.push(Run::periodic(end + 1, filler.symbols().into(), 0));
                }
            }
            None => {
                let (pre, cycle) = smallest_continuation(model, last)?;
                let mut at = end + 1;
                if !pre.is_empty() {
                    runs.push(Run::periodic(at, Arc::from(pre.as_slice()), 0));
                    at += pre.len() as u64;
                }
                runs.push(Run::periodic(at, Arc::from(cycle.as_slice()), 0));
            }
        }
    }
    let horizon = segs.last().map_or(0, |s| s.b);
    Ok(LazyPoint::from_runs(q, runs)?.with_horizon_hint(horizon))
}

/// Whether d(f^i x, f^{i−a} y) < ε for every i ∈ [a, b].
pub fn verify_trace(x: &LazyPoint, y: &LazyPoint, a: u64, b: u64, eps: f64, depth: usize) -> Result<bool> {
    if x.q() != y.q() {
        return Err(Error::AlphabetMismatch(x.q(), y.q()));
    }
    if a > b {
        return Err(Error::InvalidParameter(format!("window [{a}, {b}] is empty")));
    }
    let l = max_word_len(x.q(), depth) as u64;
    const CHUNK: u64 = 1 << 16;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut c = 0;
    while a + c <= b {
        let n = CHUNK.min(b - a - c + 1);
        xs.clear();
        ys.clear();
        x.extend_coords(a + c, n + l.max(1) - 1, &mut xs)?;
        y.extend_coords(c, n + l.max(1) - 1, &mut ys)?;
        for j in 0..n as usize {
            let (u, v) = (&xs[j..j + l as usize], &ys[j..j + l as usize]);
            if u != v && prefix_distance(x.q(), depth, u, v) >= eps {
                return Ok(false);
            }
            if u == v && eps <= 0.0 {
                return Ok(false);
            }
        }
        c += n;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftspace::DEFAULT_METRIC_DEPTH;

    fn w(s: &str) -> SymbolWord {
        SymbolWord::parse(s).unwrap()
    }

    fn seg(p: &str, a: u64, b: u64) -> PlanSegment {
        PlanSegment { point: LazyPoint::periodic(2, &w(p)).unwrap(), a, b }
    }

    #[test]
    fn gap_examples() {
        assert_eq!(mixing_gap(&ShiftModel::full(3).unwrap()).unwrap().k, 1);
        assert_eq!(mixing_gap(&ShiftModel::golden_mean()).unwrap().k, 2);
        let cycle = ShiftModel::sft(vec![vec![false, true], vec![true, false]]);
        assert!(matches!(cycle, Err(Error::NotMixing(_))));
    }

    #[test]
    fn connect_examples() {
        assert!(connect(&ShiftModel::full(2).unwrap(), 1, 1, 0).unwrap().is_empty());
        let g = ShiftModel::golden_mean();
        assert_eq!(connect(&g, 1, 1, 1).unwrap(), w("0"));
        assert_eq!(connect(&g, 1, 1, 0), Err(Error::NoConnector { u: 1, v: 1, len: 0 }));
        assert_eq!(connect(&g, 0, 1, 3).unwrap(), w("000"));
    }

    #[test]
    fn connect_matches_brute_force() {
        let m = ShiftModel::sft(vec![
            vec![false, true, true],
            vec![true, false, true],
            vec![true, true, false],
        ])
        .unwrap();
        for u in 0..3u8 {
            for v in 0..3u8 {
                for len in 0..5usize {
                    let mut best: Option<Vec<u8>> = None;
                    for code in 0..3usize.pow(len as u32) {
                        let mut word = vec![0u8; len];
                        let mut c = code;
                        for s in word.iter_mut().rev() {
                            *s = (c % 3) as u8;
                            c /= 3;
                        }
                        let mut full = vec![u];
                        full.extend(&word);
                        full.push(v);
                        if m.word_admissible(&SymbolWord::new(full)).unwrap() {
                            best = Some(word);
                            break;
                        }
                    }
                    match best {
                        Some(bw) => assert_eq!(connect(&m, u, v, len).unwrap(), SymbolWord::new(bw)),
                        None => assert!(connect(&m, u, v, len).is_err()),
                    }
                }
            }
        }
    }

    #[test]
    fn glue_full_shift_example() {
        let plan = OrbitPlan::new(ShiftModel::full(2).unwrap(), vec![seg("0", 0, 2), seg("1", 4, 6)]);
        let x = glue(&plan).unwrap();
        assert_eq!(x.orbit_window(0, 6).unwrap(), w("0000111"));
        assert_eq!(x.orbit_window(7, 10).unwrap(), w("0000"));
    }

    #[test]
    fn glue_golden_mean() {
        let g = ShiftModel::golden_mean();
        let plan = OrbitPlan::new(g.clone(), vec![seg("01", 0, 3), seg("10", 5, 9), seg("100", 11, 20)]);
        let x = glue(&plan).unwrap();
        assert!(g.word_admissible(&x.orbit_window(0, 60).unwrap()).unwrap());
        assert_eq!(x.coord(3).unwrap(), 1);
        assert_eq!(x.coord(5).unwrap(), 1);
        let bad = OrbitPlan::new(g.clone(), vec![seg("01", 0, 3), seg("10", 3, 9)]);
        assert!(matches!(glue(&bad), Err(Error::GapTooSmall { .. })));
        let tight = OrbitPlan::new(g, vec![seg("01", 0, 3), seg("10", 4, 9)]);
        assert!(matches!(glue(&tight), Err(Error::GapTooSmall { needed: 2, .. })));
    }

    #[test]
    fn glue_rejects_inadmissible_window() {
        let g = ShiftModel::golden_mean();
        let plan = OrbitPlan::new(g, vec![seg("1", 0, 2)]);
        assert!(matches!(glue(&plan), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn trace_examples() {
        let m = ShiftModel::full(2).unwrap();
        let l = max_word_len(2, DEFAULT_METRIC_DEPTH) as u64;
        let plan = OrbitPlan::new(m, vec![seg("01", 0, 9), seg("0011", 14, 30)]).with_lookahead(l - 1);
        let x = glue(&plan).unwrap();
        for s in &plan.segments {
            for eps in [1e-9, 0.5] {
                assert!(verify_trace(&x, &s.point, s.a, s.b, eps, DEFAULT_METRIC_DEPTH).unwrap());
            }
        }
        let zero = LazyPoint::periodic(2, &w("0")).unwrap();
        let one = LazyPoint::periodic(2, &w("1")).unwrap();
        assert!(!verify_trace(&zero, &one, 0, 0, 0.5, DEFAULT_METRIC_DEPTH).unwrap());
        let y = LazyPoint::prefix_periodic(2, &w("0101"), Some(&w("1"))).unwrap();
        let z = LazyPoint::prefix_periodic(2, &w("0101"), Some(&w("0"))).unwrap();
        assert!(verify_trace(&y, &z, 0, 0, 1e-9, DEFAULT_METRIC_DEPTH).unwrap());
    }

    #[test]
    fn plan_json_roundtrip() {
        let plan = OrbitPlan::new(ShiftModel::full(2).unwrap(), vec![seg("0", 0, 2), seg("1", 4, 6)]);
        let back = OrbitPlan::from_json(plan.model.clone(), &plan.to_json()).unwrap();
        assert_eq!(back.segments, plan.segments);
        assert_eq!(glue(&back).unwrap(), glue(&plan).unwrap());
    }

    #[test]
    fn smallest_continuation_golden() {
        let g = ShiftModel::golden_mean();
        assert_eq!(smallest_continuation(&g, 1).unwrap(), (vec![], vec![0]));
        let m = ShiftModel::sft(vec![vec![false, true], vec![true, true]]).unwrap();
        assert_eq!(smallest_continuation(&m, 1).unwrap(), (vec![], vec![0, 1]));
    }
}
