//! Distributional chaos constructions: distal pairs, generic words for
//! chain measures, orbit proximity statistics and DC1 reports. The path,
//! pair and family constructions live in the submodules.

mod family;
mod pair;
mod path;

pub use family::{
    replay_schedule, SegmentRecord,
    alpha_sequence, build_scramble_family, transitive_seed, verify_family, ClauseResult, Decomposition,
    FamilyConfig, FamilyReport, ScheduleMarkers, ScrambleFamily, StageRecord,
};
pub use pair::{lemma_mu_pair, MuPair, MuPairAudit, MuPairParams, DEFAULT_THETA_CAP};
pub use path::{lemma_path_orbit, mu_threshold, path_threshold, HopRecord, PathMarkers, PathOrbit, PathParams};

use std::collections::HashMap;
use std::sync::Arc;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{periodic_measure, ratio_to_f64, weakstar_exact, CylinderMeasure};
use crate::shiftspace::{max_word_len, orbit_distance, DistanceTable, LazyPoint, ShiftModel, SymbolWord};
use crate::specification::connect;

/// Two points whose orbits stay at least ζ apart.
#[derive(Debug, Clone)]
pub struct DistalPair {
    pub p: LazyPoint,
    pub q: LazyPoint,
    pub zeta: f64,
    pub word: SymbolWord,
    pub shift: usize,
}

/// p = w^∞ and q = f^M p, with ζ the minimum distance over one period.
pub fn distal_pair_from_periodic(model: &ShiftModel, w: &SymbolWord, m: usize, depth: usize) -> Result<DistalPair> {
    if !model.self_concatenable(w)? {
        return Err(Error::NotSelfConcatenable(w.to_string()));
    }
    let distinct = w.symbols().iter().any(|&s| s != w.symbols()[0]);
    if !distinct {
        return Err(Error::DegenerateSupport(w.to_string()));
    }
    if m == 0 || m >= w.len() {
        return Err(Error::InvalidParameter(format!("shift {m} must lie in 1..{}", w.len())));
    }
    let p = LazyPoint::periodic(model.q(), w)?;
    let q = p.shift(m as u64);
    let mut zeta = f64::INFINITY;
    for i in 0..w.len() as u64 {
        zeta = zeta.min(orbit_distance(&p, i, &q, i, depth)?);
    }
    if zeta <= 0.0 {
        return Err(Error::DegenerateSupport(format!("{w} shifted by {m} returns to itself")));
    }
    Ok(DistalPair { p, q, zeta, word: w.clone(), shift: m })
}

/// Largest gap between consecutive i < horizon with d(f^i p, f^i q) > ε;
/// `None` when fewer than two such i exist.
pub fn syndetic_gap(p: &LazyPoint, q: &LazyPoint, eps: f64, horizon: u64, depth: usize) -> Result<Option<u64>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if p.q() != q.q() {
        return Err(Error::AlphabetMismatch(p.q(), q.q()));
    }
    let l = max_word_len(p.q(), depth).max(1) as u64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    p.extend_coords(0, horizon + l - 1, &mut xs)?;
    q.extend_coords(0, horizon + l - 1, &mut ys)?;
    let mut last: Option<u64> = None;
    let mut gap: Option<u64> = None;
    for i in 0..horizon {
        let (a, b) = (&xs[i as usize..(i + l) as usize], &ys[i as usize..(i + l) as usize]);
        let d = if a == b { 0.0 } else { crate::shiftspace::prefix_distance(p.q(), depth, a, b) };
        if d > eps {
            if let Some(prev) = last {
                gap = Some(gap.map_or(i - prev, |g: u64| g.max(i - prev)));
            }
            last = Some(i);
        }
    }
    Ok(gap)
}

/// Periodic word whose orbit measure approximates a measure with a
/// periodic recipe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericWord {
    pub word: SymbolWord,
    /// Truncated distance between the orbit measure of `word` and the target.
    pub defect: f64,
}

fn shortest_connector(model: &ShiftModel, u: u8, v: u8) -> Result<SymbolWord> {
    if model.allows(u, v) {
        return Ok(SymbolWord::empty());
    }
    let cap = match model {
        ShiftModel::Sft { exponent, .. } => *exponent,
        _ => 1,
    };
    for len in 1..=cap {
        if let Ok(w) = connect(model, u, v, len) {
            return Ok(w);
        }
    }
    Err(Error::NoConnector { u, v, len: cap })
}

const GENERIC_WORD_CAP: usize = 1 << 22;

/// Time-shares the recipe's periodic words so that the orbit measure of the
/// result lies within `g` of `beta` at the given metric depth.
pub fn generic_word(model: &ShiftModel, beta: &CylinderMeasure, g: f64, depth: usize) -> Result<GenericWord> {
    let recipe = beta.recipe().ok_or(Error::NoGenerator)?;
    let parts = recipe.parts();
    if parts.len() == 1 {
        let w = parts[0].0.clone();
        let d = weakstar_exact(&periodic_measure(model, &w, beta.depth())?, beta, depth)?;
        let defect = ratio_to_f64(&d);
        if defect >= g {
            return Err(Error::CertificationFailed(format!("periodic word {w} misses its measure by {defect}")));
        }
        return Ok(GenericWord { word: w, defect });
    }
    // Repetitions a_i with a_i |w_i| proportional to c_i.
    let shares: Vec<BigRational> = parts
        .iter()
        .map(|(w, c)| c / BigRational::from_integer((w.len() as u64).into()))
        .collect();
    let mut denom = num_bigint::BigInt::one();
    for s in &shares {
        denom = denom.lcm(s.denom());
    }
    let reps: Vec<usize> = shares
        .iter()
        .map(|s| {
            let v = s * BigRational::from_integer(denom.clone());
            num_traits::ToPrimitive::to_usize(&v.to_integer()).unwrap_or(usize::MAX)
        })
        .collect();
    let mut connectors = Vec::with_capacity(parts.len());
    for i in 0..parts.len() {
        let (u, _) = &parts[i];
        let (v, _) = &parts[(i + 1) % parts.len()];
        let conn = shortest_connector(model, *u.symbols().last().unwrap(), v.symbols()[0])?;
        connectors.push(conn);
    }
    let mut scale = 1usize;
    loop {
        let mut sym = Vec::new();
        for (i, (w, _)) in parts.iter().enumerate() {
            let n = reps[i].checked_mul(scale).filter(|&n| n.saturating_mul(w.len()) <= GENERIC_WORD_CAP);
            let Some(n) = n else {
                return Err(Error::CertificationFailed(format!("no generic word within {g} below length cap")));
            };
            for _ in 0..n {
                sym.extend_from_slice(w.symbols());
            }
            sym.extend_from_slice(connectors[i].symbols());
        }
        if sym.len() > GENERIC_WORD_CAP {
            return Err(Error::CertificationFailed(format!("no generic word within {g} below length cap")));
        }
        let word = SymbolWord::new(sym);
        let d = ratio_to_f64(&weakstar_exact(&periodic_measure(model, &word, beta.depth())?, beta, depth)?);
        if d < g {
            return Ok(GenericWord { word, defect: d });
        }
        scale *= 2;
    }
}

/// Distance lookup for window codes, falling back to direct evaluation for
/// alphabets too large for a table.
pub(crate) struct PairMetric {
    q: u8,
    depth: usize,
    window: usize,
    table: Option<DistanceTable>,
}

impl PairMetric {
    pub(crate) fn new(q: u8, depth: usize) -> Self {
        Self { q, depth, window: max_word_len(q, depth), table: DistanceTable::new(q, depth).ok() }
    }

    pub(crate) fn window(&self) -> usize {
        self.window
    }

    pub(crate) fn get(&self, a: u32, b: u32) -> f64 {
        if a == b {
            return 0.0;
        }
        if let Some(t) = &self.table {
            return t.get(a, b);
        }
        let decode = |mut c: u32| {
            let mut w = vec![0u8; self.window];
            for slot in w.iter_mut().rev() {
                *slot = (c % self.q as u32) as u8;
                c /= self.q as u32;
            }
            w
        };
        crate::shiftspace::prefix_distance(self.q, self.depth, &decode(a), &decode(b))
    }
}

/// For each ascending checkpoint n and threshold t, the number of i < n with
/// d(f^i x, f^i y) < t. One pass over the window pieces of both points.
pub fn pair_close_counts(
    x: &LazyPoint,
    y: &LazyPoint,
    thresholds: &[f64],
    checkpoints: &[u64],
    depth: usize,
) -> Result<Vec<Vec<u64>>> {
    if x.q() != y.q() {
        return Err(Error::AlphabetMismatch(x.q(), y.q()));
    }
    if checkpoints.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::InvalidParameter("checkpoints must be ascending".into()));
    }
    let Some(&last) = checkpoints.last() else { return Ok(Vec::new()) };
    let metric = PairMetric::new(x.q(), depth);
    let l = metric.window().max(1);
    let px = x.window_pieces(l, 0, last)?;
    let py = y.window_pieces(l, 0, last)?;
    let mut acc = vec![0u64; thresholds.len()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut dist_cache: HashMap<(u32, u32), f64> = HashMap::new();
    let (mut ix, mut iy, mut pos) = (0usize, 0usize, 0u64);
    let mut add = |code_a: u32, code_b: u32, times: u64, acc: &mut [u64]| {
        let d = *dist_cache.entry((code_a, code_b)).or_insert_with(|| metric.get(code_a, code_b));
        for (slot, &t) in acc.iter_mut().zip(thresholds) {
            if d < t {
                *slot += times;
            }
        }
    };
    for &cp in checkpoints {
        while pos < cp {
            let (a, b) = (&px[ix], &py[iy]);
            let end_a = a.start + a.len;
            let end_b = b.start + b.len;
            let stop = end_a.min(end_b).min(cp);
            let count = stop - pos;
            let (pa, pb) = (a.codes.len() as u64, b.codes.len() as u64);
            let oa = ((a.phase as u64 + (pos - a.start) % pa) % pa) as usize;
            let ob = ((b.phase as u64 + (pos - b.start) % pb) % pb) as usize;
            let same = pa == pb && oa == ob && (Arc::ptr_eq(&a.codes, &b.codes) || a.codes == b.codes);
            if same {
                for (slot, &t) in acc.iter_mut().zip(thresholds) {
                    if t > 0.0 {
                        *slot += count;
                    }
                }
            } else {
                let period = pa.lcm(&pb);
                if count <= period {
                    for j in 0..count as usize {
                        add(a.codes[(oa + j) % pa as usize], b.codes[(ob + j) % pb as usize], 1, &mut acc);
                    }
                } else {
                    for j in 0..period {
                        let times = (count - j - 1) / period + 1;
                        let ca = a.codes[((oa as u64 + j) % pa) as usize];
                        let cb = b.codes[((ob as u64 + j) % pb) as usize];
                        add(ca, cb, times, &mut acc);
                    }
                }
            }
            pos = stop;
            if stop == end_a {
                ix += 1;
            }
            if stop == end_b {
                iy += 1;
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// Thresholds, optional separation scale t₀ and verdict tolerances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DC1Params {
    pub t_grid: Vec<f64>,
    pub t0: Option<f64>,
    pub tol_high: f64,
    pub tol_low: f64,
}

impl Default for DC1Params {
    fn default() -> Self {
        Self { t_grid: vec![0.5, 0.25, 0.1], t0: Some(0.4), tol_high: 0.1, tol_low: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DC1Row {
    pub t: f64,
    pub max_density: f64,
    pub argmax: u64,
    pub min_density: f64,
    pub argmin: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DC1Report {
    pub checkpoints: Vec<u64>,
    pub rows: Vec<DC1Row>,
    /// Scale at which the separation condition held, if any.
    pub t0: Option<f64>,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub verdict: bool,
    #[serde(skip)]
    pub densities: Vec<Vec<f64>>,
}

impl DC1Report {
    /// CSV with one column per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n");
        for r in &self.rows {
            out.push_str(&format!(",t={}", r.t));
        }
        out.push('\n');
        for (i, n) in self.checkpoints.iter().enumerate() {
            out.push_str(&n.to_string());
            for d in &self.densities[i] {
                out.push_str(&format!(",{d}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Geometric checkpoint grid 1, ⌈r⌉, … up to the horizon with ratio 2^{1/8}.
pub fn log_grid(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut v = 1.0f64;
    while (v as u64) < horizon {
        let n = v.ceil() as u64;
        if out.last() != Some(&n) {
            out.push(n);
        }
        v *= 2f64.powf(0.125);
    }
    out.push(horizon);
    out.dedup();
    out
}

/// Proximal densities of (x, y) at the checkpoints and the finite-horizon
/// DC1 verdict.
pub fn dc1_report(x: &LazyPoint, y: &LazyPoint, checkpoints: &[u64], params: &DC1Params, depth: usize) -> Result<DC1Report> {
    if checkpoints.is_empty() || checkpoints[0] == 0 {
        return Err(Error::InvalidParameter("checkpoints must be positive and nonempty".into()));
    }
    if params.t_grid.is_empty() {
        return Err(Error::InvalidParameter("t grid is empty".into()));
    }
    let mut thresholds = params.t_grid.clone();
    if let Some(t0) = params.t0 {
        if !thresholds.contains(&t0) {
            thresholds.push(t0);
        }
    }
    let counts = pair_close_counts(x, y, &thresholds, checkpoints, depth)?;
    let densities: Vec<Vec<f64>> = counts
        .iter()
        .zip(checkpoints)
        .map(|(row, &n)| row.iter().map(|&c| c as f64 / n as f64).collect())
        .collect();
    let rows: Vec<DC1Row> = thresholds
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (mut max, mut argmax, mut min, mut argmin) = (f64::NEG_INFINITY, 0, f64::INFINITY, 0);
            for (i, row) in densities.iter().enumerate() {
                if row[j] > max {
                    max = row[j];
                    argmax = checkpoints[i];
                }
                if row[j] < min {
                    min = row[j];
                    argmin = checkpoints[i];
                }
            }
            DC1Row { t, max_density: max, argmax, min_density: min, argmin }
        })
        .collect();
    let upper_ok = rows[..params.t_grid.len()].iter().all(|r| r.max_density >= 1.0 - params.tol_high);
    let t0 = match params.t0 {
        Some(t0) => rows.iter().find(|r| r.t == t0).filter(|r| r.min_density <= params.tol_low).map(|r| r.t),
        None => rows.iter().find(|r| r.min_density <= params.tol_low).map(|r| r.t),
    };
    let lower_ok = t0.is_some();
    Ok(DC1Report {
        checkpoints: checkpoints.to_vec(),
        rows,
        t0,
        upper_ok,
        lower_ok,
        verdict: upper_ok && lower_ok,
        densities,
    })
}

pub(crate) fn zero_ratio() -> BigRational {
    BigRational::zero()
}
