//! Staged construction of a DC1-scrambled family inside a base cylinder.
//!
//! Stage k copies the stage-(k−1) point on [0, T_{2k(k−1)}], visits a window
//! of the transitive seed, and then alternates roundtrip path orbits toward
//! α_1, …, α_k with separation blocks x_{ξ_1}, …, x_{ξ_k} from the μ-pair
//! lemma, using ε_k = ε/2^k and δ_k = δ₁/2^{k−1}. Each marker is the
//! smallest value meeting its inequality.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use super::{dc1_report, lemma_mu_pair, lemma_path_orbit, mu_threshold, path_threshold};
use super::{DC1Params, DC1Report, DistalPair, MuPairParams, PathParams, DEFAULT_THETA_CAP};
use crate::error::{Error, Result};
use crate::measures::{
    dist_to_chain, empirical_measures, ratio, ratio_to_f64, ser_ratio, weakstar_distance, ChainPoint, CylinderMeasure,
    MeasureChain,
};
use crate::shiftspace::{LazyPoint, ShiftModel, SymbolWord};
use crate::specification::{connect, glue, mixing_gap, smallest_continuation, OrbitPlan, PlanSegment};

/// μ = θμ₁ + (1−θ)μ₂ together with distal pairs generic for μ₁ and μ₂.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mu: CylinderMeasure,
    pub mu1: CylinderMeasure,
    pub mu2: CylinderMeasure,
    pub theta: BigRational,
    pub pairs: Option<(DistalPair, DistalPair)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyConfig {
    pub eps: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub delta1: BigRational,
    pub k_max: usize,
    pub horizon_cap: u64,
    pub metric_depth: usize,
    pub theta_cap: u64,
    /// Return the deepest completed stage instead of failing at the cap.
    pub partial_ok: bool,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            eps: 0.5,
            delta1: ratio(1, 2),
            k_max: 3,
            horizon_cap: u64::MAX / 4,
            metric_depth: 24,
            theta_cap: DEFAULT_THETA_CAP,
            partial_ok: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentRecord {
    pub i: usize,
    pub alpha: ChainPoint,
    /// T_{b+4i−3}
    pub a: u64,
    pub m: u64,
    pub path_threshold: u64,
    pub t1: u64,
    pub t2: u64,
    /// T_{b+4i−3→b+4i−2}
    pub arrow: u64,
    /// T_{b+4i−2}
    pub path_end: u64,
    /// T_{b+4i−1}
    pub sep_start: u64,
    /// T_{b+4i}
    pub sep_end: u64,
    /// M^μ used in the condition on T_{b+4i}.
    pub sep_mu_threshold: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub k: usize,
    pub eps: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub delta: BigRational,
    pub b: usize,
    pub prev_end: Option<u64>,
    pub z_window: (u64, u64),
    pub mu_threshold: u64,
    pub mu_threshold_next: u64,
    pub pair_n: u64,
    pub pair_block: u64,
    pub segments: Vec<SegmentRecord>,
}

impl StageRecord {
    /// Stage markers T_{b+1}, …, T_{b+4k} followed by the arrows.
    pub fn checkpoints(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .segments
            .iter()
            .flat_map(|s| [s.a, s.arrow, s.path_end, s.sep_start, s.sep_end])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleMarkers {
    /// T_1, T_2, … in order.
    pub t: Vec<u64>,
    /// (j, T_{j→j+1}) for every path segment starting at T_j.
    pub arrows: Vec<(usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct ScrambleFamily {
    pub model: ShiftModel,
    pub chain: MeasureChain,
    pub config: FamilyConfig,
    pub seed: SymbolWord,
    pub base: SymbolWord,
    pub depth: usize,
    pub capped: Option<usize>,
    pub zeta: f64,
    pub stages: Vec<StageRecord>,
    pub markers: ScheduleMarkers,
    /// (ξ as symbols 1/2, point), ξ in lexicographic order.
    pub points: Vec<(Vec<u8>, LazyPoint)>,
}

impl ScrambleFamily {
    pub fn horizon(&self) -> u64 {
        self.markers.t.last().copied().unwrap_or(0)
    }

    /// Every marker and arrow, ascending.
    pub fn checkpoints(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.markers.t.iter().copied().chain(self.markers.arrows.iter().map(|a| a.1)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn manifest(&self) -> serde_json::Value {
        let points: Vec<serde_json::Value> = self
            .points
            .iter()
            .map(|(xi, x)| {
                serde_json::json!({
                    "xi": xi.iter().map(|c| c.to_string()).collect::<String>(),
                    "digest": x.digest(),
                })
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "seed": self.seed.to_string(),
            "base": self.base.to_string(),
            "depth": self.depth,
            "capped": self.capped,
            "zeta": self.zeta,
            "horizon": self.horizon(),
            "markers": self.markers,
            "stages": self.stages,
            "points": points,
        })
    }
}

/// Admissible words of length 1..=depth in (length, lex) order, joined by
/// connectors of length K − 1.
pub fn transitive_seed(model: &ShiftModel, depth: usize) -> Result<SymbolWord> {
    let k = mixing_gap(model)?.k as usize;
    let q = model.q();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    let mut out: Vec<u8> = Vec::new();
    for _ in 0..depth {
        let mut next = Vec::new();
        for w in &layer {
            for b in 0..q {
                if w.last().map_or(true, |&a| model.allows(a, b)) {
                    let mut v = w.clone();
                    v.push(b);
                    next.push(v);
                }
            }
        }
        for w in &next {
            if let Some(&last) = out.last() {
                out.extend_from_slice(connect(model, last, w[0], k - 1)?.symbols());
            }
            out.extend_from_slice(w);
        }
        layer = next;
    }
    Ok(SymbolWord::new(out))
}

/// Chain points with rational θ by increasing denominator, segments
/// interleaved, repeated measures skipped.
pub fn alpha_sequence(chain: &MeasureChain, count: usize) -> Result<Vec<ChainPoint>> {
    const MAX_DEN: i64 = 64;
    let mut out: Vec<ChainPoint> = Vec::new();
    let mut seen: Vec<CylinderMeasure> = Vec::new();
    'outer: for den in 1..=MAX_DEN {
        for num in 0..=den {
            if num.gcd(&den) != 1 {
                continue;
            }
            for segment in 0..chain.segments().len() {
                let cp = ChainPoint { segment, theta: ratio(num, den) };
                let m = chain.point(&cp)?;
                if seen.contains(&m) {
                    continue;
                }
                seen.push(m);
                out.push(cp);
                if out.len() == count {
                    break 'outer;
                }
            }
        }
    }
    let distinct = out.len();
    if distinct == 0 {
        return Err(Error::EmptyChain);
    }
    let mut i = 0;
    while out.len() < count {
        out.push(out[i % distinct].clone());
        i += 1;
    }
    Ok(out)
}

fn pow2(k: usize) -> BigInt {
    BigInt::one() << k
}

/// Smallest T with δ·T > x.
fn smallest_above(delta: &BigRational, x: u64) -> Result<u64> {
    let v: BigInt = (BigRational::from_integer(x.into()) / delta).floor().to_integer() + 1;
    v.to_u64().ok_or(Error::HorizonCapExceeded { achieved: 0, attempted: 0 })
}

fn delta_exceeds(delta: &BigRational, t: u64, x: u64) -> bool {
    delta * BigRational::from_integer(t.into()) > BigRational::from_integer(x.into())
}

struct Capped {
    cap: u64,
    k: usize,
}

impl Capped {
    fn add(&self, a: u64, b: u64) -> Result<u64> {
        let v = a.checked_add(b).filter(|&v| v <= self.cap);
        v.ok_or(Error::HorizonCapExceeded { achieved: self.k - 1, attempted: self.k })
    }

    fn check(&self, v: u64) -> Result<u64> {
        self.add(v, 0)
    }
}

fn seed_point(model: &ShiftModel, seed: &SymbolWord) -> Result<LazyPoint> {
    let last = *seed.symbols().last().ok_or_else(|| Error::InvalidParameter("empty seed".into()))?;
    let (pre, cycle) = smallest_continuation(model, last)?;
    let prefix = seed.concat(&SymbolWord::new(pre));
    LazyPoint::prefix_periodic(model.q(), &prefix, Some(&SymbolWord::new(cycle)))
}

/// Builds x_ξ for every ξ ∈ {1,2}^{k_max}.
pub fn build_scramble_family(
    model: &ShiftModel,
    chain: &MeasureChain,
    dec: &Decomposition,
    seed: &SymbolWord,
    base: &SymbolWord,
    config: &FamilyConfig,
) -> Result<ScrambleFamily> {
    let (p1, p2) = dec.pairs.as_ref().ok_or(Error::MissingDistalPairs)?;
    if config.k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    if base.is_empty() || base.len() > seed.len() || base.symbols() != &seed.symbols()[..base.len()] {
        return Err(Error::InvalidParameter("base cylinder must be a nonempty prefix of the seed".into()));
    }
    let gap = mixing_gap(model)?.k;
    let depth = config.metric_depth;
    let z = seed_point(model, seed)?;
    let lz = (seed.len() + config.k_max) as u64;
    let alphas = alpha_sequence(chain, config.k_max)?;
    let mu = &dec.mu;

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut t: Vec<u64> = Vec::new();
    let mut arrows = Vec::new();
    let mut points: Vec<(Vec<u8>, LazyPoint)> = Vec::new();
    let mut capped = None;
    let mut zeta = f64::INFINITY;

    for k in 1..=config.k_max {
        let cap = Capped { cap: config.horizon_cap, k };
        let attempt = (|| -> Result<(StageRecord, Vec<(Vec<u8>, LazyPoint)>)> {
            let eps_k = config.eps / (1u64 << k) as f64;
            let delta_k = &config.delta1 / BigRational::from_integer(pow2(k - 1));
            let b = 2 * k * (k - 1);
            let prev_end = (k > 1).then(|| t[b - 1]);
            let z_start = match prev_end {
                Some(p) => cap.add(p, gap)?,
                None => 0,
            };
            let z_end = cap.add(z_start, lz - 1)?;
            let first = if k == 1 { cap.add(z_end, 2 * gap)? } else { cap.add(z_end, gap)? };

            let pair = lemma_mu_pair(
                model,
                &dec.mu1,
                &dec.mu2,
                (p1, p2),
                &MuPairParams {
                    theta: dec.theta.clone(),
                    eps: eps_k,
                    delta: ratio_to_f64(&delta_k),
                    metric_depth: depth,
                    theta_cap: config.theta_cap,
                },
            )?;
            let mu_thr = mu_threshold(model, chain, mu, eps_k, depth)?;
            let mu_thr_next = mu_threshold(model, chain, mu, eps_k / 2.0, depth)?;

            let mut segments = Vec::new();
            let mut paths = Vec::new();
            let mut a = first;
            for i in 1..=k {
                let alpha = chain.point(&alphas[i - 1])?;
                let thr = path_threshold(model, chain, mu, &alpha, eps_k, true, depth)?;
                let m = smallest_above(&delta_k, cap.add(a, 2 * gap)?.max(pair.n))?.max(thr.max(mu_thr) + 1);
                let params = PathParams { eps: eps_k, n: Some(m), min_end: m, roundtrip: true, metric_depth: depth };
                let orbit = lemma_path_orbit(model, chain, mu, &alpha, &params)?;
                let (t1, t2) = (orbit.markers.t1.unwrap(), orbit.markers.t2.unwrap());
                let arrow = cap.add(a, t1)?;
                let path_end = cap.add(a, t2)?;
                let sep_start = cap.add(path_end, 2 * gap)?;
                let sep_mu = if i < k { mu_thr } else { mu_thr_next };
                let need = cap.add(sep_start, 2 * gap)?.max(sep_mu);
                let sep_end = cap.check(smallest_above(&delta_k, need)?.max(cap.add(sep_start, pair.n + 1)?))?;
                segments.push(SegmentRecord {
                    i,
                    alpha: alphas[i - 1].clone(),
                    a,
                    m,
                    path_threshold: thr,
                    t1,
                    t2,
                    arrow,
                    path_end,
                    sep_start,
                    sep_end,
                    sep_mu_threshold: sep_mu,
                });
                paths.push(orbit.point);
                a = cap.add(sep_end, 2 * gap)?;
            }

            let parents: Vec<(Vec<u8>, Option<&LazyPoint>)> = if k == 1 {
                vec![(Vec::new(), None)]
            } else {
                points.iter().map(|(xi, x)| (xi.clone(), Some(x))).collect()
            };
            let z_shift = z.shift(k as u64 - 1);
            let mut next_points = Vec::new();
            for (prefix, parent) in parents {
                for c in [1u8, 2] {
                    let mut xi = prefix.clone();
                    xi.push(c);
                    let mut plan = Vec::new();
                    if let (Some(x), Some(p)) = (parent, prev_end) {
                        plan.push(PlanSegment { point: x.clone(), a: 0, b: p });
                    }
                    plan.push(PlanSegment { point: z_shift.clone(), a: z_start, b: z_end });
                    for (seg, path) in segments.iter().zip(&paths) {
                        plan.push(PlanSegment { point: path.clone(), a: seg.a, b: seg.path_end });
                        let sep = if xi[seg.i - 1] == 1 { &pair.x1 } else { &pair.x2 };
                        plan.push(PlanSegment { point: sep.clone(), a: seg.sep_start, b: seg.sep_end });
                    }
                    let x = glue(&OrbitPlan::new(model.clone(), plan))?;
                    next_points.push((xi, x));
                }
            }
            let record = StageRecord {
                k,
                eps: eps_k,
                delta: delta_k,
                b,
                prev_end,
                z_window: (z_start, z_end),
                mu_threshold: mu_thr,
                mu_threshold_next: mu_thr_next,
                pair_n: pair.n,
                pair_block: pair.block,
                segments,
            };
            zeta = zeta.min(pair.zeta);
            Ok((record, next_points))
        })();
        match attempt {
            Ok((record, next_points)) => {
                for s in &record.segments {
                    arrows.push((t.len() + 1, s.arrow));
                    t.extend([s.a, s.path_end, s.sep_start, s.sep_end]);
                }
                stages.push(record);
                points = next_points;
            }
            Err(Error::HorizonCapExceeded { .. }) if config.partial_ok && k > 1 => {
                capped = Some(k);
                break;
            }
            Err(Error::HorizonCapExceeded { .. }) => {
                return Err(Error::HorizonCapExceeded { achieved: k - 1, attempted: k });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ScrambleFamily {
        model: model.clone(),
        chain: chain.clone(),
        config: config.clone(),
        seed: seed.clone(),
        base: base.clone(),
        depth: stages.len(),
        capped,
        zeta,
        stages,
        markers: ScheduleMarkers { t, arrows },
        points,
    })
}

/// Re-derives every schedule relation from the recorded markers.
pub fn replay_schedule(fam: &ScrambleFamily) -> Vec<String> {
    let mut failures = Vec::new();
    let gap = match mixing_gap(&fam.model) {
        Ok(g) => g.k,
        Err(e) => return vec![e.to_string()],
    };
    let lz = (fam.seed.len() + fam.config.k_max) as u64;
    let mut fail = |cond: bool, what: String| {
        if !cond {
            failures.push(what);
        }
    };
    let mut expected_t = Vec::new();
    for st in &fam.stages {
        let k = st.k;
        let delta = &fam.config.delta1 / BigRational::from_integer(pow2(k - 1));
        fail(delta == st.delta, format!("stage {k}: δ_k"));
        fail(st.b == 2 * k * (k - 1), format!("stage {k}: b"));
        let z_start = st.prev_end.map_or(0, |p| p + gap);
        fail(st.z_window == (z_start, z_start + lz - 1), format!("stage {k}: seed window"));
        let mut a = if k == 1 { st.z_window.1 + 2 * gap } else { st.z_window.1 + gap };
        for s in &st.segments {
            let i = s.i;
            fail(s.a == a, format!("stage {k}, i={i}: T_(4i-3) = T_(4i-4) + 2K"));
            fail(s.m > st.mu_threshold && s.m >= s.path_threshold, format!("stage {k}, i={i}: M > M^μ"));
            fail(
                delta_exceeds(&delta, s.m, (s.a + 2 * gap).max(st.pair_n)),
                format!("stage {k}, i={i}: δM > max(T + 2K, N)"),
            );
            fail(s.m < s.t1 && s.t1 < s.t2, format!("stage {k}, i={i}: M < t1 < t2"));
            fail(s.arrow == s.a + s.t1 && s.path_end == s.a + s.t2, format!("stage {k}, i={i}: path markers"));
            fail(s.sep_start == s.path_end + 2 * gap, format!("stage {k}, i={i}: T_(4i-1) = T_(4i-2) + 2K"));
            let sep_mu = if i < k { st.mu_threshold } else { st.mu_threshold_next };
            fail(s.sep_mu_threshold == sep_mu, format!("stage {k}, i={i}: M^μ for T_4i"));
            fail(
                delta_exceeds(&delta, s.sep_end, (s.sep_start + 2 * gap).max(sep_mu)),
                format!("stage {k}, i={i}: δT_4i > max(T_(4i-1) + 2K, M^μ)"),
            );
            fail(s.sep_end - s.sep_start > st.pair_n, format!("stage {k}, i={i}: T_4i − T_(4i-1) > N"));
            expected_t.extend([s.a, s.path_end, s.sep_start, s.sep_end]);
            a = s.sep_end + 2 * gap;
        }
        if let Some(p) = st.prev_end {
            fail(expected_t.len() > st.b && expected_t[st.b - 1] == p, format!("stage {k}: previous end"));
        }
    }
    fail(expected_t == fam.markers.t, "marker list".into());
    fail(fam.markers.t.windows(2).all(|w| w[0] < w[1]), "markers strictly increasing".into());
    failures
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub name: String,
    pub passed: bool,
    pub checked: u64,
    pub violations: u64,
    /// Largest ratio of observed value to bound (tracking clauses).
    pub worst: f64,
    pub detail: String,
}

impl ClauseResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), passed: true, checked: 0, violations: 0, worst: 0.0, detail: String::new() }
    }

    fn record(&mut self, ok: bool, note: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            self.passed = false;
            if self.detail.is_empty() {
                self.detail = note();
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub clauses: Vec<ClauseResult>,
    /// (i, j, report) for every unordered pair of points.
    pub dc1: Vec<(usize, usize, DC1Report)>,
    /// Certified differing coordinate per pair.
    pub witnesses: Vec<(usize, usize, Option<u64>)>,
    pub passed: bool,
}

impl FamilyReport {
    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

const WITNESS_SCAN: u64 = 1 << 16;

/// Re-audits a built family; failures are reported, not raised.
pub fn verify_family(fam: &ScrambleFamily, params: &DC1Params) -> Result<FamilyReport> {
    let depth = fam.config.metric_depth;
    let m = fam.chain.segments()[0].start.depth();
    let truncation = (-(depth as f64)).exp2();

    let mut tracking = ClauseResult::new("tracking");
    let mut approach = ClauseResult::new("alpha_approach");
    for (xi, x) in &fam.points {
        for st in &fam.stages {
            let delta = ratio_to_f64(&st.delta);
            let bound = 3.0 * st.eps + 5.0 * delta + truncation;
            let cps = st.checkpoints();
            let measures = empirical_measures(x, &cps, m)?;
            for (n, e) in cps.iter().zip(&measures) {
                let d = dist_to_chain(e, &fam.chain, depth)?.value;
                tracking.worst = tracking.worst.max(d / bound);
                tracking.record(d <= bound, || format!("ξ={xi:?} n={n}: {d} > {bound}"));
            }
            let abound = 3.0 * st.eps + 2.0 * delta;
            for s in &st.segments {
                let at = cps.binary_search(&s.arrow).expect("arrow is a checkpoint");
                let d = weakstar_distance(&measures[at], &fam.chain.point(&s.alpha)?, depth)?.value;
                approach.worst = approach.worst.max(d / abound);
                approach.record(d <= abound, || format!("ξ={xi:?} n={}: {d} > {abound}", s.arrow));
            }
        }
    }

    let mut base = ClauseResult::new("base_cylinder");
    for (xi, x) in &fam.points {
        let w = x.orbit_window(0, fam.base.len() as u64 - 1)?;
        base.record(w == fam.base, || format!("ξ={xi:?} starts with {w}"));
    }

    let checkpoints = fam.checkpoints();
    let mut pairwise = ClauseResult::new("pairwise_dc1");
    let mut distinct = ClauseResult::new("distinct");
    let mut dc1 = Vec::new();
    let mut witnesses = Vec::new();
    for i in 0..fam.points.len() {
        for j in i + 1..fam.points.len() {
            let (xi, x) = &fam.points[i];
            let (eta, y) = &fam.points[j];
            // Densities only count once the pair has been separated.
            let from = xi
                .iter()
                .zip(eta)
                .position(|(a, b)| a != b)
                .and_then(|s| fam.stages.get(s).map(|st| st.segments[s].sep_start))
                .unwrap_or(0);
            let cps: Vec<u64> = checkpoints.iter().copied().filter(|&n| n >= from).collect();
            let report = dc1_report(x, y, &cps, params, depth)?;
            pairwise.record(report.verdict, || format!("pair {xi:?}, {eta:?}: verdict false"));
            dc1.push((i, j, report));

            let s = xi.iter().zip(eta).position(|(a, b)| a != b);
            let witness = match (s, fam.stages.last()) {
                (Some(s), Some(st)) => {
                    let seg = &st.segments[s];
                    let end = seg.sep_end.min(seg.sep_start + WITNESS_SCAN);
                    let mut found = None;
                    for n in seg.sep_start..=end {
                        if x.coord(n)? != y.coord(n)? {
                            found = Some(n);
                            break;
                        }
                    }
                    found
                }
                _ => None,
            };
            distinct.record(witness.is_some(), || format!("pair {xi:?}, {eta:?}: no differing coordinate"));
            witnesses.push((i, j, witness));
        }
    }

    let mut schedule = ClauseResult::new("schedule");
    let failures = replay_schedule(fam);
    schedule.checked = 1;
    if !failures.is_empty() {
        schedule.passed = false;
        schedule.violations = failures.len() as u64;
        schedule.detail = failures.join("; ");
    }

    let clauses = vec![tracking, approach, pairwise, base, distinct, schedule];
    let passed = clauses.iter().all(|c| c.passed);
    Ok(FamilyReport { clauses, dc1, witnesses, passed })
}
