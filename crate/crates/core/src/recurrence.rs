//! Visit-time densities, finite-horizon recurrence levels, statistical
//! ω-limit estimates and the catalog of chain targets.
//!
//! Densities are exact fractions. Banach densities are extrema of window
//! averages over all windows of length at least `min_window`, found by
//! Dinkelbach iteration over prefix sums.

use std::collections::BTreeSet;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{convex_combine, ratio, weakstar_distance, CylinderMeasure, MeasureChain, MeasureSegment};
use crate::shiftspace::{max_word_len, prefix_distance, LazyPoint, ShiftModel, SymbolWord};

/// Sorted visit times in [1, horizon].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexSet {
    pub horizon: u64,
    pub members: Vec<u64>,
}

impl IndexSet {
    pub fn new(horizon: u64, mut members: Vec<u64>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.first().is_some_and(|&m| m == 0) || members.last().is_some_and(|&m| m > horizon) {
            return Err(Error::InvalidParameter(format!("indices must lie in [1, {horizon}]")));
        }
        Ok(Self { horizon, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn prefix_counts(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.horizon as usize + 1];
        let mut it = self.members.iter().peekable();
        for n in 1..=self.horizon {
            let hit = it.next_if(|&&m| m == n).is_some();
            out[n as usize] = out[n as usize - 1] + hit as u64;
        }
        out
    }

    /// Run-length CSV: `start,length` per maximal block.
    pub fn to_rle_csv(&self) -> String {
        let mut out = String::from("start,length\n");
        let mut i = 0;
        while i < self.members.len() {
            let start = self.members[i];
            let mut j = i;
            while j + 1 < self.members.len() && self.members[j + 1] == self.members[j] + 1 {
                j += 1;
            }
            out.push_str(&format!("{start},{}\n", j - i + 1));
            i = j + 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DensityQuad {
    pub upper: Ratio<u64>,
    pub lower: Ratio<u64>,
    pub banach_upper: Ratio<u64>,
    pub banach_lower: Ratio<u64>,
    pub horizon: u64,
    pub min_window: u64,
}

fn frac_f64(r: &Ratio<u64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl DensityQuad {
    /// (d̄, d_, B*, B_*) as floats.
    pub fn values(&self) -> [f64; 4] {
        [frac_f64(&self.upper), frac_f64(&self.lower), frac_f64(&self.banach_upper), frac_f64(&self.banach_lower)]
    }
}

/// Window (count, length) maximizing count/length over windows of length ≥ w.
fn max_window_density(prefix: &[u64], w: usize) -> (u64, u64) {
    let h = prefix.len() - 1;
    let (mut c, mut l) = (prefix[h], h as u64);
    loop {
        let (ci, li) = (c as i128, l as i128);
        let g = |i: usize| prefix[i] as i128 * li - ci * i as i128;
        let mut min_g = i128::MAX;
        let mut min_at = 0usize;
        let mut best = (i128::MIN, 0usize, 0usize);
        for j in w..=h {
            let i = j - w;
            if g(i) < min_g {
                min_g = g(i);
                min_at = i;
            }
            let v = g(j) - min_g;
            if v > best.0 {
                best = (v, min_at, j);
            }
        }
        if best.0 <= 0 {
            return (c, l);
        }
        c = prefix[best.2] - prefix[best.1];
        l = (best.2 - best.1) as u64;
    }
}

fn frac(c: u64, l: u64) -> Ratio<u64> {
    Ratio::new(c, l)
}

/// d̄, d_ over the tail n ∈ [max(⌈H/2⌉, w), H]; B*, B_* over all windows of
/// length ≥ w.
pub fn density_quad(set: &IndexSet, min_window: u64) -> Result<DensityQuad> {
    let h = set.horizon;
    if min_window == 0 || min_window > h {
        return Err(Error::MinWindowTooLarge { window: min_window, horizon: h });
    }
    let prefix = set.prefix_counts();
    let from = h.div_ceil(2).max(min_window);
    let (mut upper, mut lower) = (frac(prefix[from as usize], from), frac(prefix[from as usize], from));
    for n in from..=h {
        let d = frac(prefix[n as usize], n);
        if d > upper {
            upper = d;
        }
        if d < lower {
            lower = d;
        }
    }
    let w = min_window as usize;
    let (c, l) = max_window_density(&prefix, w);
    let complement: Vec<u64> = prefix.iter().enumerate().map(|(n, &p)| n as u64 - p).collect();
    let (cc, cl) = max_window_density(&complement, w);
    Ok(DensityQuad {
        upper,
        lower,
        banach_upper: frac(c, l),
        banach_lower: frac(cl - cc, cl),
        horizon: h,
        min_window,
    })
}

/// Default window √H.
pub fn default_min_window(horizon: u64) -> u64 {
    ((horizon as f64).sqrt().floor() as u64).max(1)
}

#[derive(Debug, Clone)]
pub enum Target {
    Cylinder(SymbolWord),
    Ball { center: LazyPoint, eps: f64 },
}

/// {0 < n ≤ horizon : f^n x ∈ target}.
pub fn visit_times(x: &LazyPoint, target: &Target, horizon: u64, depth: usize) -> Result<IndexSet> {
    let q = x.q();
    let (len, check): (u64, Box<dyn Fn(&[u8]) -> bool>) = match target {
        Target::Cylinder(w) => {
            let w = w.symbols().to_vec();
            (w.len() as u64, Box::new(move |s: &[u8]| s == w.as_slice()))
        }
        Target::Ball { center, eps } => {
            let l = max_word_len(q, depth) as u64;
            let c = center.orbit_window(0, l - 1)?.into_symbols();
            let eps = *eps;
            (l, Box::new(move |s: &[u8]| prefix_distance(q, depth, s, &c) < eps))
        }
    };
    let mut coords = Vec::new();
    x.extend_coords(0, horizon + len + 1, &mut coords)?;
    let members = (1..=horizon).filter(|&n| check(&coords[n as usize..(n + len) as usize])).collect();
    IndexSet::new(horizon, members)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RecurrenceClass {
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "W\\AP")]
    WNotAp,
    #[serde(rename = "QW\\W")]
    QwNotW,
    #[serde(rename = "BR\\QW")]
    BrNotQw,
    #[serde(rename = "Rec\\BR")]
    RecNotBr,
    NonRecurrent,
}

impl RecurrenceClass {
    /// Whether the class lies inside the given level (AP ⊆ W ⊆ QW ⊆ BR ⊆ Rec).
    pub fn consistent_with(self, level: RecurrenceClass) -> bool {
        self <= level
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceParams {
    pub tau: f64,
    pub min_window: Option<u64>,
    pub transitivity_len: usize,
}

impl Default for RecurrenceParams {
    fn default() -> Self {
        Self { tau: 0.01, min_window: None, transitivity_len: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub class: RecurrenceClass,
    pub quad: DensityQuad,
    pub returns: u64,
    pub transitivity: f64,
    /// Densities within τ/10 of τ.
    pub near_threshold: bool,
}

/// Admissible words of length `l` in lexicographic order.
pub fn admissible_words(model: &ShiftModel, l: usize) -> Result<Vec<SymbolWord>> {
    let q = model.q();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..l {
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
        layer = next;
    }
    let words: Vec<SymbolWord> = layer.into_iter().map(SymbolWord::new).collect();
    if let ShiftModel::Beta(_) = model {
        return words.into_iter().filter_map(|w| model.word_admissible(&w).map(|ok| ok.then_some(w)).transpose()).collect();
    }
    Ok(words)
}

/// Fraction of admissible length-`l` words seen in x on [0, horizon + l).
pub fn transitivity_score(model: &ShiftModel, x: &LazyPoint, l: usize, horizon: u64) -> Result<f64> {
    let words = admissible_words(model, l)?;
    let mut coords = Vec::new();
    x.extend_coords(0, horizon + l as u64, &mut coords)?;
    let seen: BTreeSet<&[u8]> = coords.windows(l).collect();
    let hit = words.iter().filter(|w| seen.contains(w.symbols())).count();
    Ok(hit as f64 / words.len() as f64)
}

fn near(v: f64, tau: f64) -> bool {
    (v - tau).abs() < tau / 10.0
}

/// Finite-horizon recurrence level of x from its returns to B(x, ε).
pub fn classify_recurrence(
    model: &ShiftModel,
    x: &LazyPoint,
    eps: f64,
    horizon: u64,
    depth: usize,
    params: &RecurrenceParams,
) -> Result<RecurrenceReport> {
    let set = visit_times(x, &Target::Ball { center: x.clone(), eps }, horizon, depth)?;
    let w = params.min_window.unwrap_or_else(|| default_min_window(horizon));
    let quad = density_quad(&set, w)?;
    let [upper, lower, bu, bl] = quad.values();
    let tau = params.tau;
    let class = if bl >= tau {
        RecurrenceClass::Ap
    } else if lower >= tau {
        RecurrenceClass::WNotAp
    } else if upper >= tau {
        RecurrenceClass::QwNotW
    } else if bu >= tau {
        RecurrenceClass::BrNotQw
    } else if !set.is_empty() {
        RecurrenceClass::RecNotBr
    } else {
        RecurrenceClass::NonRecurrent
    };
    let transitivity = transitivity_score(model, x, params.transitivity_len, horizon)?;
    Ok(RecurrenceReport {
        class,
        returns: set.len() as u64,
        near_threshold: [upper, lower, bu, bl].iter().any(|&v| near(v, tau)),
        quad,
        transitivity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaEstimate {
    pub depth: usize,
    pub tau: f64,
    pub horizon: u64,
    /// Per visited cylinder, its density quad.
    pub quads: Vec<(SymbolWord, DensityQuad)>,
    pub banach_lower: BTreeSet<SymbolWord>,
    pub lower: BTreeSet<SymbolWord>,
    pub upper: BTreeSet<SymbolWord>,
    pub banach_upper: BTreeSet<SymbolWord>,
    pub omega: BTreeSet<SymbolWord>,
}

impl OmegaEstimate {
    /// (ω_{B_*}, ω_{d_}, ω_{d̄}, ω_{B*}, ω_f)
    pub fn chain(&self) -> [&BTreeSet<SymbolWord>; 5] {
        [&self.banach_lower, &self.lower, &self.upper, &self.banach_upper, &self.omega]
    }

    pub fn is_nested(&self) -> bool {
        self.chain().windows(2).all(|p| p[0].is_subset(p[1]))
    }
}

/// Per depth-L cylinder densities of the visit set and the four ξ-estimates.
pub fn statistical_omega(x: &LazyPoint, l: usize, horizon: u64, tau: f64, min_window: Option<u64>) -> Result<OmegaEstimate> {
    let w = min_window.unwrap_or_else(|| default_min_window(horizon));
    if w == 0 || w > horizon {
        return Err(Error::MinWindowTooLarge { window: w, horizon });
    }
    let mut coords = Vec::new();
    x.extend_coords(0, horizon + l as u64 + 1, &mut coords)?;
    let mut visits: std::collections::BTreeMap<&[u8], Vec<u64>> = Default::default();
    for n in 1..=horizon {
        visits.entry(&coords[n as usize..n as usize + l]).or_default().push(n);
    }
    let tail_from = horizon.div_ceil(2);
    let mut est = OmegaEstimate {
        depth: l,
        tau,
        horizon,
        quads: Vec::new(),
        banach_lower: BTreeSet::new(),
        lower: BTreeSet::new(),
        upper: BTreeSet::new(),
        banach_upper: BTreeSet::new(),
        omega: BTreeSet::new(),
    };
    for (word, times) in visits {
        let word = SymbolWord::new(word.to_vec());
        let in_tail = times.last().is_some_and(|&t| t >= tail_from);
        let quad = density_quad(&IndexSet { horizon, members: times }, w)?;
        let [upper, lower, bu, bl] = quad.values();
        for (v, set) in [
            (bl, &mut est.banach_lower),
            (lower, &mut est.lower),
            (upper, &mut est.upper),
            (bu, &mut est.banach_upper),
        ] {
            if v >= tau {
                set.insert(word.clone());
            }
        }
        if in_tail || bu >= tau {
            est.omega.insert(word.clone());
        }
        est.quads.push((word, quad));
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    Case1,
    Case1p,
    Case2,
    Case2p,
    Case3,
    Case3p,
    Case4,
    Case4p,
    Case5,
    Case5p,
    Case6,
    Case6p,
    /// All five estimates equal and nonempty.
    MinimalLike,
    Unclassified,
}

impl CaseLabel {
    pub fn name(self) -> &'static str {
        match self {
            CaseLabel::Case1 => "Case (1)",
            CaseLabel::Case1p => "Case (1')",
            CaseLabel::Case2 => "Case (2)",
            CaseLabel::Case2p => "Case (2')",
            CaseLabel::Case3 => "Case (3)",
            CaseLabel::Case3p => "Case (3')",
            CaseLabel::Case4 => "Case (4)",
            CaseLabel::Case4p => "Case (4')",
            CaseLabel::Case5 => "Case (5)",
            CaseLabel::Case5p => "Case (5')",
            CaseLabel::Case6 => "Case (6)",
            CaseLabel::Case6p => "Case (6')",
            CaseLabel::MinimalLike => "minimal-like, none of (1)-(6')",
            CaseLabel::Unclassified => "unclassified",
        }
    }

    /// Label from the four relations (equal = true) between consecutive
    /// members of (ω_{B_*}, ω_{d_}, ω_{d̄}, ω_{B*}, ω_f), given ω_{B_*} = ∅.
    pub fn from_relations(eq: [bool; 4]) -> CaseLabel {
        use CaseLabel::*;
        match eq {
            [false, true, true, true] => Case1,
            [false, true, true, false] => Case1p,
            [false, true, false, true] => Case2,
            [false, true, false, false] => Case2p,
            [true, false, true, true] => Case3,
            [true, false, true, false] => Case3p,
            [false, false, true, true] => Case4,
            [false, false, true, false] => Case4p,
            [true, false, false, true] => Case5,
            [true, false, false, false] => Case5p,
            [false, false, false, true] => Case6,
            [false, false, false, false] => Case6p,
            _ => Unclassified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSignature {
    pub label: CaseLabel,
    pub banach_lower_empty: bool,
    /// Equal (true) or strict inclusion (false) between consecutive estimates.
    pub relations: [bool; 4],
}

/// Maps the estimate's inclusion pattern onto Cases (1)-(6').
pub fn case_signature(est: &OmegaEstimate) -> Result<CaseSignature> {
    for (word, quad) in &est.quads {
        if quad.values().iter().any(|&v| near(v, est.tau)) {
            return Err(Error::IndeterminateSignature(format!("cylinder {word} has a density within τ/10 of τ")));
        }
    }
    let c = est.chain();
    let relations = [c[0] == c[1], c[1] == c[2], c[2] == c[3], c[3] == c[4]];
    let empty = c[0].is_empty();
    let label = if relations.iter().all(|&r| r) && !empty {
        CaseLabel::MinimalLike
    } else if empty {
        CaseLabel::from_relations(relations)
    } else {
        CaseLabel::Unclassified
    };
    Ok(CaseSignature { label, banach_lower_empty: empty, relations })
}

/// Case expected for generic points of a chain K inside a transitive
/// BR point: ω_{d_} = ∩ supports, ω_{d̄} = ∪ supports, ω_{B*} = ω_f = X.
pub fn expected_case(model: &ShiftModel, chain: &MeasureChain, l: usize) -> Result<CaseLabel> {
    let mut inter: Option<BTreeSet<SymbolWord>> = None;
    let mut union = BTreeSet::new();
    for seg in chain.segments() {
        for m in [&seg.start, &seg.end] {
            let s: BTreeSet<SymbolWord> = m.support(l)?.into_iter().collect();
            union.extend(s.iter().cloned());
            inter = Some(match inter {
                None => s,
                Some(i) => i.intersection(&s).cloned().collect(),
            });
        }
    }
    let inter = inter.unwrap_or_default();
    let all: BTreeSet<SymbolWord> = admissible_words(model, l)?.into_iter().collect();
    Ok(CaseLabel::from_relations([inter.is_empty(), inter == union, union == all, true]))
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    #[serde(skip)]
    pub chain: MeasureChain,
    pub segments: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetCatalog {
    pub entries: Vec<CatalogEntry>,
    /// ν_1, …, ν_{i_max}.
    #[serde(skip)]
    pub nu: Vec<CylinderMeasure>,
    /// For each ν_i with i ≥ 2, the index j of the μ_j it mixes with μ₁.
    pub nu_partner: Vec<usize>,
    /// d(ν_{i_max}, μ₁): the part of K₃ beyond i_max lies in this ball.
    pub truncation_diameter: f64,
}

impl TargetCatalog {
    pub fn get(&self, i: usize) -> Option<&MeasureChain> {
        self.entries.get(i.checked_sub(1)?).map(|e| &e.chain)
    }
}

fn seg(a: &CylinderMeasure, b: &CylinderMeasure) -> MeasureSegment {
    MeasureSegment { start: a.clone(), end: b.clone() }
}

/// Chains K₁..K₉ from μ₁, μ₂, μ₃ (and any further μ_i), a fully supported μ
/// and ν_i = ((i−1)/i)μ₁ + (1/i)μ_i. When fewer than i_max measures are
/// supplied, μ_i cycles through μ₂, μ₃, ….
pub fn target_catalog(mus: &[CylinderMeasure], mu_full: &CylinderMeasure, i_max: usize) -> Result<TargetCatalog> {
    if mus.len() < 3 {
        return Err(Error::InvalidParameter("at least three measures are required".into()));
    }
    if i_max < 2 {
        return Err(Error::InvalidParameter("i_max must be at least 2".into()));
    }
    let depth = mus[0].depth();
    let supports: Vec<BTreeSet<SymbolWord>> =
        mus.iter().map(|m| m.support(depth).map(|s| s.into_iter().collect())).collect::<Result<_>>()?;
    for i in 0..mus.len() {
        for j in i + 1..mus.len() {
            if !supports[i].is_disjoint(&supports[j]) {
                return Err(Error::SupportOverlap(i + 1, j + 1));
            }
        }
    }
    let q = mu_full.q();
    for s in 0..q {
        let w = SymbolWord::new(vec![s]);
        if mu_full.weight(&w)?.is_zero() {
            return Err(Error::NotFullSupport(format!("cylinder [{w}] has zero weight")));
        }
    }
    let mu1 = &mus[0];
    let mut nu = vec![mu1.clone()];
    let mut nu_partner = vec![1];
    for i in 2..=i_max {
        let j = if i <= mus.len() { i } else { 2 + (i - 2) % (mus.len() - 1) };
        let weight = ratio(i as i64 - 1, i as i64);
        nu.push(convex_combine(mu1, &mus[j - 1], &weight)?);
        nu_partner.push(j);
    }
    let (mu2, mu3) = (&mus[1], &mus[2]);
    let k3: Vec<MeasureSegment> = nu.windows(2).map(|p| seg(&p[0], &p[1])).collect();
    let mut k4 = vec![seg(mu2, mu1)];
    k4.extend(k3.iter().cloned());
    let chains = vec![
        MeasureChain::new(vec![seg(mu1, mu_full)])?,
        MeasureChain::new(vec![seg(mu_full, mu1), seg(mu1, mu2)])?,
        MeasureChain::new(k3)?,
        MeasureChain::new(k4)?,
        MeasureChain::singleton(mu1.clone())?,
        MeasureChain::new(vec![seg(mu1, &nu[1])])?,
        MeasureChain::new(vec![seg(mu1, mu2)])?,
        MeasureChain::new(vec![seg(&nu[1], mu1), seg(mu1, &nu[2.min(nu.len() - 1)])])?,
        MeasureChain::new(vec![seg(mu2, mu1), seg(mu1, mu3)])?,
    ];
    let entries = chains
        .into_iter()
        .enumerate()
        .map(|(i, chain)| CatalogEntry { name: format!("K{}", i + 1), segments: chain.segments().len(), chain })
        .collect();
    let truncation_diameter = weakstar_distance(nu.last().unwrap(), mu1, depth)?.value;
    Ok(TargetCatalog { entries, nu, nu_partner, truncation_diameter })
}
