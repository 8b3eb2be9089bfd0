//! Shift spaces over a finite alphabet, words, lazily evaluated points and the
//! point metric induced by the canonical cylinder family.
//!
//! Points are stored as a sorted list of runs. Each run repeats a word from a
//! given phase until the next run starts; the last run never ends. Every
//! construction in this crate produces such points, which keeps coordinate
//! access logarithmic and lets window statistics be counted per period.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::betashift::BetaParams;
use crate::error::{Error, Result};

/// Default number of cylinder functions in the truncated metric.
pub const DEFAULT_METRIC_DEPTH: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    q: u8,
}

impl Alphabet {
    pub fn new(q: usize) -> Result<Self> {
        if !(2..=36).contains(&q) {
            return Err(Error::BadAlphabet(q));
        }
        Ok(Self { q: q as u8 })
    }

    pub fn size(&self) -> u8 {
        self.q
    }
}

fn symbol_char(s: u8) -> char {
    std::char::from_digit(s as u32, 36).expect("symbol below 36")
}

fn char_symbol(c: char) -> Option<u8> {
    c.to_digit(36).map(|d| d as u8)
}

/// A finite word over the alphabet `0..q`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SymbolWord(Vec<u8>);

impl SymbolWord {
    pub fn new(symbols: Vec<u8>) -> Self {
        Self(symbols)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Parses a digit string (`0-9a-z`).
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| char_symbol(c).ok_or_else(|| Error::Parse(format!("bad symbol {c:?} in {s:?}"))))
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }

    pub fn parse_checked(s: &str, q: u8) -> Result<Self> {
        let w = Self::parse(s)?;
        w.check_alphabet(q)?;
        Ok(w)
    }

    pub fn check_alphabet(&self, q: u8) -> Result<()> {
        match self.0.iter().find(|&&s| s >= q) {
            Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, q }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn into_symbols(self) -> Vec<u8> {
        self.0
    }

    pub fn concat(&self, other: &SymbolWord) -> SymbolWord {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        SymbolWord(v)
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{}", symbol_char(s))?;
        }
        Ok(())
    }
}

impl From<&[u8]> for SymbolWord {
    fn from(s: &[u8]) -> Self {
        Self(s.to_vec())
    }
}

impl Serialize for SymbolWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SymbolWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SymbolWord::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// The shift space a construction lives in.
#[derive(Debug, Clone)]
pub enum ShiftModel {
    FullShift { q: u8 },
    Sft { q: u8, adjacency: Vec<Vec<bool>>, exponent: usize },
    Beta(Arc<BetaParams>),
}

impl ShiftModel {
    pub fn full(q: usize) -> Result<Self> {
        Ok(Self::FullShift { q: Alphabet::new(q)?.size() })
    }

    /// Builds an SFT and rejects adjacency matrices that are not primitive.
    pub fn sft(adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let q = Alphabet::new(adjacency.len())?.size();
        if adjacency.iter().any(|row| row.len() != q as usize) {
            return Err(Error::Parse("adjacency matrix must be square".into()));
        }
        let exponent = primitivity_exponent(&adjacency)?;
        Ok(Self::Sft { q, adjacency, exponent })
    }

    /// The SFT on {0,1} forbidding the word 11.
    pub fn golden_mean() -> Self {
        Self::sft(vec![vec![true, true], vec![true, false]]).expect("golden mean is mixing")
    }

    pub fn beta(params: BetaParams) -> Self {
        Self::Beta(Arc::new(params))
    }

    pub fn q(&self) -> u8 {
        match self {
            Self::FullShift { q } | Self::Sft { q, .. } => *q,
            Self::Beta(p) => p.alphabet_size(),
        }
    }

    /// Whether symbol `b` may follow symbol `a`. Only meaningful for
    /// full shifts and SFTs.
    pub fn allows(&self, a: u8, b: u8) -> bool {
        match self {
            Self::FullShift { .. } => true,
            Self::Sft { adjacency, .. } => adjacency[a as usize][b as usize],
            Self::Beta(_) => true,
        }
    }

    pub fn word_admissible(&self, w: &SymbolWord) -> Result<bool> {
        w.check_alphabet(self.q())?;
        match self {
            Self::FullShift { .. } => Ok(true),
            Self::Sft { .. } => Ok(w.symbols().windows(2).all(|p| self.allows(p[0], p[1]))),
            Self::Beta(p) => p.parry_admissible(w.symbols()),
        }
    }

    /// Admissibility of the bi-infinite repetition of `w`.
    pub fn self_concatenable(&self, w: &SymbolWord) -> Result<bool> {
        if w.is_empty() {
            return Ok(false);
        }
        match self {
            Self::Beta(p) => {
                let reps = p.digits() / w.len() + 2;
                let long: Vec<u8> = w.symbols().iter().copied().cycle().take(reps * w.len()).collect();
                p.parry_admissible(&long)
            }
            _ => {
                let last = *w.symbols().last().unwrap();
                Ok(self.word_admissible(w)? && self.allows(last, w.symbols()[0]))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            Self::FullShift { q } => ModelFile { kind: "full".into(), q: Some(*q as usize), ..Default::default() },
            Self::Sft { adjacency, .. } => ModelFile {
                kind: "sft".into(),
                q: Some(adjacency.len()),
                adjacency: Some(adjacency.iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()),
                ..Default::default()
            },
            Self::Beta(p) => ModelFile {
                kind: "beta".into(),
                beta: Some(p.beta()),
                digits: Some(p.digits()),
                ..Default::default()
            },
        }
    }

    /// Hex digest of the canonical model description.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.to_file()).expect("model serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// On-disk model description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digits: Option<usize>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<ShiftModel> {
        match self.kind.as_str() {
            "full" => ShiftModel::full(self.q.ok_or_else(|| Error::Parse("full model needs q".into()))?),
            "sft" => {
                let adj = self.adjacency.ok_or_else(|| Error::Parse("sft model needs adjacency".into()))?;
                if let Some(q) = self.q {
                    if q != adj.len() {
                        return Err(Error::Parse(format!("q = {q} but adjacency has {} rows", adj.len())));
                    }
                }
                let mut rows = Vec::with_capacity(adj.len());
                for row in adj {
                    let r = row
                        .into_iter()
                        .map(|v| match v {
                            0 => Ok(false),
                            1 => Ok(true),
                            _ => Err(Error::Parse(format!("adjacency entry {v} is not 0/1"))),
                        })
                        .collect::<Result<Vec<bool>>>()?;
                    rows.push(r);
                }
                ShiftModel::sft(rows)
            }
            "beta" => {
                let beta = self.beta.ok_or_else(|| Error::Parse("beta model needs beta".into()))?;
                let digits = self.digits.unwrap_or(64);
                Ok(ShiftModel::beta(BetaParams::new(beta, digits)?))
            }
            other => Err(Error::Parse(format!("unknown model kind {other:?}"))),
        }
    }
}

fn bool_matmul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    out[i][j] |= b[k][j];
                }
            }
        }
    }
    out
}

/// Smallest p with A^p strictly positive, searched up to the Wielandt bound.
pub fn primitivity_exponent(adj: &[Vec<bool>]) -> Result<usize> {
    let n = adj.len();
    let cap = (n - 1) * (n - 1) + 1;
    let mut power = adj.to_vec();
    for p in 1..=cap {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return Ok(p);
        }
        power = bool_matmul(&power, adj);
    }
    Err(Error::NotMixing(format!("no power up to {cap} is strictly positive")))
}

/// Number of cylinders of length 1..=l over q symbols.
pub fn cylinders_up_to(q: u8, l: usize) -> u64 {
    let q = q as u64;
    let mut total = 0u64;
    let mut p = 1u64;
    for _ in 0..l {
        p = p.saturating_mul(q);
        total = total.saturating_add(p);
    }
    total
}

/// Word length needed so that the first `depth` canonical cylinders are covered.
pub fn max_word_len(q: u8, depth: usize) -> usize {
    let mut l = 0;
    while cylinders_up_to(q, l) < depth as u64 {
        l += 1;
    }
    l
}

/// 1-based position of the cylinder [w] in the canonical order
/// (length first, then lexicographic).
pub fn cylinder_index(q: u8, w: &[u8]) -> u64 {
    let mut rank = 0u64;
    for &s in w {
        rank = rank.saturating_mul(q as u64).saturating_add(s as u64);
    }
    cylinders_up_to(q, w.len() - 1).saturating_add(rank).saturating_add(1)
}

/// The word of the k-th canonical cylinder (k ≥ 1).
pub fn cylinder_word(q: u8, k: u64) -> SymbolWord {
    assert!(k >= 1);
    let mut l = 1;
    while cylinders_up_to(q, l) < k {
        l += 1;
    }
    let mut rank = k - 1 - cylinders_up_to(q, l - 1);
    let mut out = vec![0u8; l];
    for slot in out.iter_mut().rev() {
        *slot = (rank % q as u64) as u8;
        rank /= q as u64;
    }
    SymbolWord(out)
}

/// Truncated distance between two points given their length-`L` prefixes,
/// `L = max_word_len(q, depth)`.
pub fn prefix_distance(q: u8, depth: usize, x: &[u8], y: &[u8]) -> f64 {
    let l = max_word_len(q, depth);
    debug_assert!(x.len() >= l && y.len() >= l);
    let mut total = 0.0;
    let mut rank_x = 0u64;
    let mut rank_y = 0u64;
    let mut differ = false;
    for len in 1..=l {
        rank_x = rank_x * q as u64 + x[len - 1] as u64;
        rank_y = rank_y * q as u64 + y[len - 1] as u64;
        differ |= x[len - 1] != y[len - 1];
        if differ {
            let base = cylinders_up_to(q, len - 1);
            for idx in [base + rank_x + 1, base + rank_y + 1] {
                if idx <= depth as u64 {
                    total += (-(idx as f64)).exp2();
                }
            }
        }
    }
    total
}

/// Metric lookup table indexed by pairs of length-`L` window codes.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    q: u8,
    depth: usize,
    window: usize,
    codes: usize,
    table: Vec<f64>,
}

impl DistanceTable {
    pub fn new(q: u8, depth: usize) -> Result<Self> {
        let window = max_word_len(q, depth);
        let codes = (q as usize).checked_pow(window as u32).filter(|&c| c <= 1 << 10).ok_or_else(|| {
            Error::InvalidParameter(format!("metric depth {depth} too large for a window table over {q} symbols"))
        })?;
        let mut table = vec![0.0; codes * codes];
        let decode = |mut c: usize| {
            let mut w = vec![0u8; window];
            for slot in w.iter_mut().rev() {
                *slot = (c % q as usize) as u8;
                c /= q as usize;
            }
            w
        };
        for a in 0..codes {
            let wa = decode(a);
            for b in 0..codes {
                table[a * codes + b] = prefix_distance(q, depth, &wa, &decode(b));
            }
        }
        Ok(Self { q, depth, window, codes, table })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn get(&self, a: u32, b: u32) -> f64 {
        self.table[a as usize * self.codes + b as usize]
    }
}

/// Contents of one run of a point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fill {
    /// Coordinates `word[(phase + i - start) % |word|]`.
    Periodic { word: Arc<[u8]>, phase: usize },
    /// A gap no filler has been chosen for.
    Unfilled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub start: u64,
    pub fill: Fill,
}

impl Run {
    pub fn periodic(start: u64, word: Arc<[u8]>, phase: usize) -> Self {
        Self { start, fill: Fill::Periodic { word, phase } }
    }
}

/// An infinite one-sided sequence given by a finite run list.
#[derive(Debug, Clone)]
pub struct LazyPoint {
    q: u8,
    runs: Arc<[Run]>,
    horizon_hint: u64,
}

impl PartialEq for LazyPoint {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.runs == other.runs
    }
}

/// Window of positions whose length-`l` codes repeat with a fixed period.
#[derive(Debug, Clone)]
pub struct WindowPiece {
    pub start: u64,
    pub len: u64,
    pub codes: Arc<[u32]>,
    pub phase: usize,
}

impl WindowPiece {
    pub fn code_at(&self, i: u64) -> u32 {
        let p = self.codes.len() as u64;
        self.codes[((self.phase as u64 + (i - self.start) % p) % p) as usize]
    }
}

impl LazyPoint {
    pub fn from_runs(q: u8, runs: Vec<Run>) -> Result<Self> {
        if runs.first().map(|r| r.start) != Some(0) {
            return Err(Error::MalformedPlan("first run must start at 0".into()));
        }
        for pair in runs.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(Error::MalformedPlan("run starts must increase".into()));
            }
        }
        for r in &runs {
            if let Fill::Periodic { word, phase } = &r.fill {
                if word.is_empty() || *phase >= word.len() {
                    return Err(Error::MalformedPlan("periodic run needs a word and a phase inside it".into()));
                }
                if let Some(&symbol) = word.iter().find(|&&s| s >= q) {
                    return Err(Error::SymbolOutOfRange { symbol, q });
                }
            }
        }
        Ok(Self { q, runs: runs.into(), horizon_hint: 0 })
    }

    pub fn periodic(q: u8, w: &SymbolWord) -> Result<Self> {
        Self::prefix_periodic(q, &SymbolWord::empty(), Some(w))
    }

    /// `prefix` followed by `tail` repeated forever; with no tail the
    /// coordinates after the prefix are unresolved.
    pub fn prefix_periodic(q: u8, prefix: &SymbolWord, tail: Option<&SymbolWord>) -> Result<Self> {
        let mut runs = Vec::new();
        if !prefix.is_empty() {
            runs.push(Run::periodic(0, prefix.symbols().into(), 0));
        }
        let start = prefix.len() as u64;
        match tail {
            Some(t) if !t.is_empty() => runs.push(Run::periodic(start, t.symbols().into(), 0)),
            Some(_) => return Err(Error::MalformedPlan("empty periodic tail".into())),
            None => runs.push(Run { start, fill: Fill::Unfilled }),
        }
        Self::from_runs(q, runs)
    }

    pub fn with_horizon_hint(mut self, hint: u64) -> Self {
        self.horizon_hint = hint;
        self
    }

    pub fn horizon_hint(&self) -> u64 {
        self.horizon_hint
    }

    pub fn q(&self) -> u8 {
        self.q
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    fn run_index(&self, i: u64) -> usize {
        self.runs.partition_point(|r| r.start <= i) - 1
    }

    fn run_end(&self, idx: usize) -> u64 {
        self.runs.get(idx + 1).map_or(u64::MAX, |r| r.start)
    }

    pub fn coord(&self, i: u64) -> Result<u8> {
        let run = &self.runs[self.run_index(i)];
        match &run.fill {
            Fill::Periodic { word, phase } => {
                let p = word.len() as u64;
                Ok(word[((*phase as u64 + (i - run.start) % p) % p) as usize])
            }
            Fill::Unfilled => Err(Error::UnresolvedPlan(i)),
        }
    }

    /// Coordinates `x_a..=x_b`.
    pub fn orbit_window(&self, a: u64, b: u64) -> Result<SymbolWord> {
        if a > b {
            return Err(Error::InvalidParameter(format!("window [{a}, {b}] is empty")));
        }
        let mut out = Vec::with_capacity((b - a + 1) as usize);
        self.extend_coords(a, b - a + 1, &mut out)?;
        Ok(SymbolWord(out))
    }

    /// Appends `len` coordinates starting at `a` to `out`.
    pub fn extend_coords(&self, a: u64, len: u64, out: &mut Vec<u8>) -> Result<()> {
        let end = a + len;
        let mut idx = self.run_index(a);
        let mut i = a;
        while i < end {
            let run_end = self.run_end(idx).min(end);
            match &self.runs[idx].fill {
                Fill::Periodic { word, phase } => {
                    let p = word.len();
                    let mut pos = ((*phase as u64 + (i - self.runs[idx].start) % p as u64) % p as u64) as usize;
                    for _ in i..run_end {
                        out.push(word[pos]);
                        pos += 1;
                        if pos == p {
                            pos = 0;
                        }
                    }
                }
                Fill::Unfilled => return Err(Error::UnresolvedPlan(i)),
            }
            i = run_end;
            idx += 1;
        }
        Ok(())
    }

    /// Runs describing coordinates `[from, from + len)` relocated to start at
    /// `dst`; `len = None` keeps the infinite tail.
    pub fn slice_runs(&self, from: u64, len: Option<u64>, dst: u64) -> Vec<Run> {
        let end = len.map(|l| from + l);
        let mut out = Vec::new();
        let mut idx = self.run_index(from);
        loop {
            let run = &self.runs[idx];
            let s = run.start.max(from);
            if end.is_some_and(|e| s >= e) {
                break;
            }
            let fill = match &run.fill {
                Fill::Periodic { word, phase } => {
                    let p = word.len() as u64;
                    Fill::Periodic { word: word.clone(), phase: ((*phase as u64 + (s - run.start) % p) % p) as usize }
                }
                Fill::Unfilled => Fill::Unfilled,
            };
            out.push(Run { start: dst + (s - from), fill });
            idx += 1;
            if idx == self.runs.len() {
                break;
            }
        }
        out
    }

    /// The point f^n x.
    pub fn shift(&self, n: u64) -> LazyPoint {
        LazyPoint { q: self.q, runs: self.slice_runs(n, None, 0).into(), horizon_hint: self.horizon_hint }
    }

    /// Position pieces covering `[from, to)` for windows of length `l`.
    /// Inside a piece the window code is periodic; positions whose window
    /// straddles a run boundary get single-position pieces.
    pub fn window_pieces(&self, l: usize, from: u64, to: u64) -> Result<Vec<WindowPiece>> {
        let q = self.q as u64;
        if (q as u128).pow(l as u32) > u32::MAX as u128 {
            return Err(Error::InvalidParameter(format!("window length {l} too long for codes")));
        }
        let mut cache: HashMap<(usize, usize), Arc<[u32]>> = HashMap::new();
        let mut out = Vec::new();
        if from >= to {
            return Ok(out);
        }
        let mut idx = self.run_index(from);
        let mut buf = Vec::with_capacity(l);
        while idx < self.runs.len() {
            let run = &self.runs[idx];
            let run_end = self.run_end(idx);
            let s = run.start.max(from);
            if s >= to {
                break;
            }
            let interior_end = run_end.saturating_sub(l as u64 - 1).min(to);
            if let Fill::Periodic { word, phase } = &run.fill {
                if interior_end > s {
                    let key = (Arc::as_ptr(word) as *const u8 as usize, word.len());
                    let codes = cache
                        .entry(key)
                        .or_insert_with(|| cyclic_codes(word, l, self.q))
                        .clone();
                    let p = word.len() as u64;
                    out.push(WindowPiece {
                        start: s,
                        len: interior_end - s,
                        codes,
                        phase: ((*phase as u64 + (s - run.start) % p) % p) as usize,
                    });
                }
            }
            let tail_start = interior_end.max(s);
            let tail_end = run_end.min(to);
            for i in tail_start..tail_end {
                buf.clear();
                self.extend_coords(i, l as u64, &mut buf)?;
                let code = buf.iter().fold(0u32, |c, &s| c * q as u32 + s as u32);
                out.push(WindowPiece { start: i, len: 1, codes: Arc::from(vec![code]), phase: 0 });
            }
            if run_end >= to {
                break;
            }
            idx += 1;
        }
        Ok(out)
    }

    /// Serializable description of the run list.
    pub fn spec(&self) -> PointSpec {
        PointSpec::Runs {
            q: self.q,
            runs: self
                .runs
                .iter()
                .map(|r| match &r.fill {
                    Fill::Periodic { word, phase } => RunSpec {
                        start: r.start,
                        word: Some(SymbolWord(word.to_vec())),
                        phase: *phase,
                    },
                    Fill::Unfilled => RunSpec { start: r.start, word: None, phase: 0 },
                })
                .collect(),
        }
    }

    /// Hex SHA-256 of the canonical run description.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.spec()).expect("point spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn cyclic_codes(word: &[u8], l: usize, q: u8) -> Arc<[u32]> {
    let p = word.len();
    (0..p)
        .map(|start| (0..l).fold(0u32, |c, j| c * q as u32 + word[(start + j) % p] as u32))
        .collect::<Vec<u32>>()
        .into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub start: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<SymbolWord>,
    #[serde(default)]
    pub phase: usize,
}

/// JSON form of a point: either prefix plus periodic tail, or explicit runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Runs { q: u8, runs: Vec<RunSpec> },
    PrefixPeriodic {
        q: u8,
        #[serde(default)]
        prefix: SymbolWord,
        tail: Option<SymbolWord>,
    },
}

impl PointSpec {
    pub fn build(&self) -> Result<LazyPoint> {
        match self {
            PointSpec::PrefixPeriodic { q, prefix, tail } => {
                prefix.check_alphabet(*q)?;
                if let Some(t) = tail {
                    t.check_alphabet(*q)?;
                }
                LazyPoint::prefix_periodic(*q, prefix, tail.as_ref())
            }
            PointSpec::Runs { q, runs } => LazyPoint::from_runs(
                *q,
                runs.iter()
                    .map(|r| Run {
                        start: r.start,
                        fill: match &r.word {
                            Some(w) => Fill::Periodic { word: w.symbols().into(), phase: r.phase },
                            None => Fill::Unfilled,
                        },
                    })
                    .collect(),
            ),
        }
    }
}

/// Truncated distance Σ_{k≤depth} 2^{-k}|f_k(x) − f_k(y)| over the canonical
/// cylinder family.
pub fn point_distance(x: &LazyPoint, y: &LazyPoint, depth: usize) -> Result<f64> {
    if x.q != y.q {
        return Err(Error::AlphabetMismatch(x.q, y.q));
    }
    let l = max_word_len(x.q, depth) as u64;
    if l == 0 {
        return Ok(0.0);
    }
    let a = x.orbit_window(0, l - 1)?;
    let b = y.orbit_window(0, l - 1)?;
    Ok(prefix_distance(x.q, depth, a.symbols(), b.symbols()))
}

/// Distance between f^i x and f^j y without materializing shifted points.
pub fn orbit_distance(x: &LazyPoint, i: u64, y: &LazyPoint, j: u64, depth: usize) -> Result<f64> {
    if x.q != y.q {
        return Err(Error::AlphabetMismatch(x.q, y.q));
    }
    let l = max_word_len(x.q, depth) as u64;
    if l == 0 {
        return Ok(0.0);
    }
    let a = x.orbit_window(i, i + l - 1)?;
    let b = y.orbit_window(j, j + l - 1)?;
    Ok(prefix_distance(x.q, depth, a.symbols(), b.symbols()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> SymbolWord {
        SymbolWord::parse(s).unwrap()
    }

    #[test]
    fn admissibility_examples() {
        let full = ShiftModel::full(2).unwrap();
        let golden = ShiftModel::golden_mean();
        assert!(full.word_admissible(&w("0110")).unwrap());
        assert!(!golden.word_admissible(&w("0110")).unwrap());
        assert!(golden.word_admissible(&w("01010")).unwrap());
        assert!(matches!(golden.word_admissible(&w("012")), Err(Error::SymbolOutOfRange { symbol: 2, q: 2 })));
    }

    #[test]
    fn golden_mean_admissibility_matches_matrix_walk() {
        // Oracle: count walks through the adjacency matrix symbol by symbol.
        let adj = [[1u8, 1], [1, 0]];
        let golden = ShiftModel::golden_mean();
        for n in 1..=8 {
            for bits in 0..(1u32 << n) {
                let word: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
                let walk = word.windows(2).map(|p| adj[p[0] as usize][p[1] as usize]).product::<u8>() == 1;
                assert_eq!(golden.word_admissible(&SymbolWord::new(word)).unwrap(), walk);
            }
        }
    }

    #[test]
    fn non_mixing_rejected() {
        let bipartite = vec![vec![false, true], vec![true, false]];
        assert!(matches!(ShiftModel::sft(bipartite), Err(Error::NotMixing(_))));
    }

    #[test]
    fn orbit_window_examples() {
        let x = LazyPoint::prefix_periodic(2, &w("01"), Some(&w("0"))).unwrap();
        assert_eq!(x.orbit_window(0, 3).unwrap(), w("0100"));
        let y = LazyPoint::periodic(2, &w("01")).unwrap();
        assert_eq!(y.orbit_window(3, 4).unwrap(), w("10"));
        let open = LazyPoint::prefix_periodic(2, &w("01"), None).unwrap();
        assert_eq!(open.orbit_window(0, 1).unwrap(), w("01"));
        assert_eq!(open.orbit_window(1, 2), Err(Error::UnresolvedPlan(2)));
    }

    #[test]
    fn canonical_order() {
        assert_eq!(cylinder_word(2, 1), w("0"));
        assert_eq!(cylinder_word(2, 2), w("1"));
        assert_eq!(cylinder_word(2, 3), w("00"));
        assert_eq!(cylinder_word(2, 6), w("11"));
        assert_eq!(cylinder_word(2, 7), w("000"));
        assert_eq!(cylinder_word(2, 24), w("1001"));
        for k in 1..200 {
            assert_eq!(cylinder_index(3, cylinder_word(3, k).symbols()), k);
        }
        assert_eq!(max_word_len(2, 24), 4);
        assert_eq!(max_word_len(2, 6), 2);
    }

    #[test]
    fn distance_examples() {
        let zero = LazyPoint::periodic(2, &w("0")).unwrap();
        let one = LazyPoint::periodic(2, &w("1")).unwrap();
        assert_eq!(point_distance(&zero, &zero, 24).unwrap(), 0.0);
        // Hand sum: [0],[1],[00] and [11] are the cylinders separating them.
        assert_eq!(point_distance(&zero, &one, 6).unwrap(), 0.5 + 0.25 + 0.125 + 1.0 / 64.0);
        assert_eq!(point_distance(&zero, &one, 6).unwrap(), 0.890625);
        let a = LazyPoint::periodic(2, &w("01")).unwrap();
        let b = LazyPoint::periodic(2, &w("10")).unwrap();
        for depth in 2..30 {
            assert!(point_distance(&a, &b, depth).unwrap() >= 0.75);
        }
        let ternary = LazyPoint::periodic(3, &w("0")).unwrap();
        assert!(matches!(point_distance(&a, &ternary, 4), Err(Error::AlphabetMismatch(2, 3))));
    }

    #[test]
    fn table_matches_direct_distance() {
        let t = DistanceTable::new(2, 24).unwrap();
        assert_eq!(t.window(), 4);
        for a in 0..16u32 {
            for b in 0..16u32 {
                let wa: Vec<u8> = (0..4).rev().map(|i| ((a >> i) & 1) as u8).collect();
                let wb: Vec<u8> = (0..4).rev().map(|i| ((b >> i) & 1) as u8).collect();
                assert_eq!(t.get(a, b), prefix_distance(2, 24, &wa, &wb));
            }
        }
    }

    #[test]
    fn window_pieces_reproduce_codes() {
        let runs = vec![
            Run::periodic(0, Arc::from(vec![0u8, 1]), 1),
            Run::periodic(7, Arc::from(vec![0u8, 0, 1]), 2),
            Run::periodic(9, Arc::from(vec![1u8]), 0),
        ];
        let x = LazyPoint::from_runs(2, runs).unwrap();
        let pieces = x.window_pieces(3, 0, 40).unwrap();
        let mut covered = 0;
        for p in &pieces {
            for i in p.start..p.start + p.len {
                let word = x.orbit_window(i, i + 2).unwrap();
                let code = word.symbols().iter().fold(0u32, |c, &s| c * 2 + s as u32);
                assert_eq!(p.code_at(i), code, "position {i}");
                covered += 1;
            }
        }
        assert_eq!(covered, 40);
    }

    #[test]
    fn model_json_roundtrip() {
        let golden = ShiftModel::from_json(r#"{"kind":"sft","q":2,"adjacency":[[1,1],[1,0]]}"#).unwrap();
        assert!(matches!(golden, ShiftModel::Sft { exponent: 2, .. }));
        let again = golden.to_file().into_model().unwrap();
        assert_eq!(again.digest(), golden.digest());
        assert!(ShiftModel::from_json("{not json").is_err());
        assert!(ShiftModel::from_json(r#"{"kind":"torus"}"#).is_err());
    }

    #[test]
    fn point_spec_roundtrip() {
        let x = LazyPoint::prefix_periodic(2, &w("0010"), Some(&w("01"))).unwrap();
        let spec = x.spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back: PointSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap(), x);
        let short: PointSpec = serde_json::from_str(r#"{"q":2,"prefix":"01","tail":"0"}"#).unwrap();
        assert_eq!(short.build().unwrap().orbit_window(0, 3).unwrap(), w("0100"));
    }
}
