use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("symbol {symbol} out of range for alphabet of size {q}")]
    SymbolOutOfRange { symbol: u8, q: u8 },
    #[error("alphabet size {0} unsupported (need 2..=36)")]
    BadAlphabet(usize),
    #[error("points or measures over different alphabets ({0} vs {1})")]
    AlphabetMismatch(u8, u8),
    #[error("plan has an unfilled gap at coordinate {0}")]
    UnresolvedPlan(u64),
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error("adjacency is not primitive: {0}")]
    NotMixing(String),
    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),
    #[error("no connector of length {len} from {u} to {v}")]
    NoConnector { u: u8, v: u8, len: usize },
    #[error("gap between windows ending at {end} and starting at {start} is below {needed}")]
    GapTooSmall { end: u64, start: u64, needed: u64 },
    #[error("word {0} is not admissible")]
    Inadmissible(String),
    #[error("requested cylinder length {needed} exceeds measure depth {depth}")]
    DepthExceeded { needed: usize, depth: usize },
    #[error("word {0} cannot be concatenated with itself")]
    NotSelfConcatenable(String),
    #[error("theta {0} outside [0,1]")]
    ThetaOutOfRange(String),
    #[error("measure chain is empty")]
    EmptyChain,
    #[error("measure chain segments {0} and {1} do not share an endpoint")]
    DisconnectedChain(usize, usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure has no periodic recipe; cannot build generic points for it")]
    NoGenerator,
    #[error("epsilon {eps} does not exceed the truncation bound {bound}")]
    EpsilonTooSmall { eps: f64, bound: f64 },
    #[error("measure is at distance {0} from the chain")]
    OffChainMeasure(f64),
    #[error("epsilon {eps} is not below the distal bound {zeta}")]
    EpsilonExceedsZeta { eps: f64, zeta: f64 },
    #[error("theta denominator {0} exceeds the cap {1}")]
    ThetaDenominatorTooLarge(u64, u64),
    #[error("orbit of {0} is a single point")]
    DegenerateSupport(String),
    #[error("distal pairs are missing from the decomposition")]
    MissingDistalPairs,
    #[error("horizon cap exceeded while building stage {attempted} (completed depth {achieved})")]
    HorizonCapExceeded { achieved: usize, attempted: usize },
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("certified bound failed: {0}")]
    CertificationFailed(String),
    #[error("min window {window} larger than horizon {horizon}")]
    MinWindowTooLarge { window: u64, horizon: u64 },
    #[error("case signature indeterminate: {0}")]
    IndeterminateSignature(String),
    #[error("measures {0} and {1} have overlapping supports")]
    SupportOverlap(usize, usize),
    #[error("measure misses cylinder {0}")]
    NotFullSupport(String),
    #[error("greedy expansion lost precision at digit {digit}")]
    PrecisionExhausted { digit: usize, digits: Vec<u8> },
    #[error("digit {0} is zero and cannot be decremented")]
    CannotDecrement(usize),
    #[error("no representative below the expansion of one within {0} digits")]
    NoRepresentative(usize),
    #[error("parse error: {0}")]
    Parse(String),
}
