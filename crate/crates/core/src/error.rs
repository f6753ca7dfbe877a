use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Messages are part of the CLI contract; scripts match on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero index exceeds table (requested {requested}, maximum {max})")]
    ZeroIndexExceedsTable { requested: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sigma not strictly decreasing (sigma'({at}) = {slope})")]
    SigmaNotDecreasing { at: f64, slope: f64 },

    #[error("tabulated derivatives inconsistent near s = {at} (residual {residual:e})")]
    InconsistentTable { at: f64, residual: f64 },

    #[error("horizon too small (T = {0}, need T >= 3)")]
    HorizonTooSmall(f64),

    #[error("horizon too small for glue (T = {0})")]
    HorizonTooSmallForGlue(f64),

    #[error("horizon too small for positive potential (q_T({at}) = {value})")]
    NonPositivePotential { at: f64, value: f64 },

    #[error("epsilon too small for truncation/step budget ({steps} steps requested)")]
    StepBudget { steps: u64 },

    #[error("insufficient resolvable modes ({found} above floating-point floor, need 5)")]
    InsufficientModes { found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain exhausted: front at {front} is within 5 units of the right edge {edge}")]
    DomainExhausted { front: f64, edge: f64 },

    #[error("front not in domain (level {level} not straddled)")]
    FrontNotInDomain { level: f64 },

    #[error("insufficient horizon spread: {0}")]
    InsufficientHorizonSpread(String),

    #[error("pruning depth too large for horizon (more than {cap} particles)")]
    PopulationCap { cap: u64 },

    #[error("reduce t or raise floor (more than {cap} particles)")]
    GibbsPopulationCap { cap: u64 },

    #[error("degenerate replica: total weight {0} is not positive")]
    DegenerateReplica(f64),

    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("K = {0} is outside the barrier regime (need K >= 1)")]
    KOutOfRegime(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
