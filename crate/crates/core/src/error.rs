use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("field is in {found:?} space, expected {expected:?}")]
    SpaceMismatch {
        expected: crate::spectral::Space,
        found: crate::spectral::Space,
    },
    #[error("sample count {found} does not match grid size {expected}")]
    SampleCount { expected: usize, found: usize },
    #[error("multiplier produced a non-finite value at mode {0}")]
    NonFiniteSymbol(usize),
    #[error("state is not normalized: L2 norm {0}")]
    NotNormalized(f64),
    #[error("zero field where a nonzero state is required")]
    ZeroField,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scale 2^-{j} is not resolved by the grid: {reason}")]
    Unresolved { j: u32, reason: String },
    #[error("need at least {needed} snapshots, got {found}")]
    TooFewSnapshots { needed: usize, found: usize },
    #[error("snapshots are not uniformly spaced")]
    NonUniformSnapshots,
    #[error("slot {slot} out of range 1..={max}")]
    SlotOutOfRange { slot: usize, max: usize },
    #[error("particle number mismatch: {0}")]
    ParticleNumber(String),
    #[error("operation requires {0}")]
    Unsupported(String),
    #[error("mixture is not a positive symmetric rank-one power: {0}")]
    NotPositive(String),
    #[error("scattering window exceeded: T_max {t_max} > limit {limit}")]
    WraparoundWindow { t_max: f64, limit: f64 },
    #[error("run was flagged: {0}")]
    RunFlagged(String),
    #[error("time {0} is not on the run's checkpoint grid")]
    TimeNotInGrid(f64),
    #[error("missing scattering run for atom {0}")]
    MissingRun(usize),
    #[error("shell {j} profile is not in M_j: {reason}")]
    Membership { j: u32, reason: String },
}
