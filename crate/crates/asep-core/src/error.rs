use thiserror::Error;

/// Errors shared across the simulation and solver modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is outside the schedule coverage [0, ∞)")]
    TimeOutOfRange { t: f64 },

    #[error("invalid rate schedule: {0}")]
    InvalidSchedule(String),

    #[error("density {value} outside [0, 1] for {name}")]
    DensityOutOfRange { name: &'static str, value: f64 },

    #[error("block size K = {k} must satisfy 1 <= K < N/2 (N = {n})")]
    BlockSizeOutOfRange { k: usize, n: usize },

    #[error("invalid scaling plan: {0}")]
    InvalidScaling(String),

    #[error("invalid lattice configuration: {0}")]
    InvalidLattice(String),

    #[error("all event rates vanished at t = {t}: absorbing state")]
    AbsorbingState { t: f64 },

    #[error("event budget of {budget} exhausted at t = {t}")]
    BudgetExhausted { budget: u64, t: f64 },

    #[error("CFL violation: dt = {dt} exceeds limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("test function contract violated: {0}")]
    TestFunctionContract(String),

    #[error("incompatible fields: {0}")]
    IncompatibleFields(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
