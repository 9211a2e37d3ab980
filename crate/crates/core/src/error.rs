use thiserror::Error;

/// Errors raised by the numerical core and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears more than once")]
    DuplicateLabel(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (max |X - X^dag| = {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("trace {0} exceeds 1 for a subnormalized state")]
    TraceExceedsOne(f64),

    #[error("conditioning state is singular (min eigenvalue {0:.3e})")]
    SingularConditioner(f64),

    #[error("block index {index} out of range for J = {blocks}")]
    BlockIndex { index: usize, blocks: usize },

    #[error("CC1 violated: {0}")]
    NotRandomizedCase(String),

    #[error("map is not completely positive (Choi min eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),

    #[error("Choi rank {rank} exceeds the environment budget {budget}")]
    RankBudget { rank: usize, budget: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("SDP did not converge after {iterations} iterations (gap {gap:.3e} bits)")]
    SdpNonConvergence { iterations: usize, gap: f64 },

    #[error("invalid channel spec: {0}")]
    ChannelSpec(String),

    #[error("invalid decomposition literal `{0}`")]
    DecompositionLiteral(String),
}

pub type Result<T> = std::result::Result<T, Error>;
