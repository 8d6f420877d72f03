use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear program is infeasible or unbounded")]
    InfeasibleOrUnbounded,

    #[error("parameter {0} is not an unknown (sampleable) parameter")]
    UnknownParameterOnly(usize),

    #[error("confidence radius undefined: {0}")]
    DomainError(String),

    #[error("ellipsoid shape lost positive definiteness (y^T Q y = {0:e})")]
    NumericalBreakdown(f64),

    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("vertex enumeration too large: {0}")]
    CombinatorialBlowup(String),

    #[error("allocation program has no informative rows")]
    Degenerate,

    #[error("optimal extreme point is not unique")]
    NonUniqueOptimum,

    #[error("successive elimination exceeded {0} rounds")]
    RoundCap(usize),

    #[error("instance generator rejected {0} candidates in a row")]
    GeneratorExhausted(usize),

    #[error("barrier solver failed: {0}")]
    SolverFailure(String),
}
