use thiserror::Error;

/// Errors produced by the testbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("singular metric at ({x:.6}, {y:.6}): det = {det:e}")]
    SingularMetric { x: f64, y: f64, det: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("eta = {0} is outside [0, 2)")]
    InvalidEta(f64),

    #[error("tangential energy {value:e} is negative beyond tolerance at boundary node {node}")]
    NegativeTangentialEnergy { node: usize, value: f64 },

    #[error("every family member has zero left- and right-hand sides (excluded: {excluded:?})")]
    DegenerateFamilyMember { excluded: Vec<usize> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver failure: {reason} (condition estimate {condition:e})")]
    SolverFailure { reason: String, condition: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown preset '{name}' (known: {known})")]
    UnknownPreset { name: String, known: String },

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
