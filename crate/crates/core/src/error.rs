use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid bath: {0}")]
    InvalidBath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contour ordering violated: {0}")]
    ContourOrdering(String),

    #[error("time sequence invalid: {0}")]
    TimeSequence(String),

    #[error("pairing order must be even, got {0}")]
    OddOrder(usize),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("Fock truncation rejected: {0}")]
    Truncation(String),

    #[error("tabulated correlation: {0}")]
    Tabulated(String),
}
