use crate::grid::Lattice;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice {n1}x{n2}: both dimensions must be at least 2")]
    InvalidLattice { n1: usize, n2: usize },

    #[error("lattice mismatch: expected {expected}, found {found}")]
    LatticeMismatch { expected: Lattice, found: Lattice },

    #[error("buffer of length {len} does not fit lattice {lattice}")]
    LengthMismatch { lattice: Lattice, len: usize },

    #[error("non-finite value at pixel {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
