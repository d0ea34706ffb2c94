//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point ({re}, {im}) lies outside the open domain")]
    PointOutsideDomain { re: f64, im: f64 },

    #[error("point ({re}, {im}) does not lie on the compact set K")]
    PointOutsideK { re: f64, im: f64 },

    #[error("nodes {i} and {j} coincide (distance <= {tol:e})")]
    DuplicateNodes { i: usize, j: usize, tol: f64 },

    #[error("field is +inf at every grid point")]
    AllInfinite,

    #[error("field carries no finite piece of positive length on K")]
    InadmissibleField,

    #[error("N = {n} is too small for the set (cell length {delta} >= shortest piece {min_len})")]
    NTooSmall { n: usize, delta: f64, min_len: f64 },

    #[error("discretized mass {mass} at cell {index} exceeds the cap {cap}")]
    ConstraintViolated { index: usize, mass: f64, cap: f64 },

    #[error("grid has {got} points but at least {need} are required")]
    GridTooSmall { got: usize, need: usize },

    #[error("greedy history is empty")]
    EmptyHistory,

    #[error("candidate grid is empty")]
    EmptyGrid,

    #[error("no grid point satisfies the set-A membership inequality")]
    EmptyA,

    #[error("problem too large for exhaustive search: {what}")]
    ProblemTooLarge { what: String },

    #[error("kernel matrix is numerically singular (pivot ratio {pivot_ratio:e})")]
    SingularMatrix { pivot_ratio: f64 },

    #[error("measure has (numerically) zero mass; check is vacuous")]
    ZeroMeasure,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn outside_domain(z: num_complex::Complex64) -> Self {
        Error::PointOutsideDomain { re: z.re, im: z.im }
    }

    pub(crate) fn outside_k(z: num_complex::Complex64) -> Self {
        Error::PointOutsideK { re: z.re, im: z.im }
    }
}
