use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is singular (pivot {pivot:e} below tolerance)")]
    SingularMatrix { pivot: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not Hurwitz")]
    NotHurwitz,
    #[error("matrix does not have full column rank")]
    RankDeficient,

    #[error("invalid composite interval: need 0 < a < b, got a={a}, b={b}")]
    InvalidInterval { a: f64, b: f64 },
    #[error("invalid composite slope rho={0}: need 0 <= rho < 1")]
    InvalidRho(f64),
    #[error("composite function is not monotone: kappa'({z}) = {slope}")]
    NonMonotone { z: f64, slope: f64 },
    #[error("composite boundary conditions violated (residual {0:e})")]
    BoundaryResidual(f64),
    #[error("composite function evaluated at negative argument {0}")]
    NegativeArgument(f64),

    #[error("bound constant d{index} = {value} outside its admissible interval")]
    InvalidD { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("simulation diverged at t = {t} (last finite time {last_finite_t})")]
    Diverged { t: f64, last_finite_t: f64 },
    #[error("trajectory time grids do not match")]
    GridMismatch,
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
