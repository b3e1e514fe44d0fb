use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("u_xx = {u_xx:e} is at or below the singularity guard {guard:e}")]
    SingularHessian { u_xx: f64, guard: f64 },
    #[error("Gauss-Laguerre node search did not converge for order {order}")]
    ConvergenceFailure { order: usize },
    #[error("mass matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("field lost positivity at node {node} (t = {t})")]
    NonPositiveField { node: usize, t: f64 },
    #[error("grids are not nested: {0}")]
    DomainMismatch(String),
    #[error("invalid value-function branch: {0}")]
    InvalidBranch(String),
    #[error("residual does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
