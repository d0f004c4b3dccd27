use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cholesky of the nugget-inflated correlation matrix failed.
    #[error("correlation matrix is not positive definite at lengths {lengths:?}, nugget {nugget:e}")]
    IllConditioned { lengths: Vec<f64>, nugget: f64 },

    #[error("H^T K^-1 H is rank deficient")]
    SingularDesign,

    #[error("outputs lie in the span of the regression basis; residual variance is zero")]
    DegenerateResiduals,

    #[error("nugget {0:e} sits on a bound of its support")]
    Boundary(f64),

    #[error("all importance weights vanished")]
    DegeneratePopulation,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
