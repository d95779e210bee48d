use thiserror::Error;

/// Error taxonomy shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error in field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-conditioned panelization (condition estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },

    #[error("near-singular quadrature: evaluation point at distance {distance:.3e} from the obstacle (minimum {minimum:.3e})")]
    NearSingularQuadrature { distance: f64, minimum: f64 },

    #[error("regime error: {0}")]
    Regime(String),

    #[error("region error: {0}")]
    Region(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("support explosion: {cells} cells exceed the budget of {budget}")]
    SupportExplosion { cells: usize, budget: usize },

    #[error("non-convergence after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("boundary contact: vortex support touches the region boundary at iteration {iteration}")]
    BoundaryContact { iteration: usize },

    #[error("load error: {0}")]
    Load(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
