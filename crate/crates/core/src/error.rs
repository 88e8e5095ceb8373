use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model at `{path}`: {reason}")]
    InvalidModel { path: String, reason: String },

    #[error("config parse failure: {0}")]
    Config(String),

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("point (link {link}, offset {offset} m) is not on the chain: {reason}")]
    InvalidPoint {
        link: usize,
        offset: f64,
        reason: String,
    },

    #[error("joint coordinate {dof} = {value} rad violates limits [{lower}, {upper}]")]
    JointLimit {
        dof: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("chain too short: need at least {needed} links, found {found}")]
    ChainTooShort { needed: usize, found: usize },

    #[error("no degrees of freedom remain: {0}")]
    NoDegreesOfFreedom(String),

    #[error("configuration is not planar: roll coordinate {dof} = {value} rad")]
    NonPlanar { dof: usize, value: f64 },

    #[error("mass matrix is singular or not positive definite")]
    SingularMassMatrix,

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e} N·m)")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("tag {tag} missing near t = {t} s")]
    MissingTag { tag: u32, t: f64 },

    #[error("tag {tag} not declared in the log metadata")]
    UndeclaredTag { tag: u32 },

    #[error("joint {joint}: relative rotation has a {magnitude:.4} rad non-pitch component")]
    OffPitchRotation { joint: usize, magnitude: f64 },

    #[error("too few samples: need at least {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotoneTime { index: usize },

    #[error("rank-deficient regressor: {0}")]
    RankDeficient(String),

    #[error("negative {what} estimate for joint {joint}: {value}")]
    NegativeEstimate {
        what: &'static str,
        joint: usize,
        value: f64,
    },

    #[error("velocity precondition violated: {0}")]
    VelocityPrecondition(String),

    #[error("segmentation failure: {0}")]
    Segmentation(String),

    #[error("curve fit: {0}")]
    CurveFit(String),

    #[error("singular Jacobian with zero damping")]
    SingularJacobian,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidModel {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
