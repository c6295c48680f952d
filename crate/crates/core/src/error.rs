use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A block that must be inverted is numerically singular.
    #[error("matrix block {block} is singular (reciprocal condition {rcond:.3e})")]
    SingularBlock { block: String, rcond: f64 },

    /// The augmented steady-state system has no unique solution.
    #[error("steady-state system is rank deficient (reciprocal condition {rcond:.3e})")]
    SingularSystem { rcond: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Every bus must carry a load for the uniform controller.
    #[error("bus {bus} has no load; the uniform controller requires a load at every bus")]
    AssumptionViolation { bus: usize },

    #[error("mean per-unit load current {mean} is not positive")]
    DegenerateLoadProfile { mean: f64 },

    #[error("row sum nu of critical node {node} is {value:.6e}; omega range needs every nu > 0")]
    NonpositiveNu { node: usize, value: f64 },

    #[error("reference current of node {node} is {value:.6e} A; must be positive")]
    NonpositiveReference { node: usize, value: f64 },

    #[error("communication graph is disconnected over the active nodes")]
    DisconnectedGraph,

    #[error("electrical network is disconnected")]
    DisconnectedNetwork,

    #[error("state magnitude {magnitude:.3e} exceeded the blowup limit")]
    NumericalBlowup { magnitude: f64 },

    #[error("closed loop did not settle within {horizon} s")]
    NotSettled { horizon: f64 },

    /// A runtime failure annotated with the simulation time it occurred at.
    #[error("at t = {time:.6} s: {source}")]
    AtTime { time: f64, source: Box<Error> },

    /// The scenario file could not be decoded.
    #[error("scenario schema error: {message}")]
    Schema { message: String },

    #[error("{context} references node {node}, but the network has {count} buses")]
    DanglingReference {
        context: String,
        node: usize,
        count: usize,
    },

    #[error("invalid timeline: {reason}")]
    InvalidTimeline { reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Schema,
    Validation,
    Runtime,
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn at_time(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema { .. } | Error::Io(_) => ErrorClass::Schema,
            Error::AtTime { .. }
            | Error::NumericalBlowup { .. }
            | Error::NotSettled { .. } => ErrorClass::Runtime,
            _ => ErrorClass::Validation,
        }
    }

    /// Process exit code: schema = 2, model validation = 3, runtime = 4.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Schema => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Runtime => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
