use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("acceleration table is empty")]
    EmptyAccelTable,

    #[error("row {row}: degenerate normal")]
    DegenerateNormal { row: usize },

    #[error("row {row}: duplicate consecutive point")]
    DuplicatePoint { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inverse kinematics did not converge at lambda = {lambda:.3} mm")]
    NonConvergent { lambda: f64 },

    #[error("joint limits prevent convergence at lambda = {lambda:.3} mm")]
    JointLimitLocked { lambda: f64 },

    #[error("joint path jumps by {jump:.3} rad at lambda = {lambda:.3} mm")]
    BranchJump { lambda: f64, jump: f64 },

    #[error("lambda grid is not uniform")]
    NonUniformGrid,

    #[error("path has zero length")]
    ZeroLengthPath,

    #[error("fitting tolerance cannot be met even for a single-step span at index {index}")]
    FitUnreachable { index: usize },

    #[error("corner path failure: blend radius {radius:.3} mm at step {step} of robot {robot} exceeds half of an adjacent segment")]
    CornerPathFailure { step: usize, robot: usize, radius: f64 },

    #[error("unreachable Cartesian target at step {step} of robot {robot}")]
    UnreachableTarget { step: usize, robot: usize },

    #[error("joint {joint} of robot {robot} outside limits at step {step}")]
    JointLimitViolation { step: usize, robot: usize, joint: usize },

    #[error("invalid motion program: {0}")]
    InvalidProgram(String),

    #[error("record too short: {0} samples inside the curve gate")]
    RecordTooShort(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    /// True for the errors that mark a configuration kinematically infeasible.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::NonConvergent { .. }
                | Error::JointLimitLocked { .. }
                | Error::BranchJump { .. }
                | Error::ZeroLengthPath
                | Error::UnreachableTarget { .. }
        )
    }
}
