use crate::C64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("SJ block {0} has zero eigenvalue")]
    ZeroEigenvalue(usize),
    #[error("R_z is singular at z = {0}")]
    SingularConfocal(C64),
    #[error("isotropic vector met during bilinear orthogonalisation")]
    IsotropicEncounter,
    #[error("point is off the quadric (|Q| = {0:e})")]
    OffQuadric(f64),
    #[error("not a ruling direction (residual {0:e})")]
    NotRulingDirection(f64),
    #[error("multiple root of Q_z(x) = 0 near z = {0}")]
    MultipleRoot(C64),
    #[error("stereographic chart is singular at |V|^2 = -1")]
    ChartSingularity,
    #[error("isotropic normal (|H| = {0:e})")]
    IsotropicNormal(f64),
    #[error("prime integral violated at the base node ({0:e})")]
    PrimeIntegralViolation(f64),
    #[error("integration step failed: {0}")]
    StepFailure(String),
    #[error("lambda degenerates at node {0}")]
    DegenerateLambda(usize),
    #[error("1-form is not closed (plaquette mismatch {0:e})")]
    ClosureViolation(f64),
    #[error("U is too close to zero ({0:e})")]
    UNearZero(f64),
    #[error("orthogonality drift {0:e} exceeds the bound")]
    DriftExceeded(f64),
    #[error("superposition matrix is singular (condition {0:e})")]
    SingularSuperposition(f64),
    #[error("Box matrix is singular (condition {0:e})")]
    SingularBox(f64),
    #[error("spectral parameters must be pairwise distinct")]
    DistinctZRequired,
    #[error("invalid quadric: {0}")]
    InvalidQuadric(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no completed run in {0}")]
    MissingRun(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
