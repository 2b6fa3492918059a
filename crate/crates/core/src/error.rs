//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    /// A radicand that should be nonnegative came out negative beyond the
    /// rounding-noise threshold.
    #[error("degenerate collision geometry: radicand {radicand:e}")]
    DegenerateGeometry { radicand: f64 },
    /// The pair has zero relative momentum, so angle-dependent quantities
    /// are undefined.
    #[error("zero relative momentum")]
    ZeroRelativeMomentum,
    /// The boost construction needs non-collinear momenta and the fallback
    /// rotation could not be built either.
    #[error("collinear geometry: |p x p'| below threshold")]
    CollinearGeometry,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("invalid equilibrium parameters: {0}")]
    InvalidParams(String),
    /// The moment-matching root finder ran out of its iteration budget.
    #[error("moment matching did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// Moment matching assumes zero net momentum.
    #[error("initial data carries nonzero net momentum {0:e}")]
    NonzeroNetMomentum(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("grid mismatch: slices must share the same momentum grid")]
    GridMismatch,
    #[error("statistics mismatch: slices must share the same statistics")]
    StatisticsMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    /// The closed forms need R > r >= 0.
    #[error("domain error: need R > r >= 0, got R = {r_big}, r = {r_small}")]
    Domain { r_big: f64, r_small: f64 },
    /// The reduced representation is undefined on the diagonal p = p'.
    #[error("coincident momenta: the reduced integral needs p != p'")]
    CoincidentMomenta,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("eigenvalue iteration did not converge: {0}")]
    NonConvergence(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} samples after burn-in, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("nonpositive value {value:e} at sample {index}: cannot fit a log-linear decay")]
    NonpositiveValue { index: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic: expected RQBK")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("snapshot is truncated or has inconsistent dimensions")]
    Corrupt,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("divergence detected at t = {t}: non-finite value at node {node}")]
    Divergence { t: f64, node: usize },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
