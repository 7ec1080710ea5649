use thiserror::Error;

/// Errors raised by the constructions in this crate.
///
/// Indices carried in messages are 1-based, matching the JSON and CLI
/// conventions; everything internal is 0-based.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FranksError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symplectic: defect {defect:.3e} exceeds {tol:.1e}")]
    NotSymplectic { defect: f64, tol: f64 },

    #[error("matrix is not in the linear Poisson group: {0}")]
    NotPoisson(String),

    #[error("2x2 block has determinant {det}, expected 1")]
    NotUnimodular { det: f64 },

    #[error("complex eigenvalue {re} + {im}i encountered")]
    ComplexSpectrum { re: f64, im: f64 },

    #[error("eigenvalues too clustered to continue (gap {gap:.3e})")]
    GapTooSmall { gap: f64 },

    #[error("eigenvector pair {pair} is symplectically degenerate (omega = {omega:.3e})")]
    NondegeneracyFailure { pair: usize, omega: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("infeasible rotation angle: |cos theta| = {cos_theta} >= {bound}")]
    InfeasibleAngle { cos_theta: f64, bound: f64 },

    #[error("distance to identity {delta:.3e} outside the near-identity regime (< {regime:.3e})")]
    OutOfRegime { delta: f64, regime: f64 },

    #[error("factorization failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: String },

    #[error("integration diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("no return to the section x1 = {section} within t_max = {t_max}")]
    NoReturn { section: f64, t_max: f64 },

    #[error("point outside the closed-form validity tube: {0}")]
    OutOfTube(String),

    #[error("no crossing of the section within |t| <= {t_max}")]
    NoCrossing { t_max: f64 },

    #[error("Hamiltonian vector field vanishes at the base point (|X_H| = {norm:.3e})")]
    DegenerateBase { norm: f64 },

    #[error("chart error: {0}")]
    ChartError(String),

    #[error("unknown suite '{0}'")]
    UnknownSuite(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FranksError>;

pub(crate) fn dim_mismatch(expected: impl ToString, got: impl ToString) -> FranksError {
    FranksError::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
