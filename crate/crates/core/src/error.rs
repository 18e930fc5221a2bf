use thiserror::Error;

/// Errors produced by schedule construction, propagation and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QdriveError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tau = {tau} is outside the protocol interval [0, 1]")]
    Domain { tau: f64 },

    #[error("degenerate Hamiltonian: gamma = omega = 0 has no unique ground state")]
    DegenerateHamiltonian,

    #[error("derivative unavailable at tau = {tau}: schedule is not differentiable there")]
    DerivativeUnavailable { tau: f64 },

    #[error("singular superadiabatic transformation: coupling vanishes at tau = {tau}")]
    SingularTransformation { tau: f64 },

    #[error("square-root argument of the Roland-Cerf ramp is non-positive at tau = {tau}")]
    RolandCerfDomain { tau: f64 },

    #[error("propagation not converged: F = {coarse} at N steps vs {fine} at 2N steps")]
    NotConverged { coarse: f64, fine: f64 },

    #[error("target fidelity {target} could not be bracketed for T <= {t_max}")]
    NotBracketable { target: f64, t_max: f64 },

    #[error("protocol family `{0}` is not applicable to this operation")]
    FamilyNotApplicable(String),

    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QdriveError {
    fn from(e: std::io::Error) -> Self {
        QdriveError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QdriveError>;
