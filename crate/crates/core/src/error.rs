use thiserror::Error;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("drift or diffusion evaluated to a non-finite value")]
    NonFiniteDrift,
    #[error("diffusion matrix is not symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("covariance matrix is singular after jitter")]
    SingularCovariance,
    #[error("state left the model domain")]
    DomainExit,
    #[error("bridge innovation matrix is singular after jitter")]
    SingularInnovation,
    #[error("all resampling weights are zero")]
    DegenerateWeights,
    #[error("initial likelihood estimate is -inf after {attempts} attempts")]
    InitFailure { attempts: usize },
    #[error("model Jacobian evaluated to a non-finite value")]
    NonFiniteJacobian,
    #[error("ODE integration produced a non-finite value")]
    StepFailure,
    #[error("one-step forecast covariance is singular")]
    SingularForecastCov,
    #[error("predictive covariance V is singular in the backward sampler")]
    SingularV,
    #[error("no particle count up to {max_n} met the variance target (last value {last_value:.3})")]
    TuningFailure { max_n: usize, last_value: f64 },
    #[error("pilot run failed: {0}")]
    PilotFailure(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Shape(_) | Error::InvalidConfig(_) => ErrorCategory::Config,
            _ => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
