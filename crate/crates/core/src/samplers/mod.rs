//! Metropolis–Hastings samplers: PMMH, correlated PMMH and the augmented
//! correlated scheme (aCPMMH).

mod acpmmh;
mod cn;
mod output;
mod proposal;
mod pseudo_marginal;
mod schedule;

pub use acpmmh::{
    acpmmh_endpoint_update, acpmmh_run, acpmmh_theta_log_ratio, acpmmh_theta_update, acpmmh_xt_update, AcpmmhSettings,
    ChainState,
};
pub use cn::{cn_propose, CnKernel};
pub use output::{AcceptanceCounter, ChainOutput};
pub use proposal::RwmProposal;
pub use pseudo_marginal::{cpmmh_run, pmmh_run, Adaptation, LikelihoodEstimator, ParticleFilterEstimator, PmSettings};
pub use schedule::{odd_even_schedule, Schedule};

/// Stream tags, so each kind of update draws from its own RNG stream.
pub(crate) mod tags {
    pub const THETA: u64 = 0;
    pub const STATE: u64 = 1;
    pub const ENDPOINT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const INIT_ITER: u64 = u64::MAX;
}

/// Metropolis–Hastings decision on the log scale; NaN rejects.
pub(crate) fn mh_accept<T: crate::Real>(log_ratio: T, log_uniform: T) -> bool {
    !log_ratio.is_nan() && log_uniform < log_ratio
}
