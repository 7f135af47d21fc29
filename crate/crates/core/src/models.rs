//! The three benchmark diffusions: a degenerate Feller square-root process,
//! stochastic Lotka–Volterra, and a four-species autoregulatory network.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::prior::Prior;
use crate::scalar::Real;
use crate::sde::{Diffusion, InitialState, ObservationModel, ParamTransform, StateDomain};

/// `dX = (θ1 − θ2) X dt + √((θ1 + θ2) X) dW`.
#[derive(Debug, Clone)]
pub struct SquareRoot<T> {
    domain: StateDomain<T>,
}

impl<T: Real> Default for SquareRoot<T> {
    fn default() -> Self {
        Self {
            domain: StateDomain::nonnegative(1),
        }
    }
}

impl<T: Real> Diffusion<T> for SquareRoot<T> {
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[T], th: &[T], out: &mut [T]) {
        out[0] = (th[0] - th[1]) * x[0];
    }
    fn diffusion(&self, x: &[T], th: &[T], out: &mut Mat<T>) {
        out[(0, 0)] = (th[0] + th[1]) * x[0];
    }
    fn jacobian(&self, _x: &[T], th: &[T], out: &mut Mat<T>) {
        out[(0, 0)] = th[0] - th[1];
    }
    fn domain(&self) -> &StateDomain<T> {
        &self.domain
    }
}

/// Prey `X1`, predators `X2`; rates θ = (prey birth, predation, predator death).
#[derive(Debug, Clone)]
pub struct LotkaVolterra<T> {
    domain: StateDomain<T>,
}

impl<T: Real> Default for LotkaVolterra<T> {
    fn default() -> Self {
        Self {
            domain: StateDomain::nonnegative(2),
        }
    }
}

impl<T: Real> Diffusion<T> for LotkaVolterra<T> {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        3
    }
    fn drift(&self, x: &[T], th: &[T], out: &mut [T]) {
        let inter = th[1] * x[0] * x[1];
        out[0] = th[0] * x[0] - inter;
        out[1] = inter - th[2] * x[1];
    }
    fn diffusion(&self, x: &[T], th: &[T], out: &mut Mat<T>) {
        let inter = th[1] * x[0] * x[1];
        out[(0, 0)] = th[0] * x[0] + inter;
        out[(0, 1)] = -inter;
        out[(1, 0)] = -inter;
        out[(1, 1)] = inter + th[2] * x[1];
    }
    fn jacobian(&self, x: &[T], th: &[T], out: &mut Mat<T>) {
        out[(0, 0)] = th[0] - th[1] * x[1];
        out[(0, 1)] = -th[1] * x[0];
        out[(1, 0)] = th[1] * x[1];
        out[(1, 1)] = th[1] * x[0] - th[2];
    }
    fn domain(&self) -> &StateDomain<T> {
        &self.domain
    }
}

/// Stoichiometry of the autoregulatory network; rows are (RNA, P, P2, DNA),
/// columns the eight reactions.
pub const AUTOREG_STOICHIOMETRY: [[i8; 8]; 4] = [
    [0, 0, 1, 0, 0, 0, -1, 0],
    [0, 0, 0, 1, -2, 2, 0, -1],
    [-1, 1, 0, 0, 1, -1, 0, 0],
    [-1, 1, 0, 0, 0, 0, 0, 0],
];

/// Total DNA copy number: hazard 2 carries the factor `(10 − X4)`.
pub const AUTOREG_DNA_TOTAL: f64 = 10.0;

/// Autoregulatory gene network with `α = S h`, `β = S diag(h) Sᵀ`.
///
/// Only θ1..θ4 are inferred. The rate of hazard 8 (protein degradation) is a
/// fixed constant that must be supplied explicitly.
#[derive(Debug, Clone)]
pub struct Autoregulatory<T> {
    c8: T,
    domain: StateDomain<T>,
}

impl<T: Real> Autoregulatory<T> {
    pub fn new(c8: T) -> Self {
        let mut domain = StateDomain::nonnegative(4);
        domain.upper[3] = T::of(AUTOREG_DNA_TOTAL);
        Self { c8, domain }
    }

    pub fn c8(&self) -> T {
        self.c8
    }

    pub fn hazards(&self, x: &[T], th: &[T]) -> [T; 8] {
        let half = T::of(0.5);
        [
            T::of(0.1) * x[3] * x[2],
            th[0] * (T::of(AUTOREG_DNA_TOTAL) - x[3]),
            th[1] * x[3],
            T::of(0.2) * x[0],
            T::of(0.1) * x[1] * (x[1] - T::one()) * half,
            th[2] * x[2],
            th[3] * x[0],
            self.c8 * x[1],
        ]
    }

    fn hazard_jacobian(&self, x: &[T], th: &[T]) -> [[T; 4]; 8] {
        let z = T::zero();
        [
            [z, z, T::of(0.1) * x[3], T::of(0.1) * x[2]],
            [z, z, z, -th[0]],
            [z, z, z, th[1]],
            [T::of(0.2), z, z, z],
            [z, T::of(0.1) * (x[1] + x[1] - T::one()) * T::of(0.5), z, z],
            [z, z, th[2], z],
            [th[3], z, z, z],
            [z, self.c8, z, z],
        ]
    }
}

impl<T: Real> Diffusion<T> for Autoregulatory<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn drift(&self, x: &[T], th: &[T], out: &mut [T]) {
        let h = self.hazards(x, th);
        for (i, row) in AUTOREG_STOICHIOMETRY.iter().enumerate() {
            out[i] = row
                .iter()
                .zip(&h)
                .fold(T::zero(), |acc, (&s, &hk)| acc + T::of(s as f64) * hk);
        }
    }
    fn diffusion(&self, x: &[T], th: &[T], out: &mut Mat<T>) {
        let h = self.hazards(x, th);
        for i in 0..4 {
            for j in i..4 {
                let mut v = T::zero();
                for k in 0..8 {
                    let s = AUTOREG_STOICHIOMETRY[i][k] * AUTOREG_STOICHIOMETRY[j][k];
                    if s != 0 {
                        v = v + T::of(s as f64) * h[k];
                    }
                }
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    }
    fn jacobian(&self, x: &[T], th: &[T], out: &mut Mat<T>) {
        let dh = self.hazard_jacobian(x, th);
        for i in 0..4 {
            for j in 0..4 {
                let mut v = T::zero();
                for k in 0..8 {
                    let s = AUTOREG_STOICHIOMETRY[i][k];
                    if s != 0 {
                        v = v + T::of(s as f64) * dh[k][j];
                    }
                }
                out[(i, j)] = v;
            }
        }
    }
    fn domain(&self) -> &StateDomain<T> {
        &self.domain
    }
}

/// Registry key for the shipped models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelName {
    SquareRoot,
    LotkaVolterra,
    Autoregulatory,
}

impl ModelName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelName::SquareRoot => "sqrt",
            ModelName::LotkaVolterra => "lv",
            ModelName::Autoregulatory => "autoreg",
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(ModelName::SquareRoot),
            "lv" => Ok(ModelName::LotkaVolterra),
            "autoreg" => Ok(ModelName::Autoregulatory),
            other => Err(Error::InvalidConfig(format!(
                "unknown model '{other}' (expected sqrt, lv or autoreg)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model together with the experimental defaults that go with it.
#[derive(Clone)]
pub struct ModelSpec<T> {
    pub name: ModelName,
    pub model: Arc<dyn Diffusion<T>>,
    pub param_names: Vec<&'static str>,
    pub theta_true: Vec<T>,
    pub x0: Vec<T>,
    pub transform: ParamTransform,
    pub prior: Prior<T>,
    /// Noise levels used for the benchmark data sets (standard deviations).
    pub noise_levels: Vec<T>,
    pub default_n_obs: usize,
}

impl<T: Real> ModelSpec<T> {
    pub fn initial_state(&self) -> InitialState<T> {
        InitialState::point(&self.x0)
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    /// Default observation model with noise sd `sigma` on every component.
    /// The autoregulatory model ignores `sigma` and uses `diag(1, 1, 1, 0.25)`.
    pub fn observation(&self, sigma: T) -> Result<ObservationModel<T>> {
        match self.name {
            ModelName::Autoregulatory => ObservationModel::full(4, &[T::one(), T::one(), T::one(), T::of(0.25)]),
            _ => ObservationModel::full(self.state_dim(), &vec![sigma * sigma; self.state_dim()]),
        }
    }
}

impl<T> std::fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

pub fn square_root_model<T: Real>() -> ModelSpec<T> {
    ModelSpec {
        name: ModelName::SquareRoot,
        model: Arc::new(SquareRoot::default()),
        param_names: vec!["theta1", "theta2"],
        theta_true: vec![T::of(0.05), T::of(0.06)],
        x0: vec![T::of(25.0)],
        transform: ParamTransform::all_log(2),
        prior: Prior::normal(2, T::zero(), T::of(10.0)),
        noise_levels: vec![T::one(), T::of(5.0)],
        default_n_obs: 101,
    }
}

pub fn lotka_volterra_model<T: Real>() -> ModelSpec<T> {
    ModelSpec {
        name: ModelName::LotkaVolterra,
        model: Arc::new(LotkaVolterra::default()),
        param_names: vec!["theta1", "theta2", "theta3"],
        theta_true: vec![T::of(0.5), T::of(0.0025), T::of(0.3)],
        x0: vec![T::of(100.0), T::of(100.0)],
        transform: ParamTransform::all_log(3),
        prior: Prior::normal(3, T::zero(), T::of(10.0)),
        noise_levels: vec![T::one(), T::of(5.0), T::of(10.0)],
        default_n_obs: 50,
    }
}

/// `c8` is the fixed rate of hazard 8 and has no default.
pub fn autoreg_model<T: Real>(c8: T) -> ModelSpec<T> {
    ModelSpec {
        name: ModelName::Autoregulatory,
        model: Arc::new(Autoregulatory::new(c8)),
        param_names: vec!["theta1", "theta2", "theta3", "theta4"],
        theta_true: vec![T::of(0.7), T::of(0.35), T::of(0.9), T::of(0.3)],
        x0: vec![T::of(8.0), T::of(8.0), T::of(8.0), T::of(5.0)],
        transform: ParamTransform::all_log(4),
        prior: Prior::uniform(4, T::of(-5.0), T::of(5.0)),
        noise_levels: vec![T::one()],
        default_n_obs: 50,
    }
}

/// Looks up a model by registry name; `c8` is required for `autoreg`.
pub fn model_by_name<T: Real>(name: ModelName, c8: Option<T>) -> Result<ModelSpec<T>> {
    match name {
        ModelName::SquareRoot => Ok(square_root_model()),
        ModelName::LotkaVolterra => Ok(lotka_volterra_model()),
        ModelName::Autoregulatory => c8
            .map(autoreg_model)
            .ok_or_else(|| Error::InvalidConfig("autoreg requires an explicit c8".into())),
    }
}
