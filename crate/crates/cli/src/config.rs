//! Experiment configuration: flags and an optional TOML file are merged into
//! a [`ConfigLayer`], then resolved against the model defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use sde_pmcmc::models::{model_by_name, ModelName, ModelSpec};
use sde_pmcmc::sde::{ObservationModel, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Pmmh,
    Cpmmh,
    Acpmmh,
    LnaMh,
}

impl Sampler {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sampler::Pmmh => "pmmh",
            Sampler::Cpmmh => "cpmmh",
            Sampler::Acpmmh => "acpmmh",
            Sampler::LnaMh => "lna-mh",
        }
    }

    /// Whether the sampler stores latent states at the observation times.
    pub fn has_states(&self) -> bool {
        matches!(self, Sampler::Acpmmh | Sampler::LnaMh)
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Initialisation and tuning route for the main run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IntOrString", into = "String")]
pub enum TuningOption {
    /// LNA pilot.
    One,
    /// Short aCPMMH pilot started at the data.
    Two,
    None,
}

impl FromStr for TuningOption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(TuningOption::One),
            "2" => Ok(TuningOption::Two),
            "none" => Ok(TuningOption::None),
            other => Err(format!("tuning must be 1, 2 or none, got '{other}'")),
        }
    }
}

impl From<TuningOption> for String {
    fn from(t: TuningOption) -> String {
        match t {
            TuningOption::One => "1",
            TuningOption::Two => "2",
            TuningOption::None => "none",
        }
        .into()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IntOrString {
    Int(u64),
    Str(String),
}

impl IntOrString {
    fn into_string(self) -> String {
        match self {
            IntOrString::Int(v) => v.to_string(),
            IntOrString::Str(s) => s,
        }
    }
}

impl TryFrom<IntOrString> for TuningOption {
    type Error = String;

    fn try_from(v: IntOrString) -> Result<Self, String> {
        v.into_string().parse()
    }
}

/// A fixed particle count, or `auto` to pick it by the variance rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "IntOrString")]
pub enum Particles {
    Auto,
    Fixed(usize),
}

impl FromStr for Particles {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Particles::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Particles::Fixed(n)),
            _ => Err(format!("particles must be a positive integer or auto, got '{s}'")),
        }
    }
}

impl TryFrom<IntOrString> for Particles {
    type Error = String;

    fn try_from(v: IntOrString) -> Result<Self, String> {
        v.into_string().parse()
    }
}

impl Serialize for Particles {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Particles::Auto => s.serialize_str("auto"),
            Particles::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

/// Every setting optional; used for both the command line and config files.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Model name: sqrt, lv or autoreg.
    #[arg(long)]
    pub model: Option<String>,
    /// Rate of the eighth autoregulatory hazard (required for autoreg).
    #[arg(long)]
    pub c8: Option<f64>,
    /// Parameters on the natural scale: ground truth for simulate, start for run.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Observation noise standard deviation.
    #[arg(long)]
    pub obs_sd: Option<f64>,
    /// Observed state components, zero-based.
    #[arg(long, value_delimiter = ',')]
    pub observed: Option<Vec<usize>>,
    #[arg(long)]
    pub n_obs: Option<usize>,
    /// Inference discretisation step; 1/Δτ must be an integer.
    #[arg(long)]
    pub delta_tau: Option<f64>,
    /// Discretisation step for data simulation.
    #[arg(long)]
    pub sim_delta_tau: Option<f64>,
    #[arg(long)]
    pub sampler: Option<Sampler>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Positive integer or auto.
    #[arg(long)]
    pub particles: Option<Particles>,
    #[arg(long)]
    pub max_particles: Option<usize>,
    #[arg(long)]
    pub n_iters: Option<usize>,
    #[arg(long)]
    pub theta_thin: Option<usize>,
    #[arg(long)]
    pub x_thin: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// 1, 2 or none.
    #[arg(long)]
    pub tuning: Option<TuningOption>,
    /// Pilot length as a fraction of n_iters.
    #[arg(long)]
    pub pilot_fraction: Option<f64>,
    /// Importance samples in the option 2 pilot.
    #[arg(long)]
    pub n_pilot: Option<usize>,
    #[arg(long)]
    pub lna_steps: Option<usize>,
    /// Euclidean sorting of particles before resampling.
    #[arg(long)]
    pub sort: Option<bool>,
    /// Random-walk variance for each working-scale parameter when untuned.
    #[arg(long)]
    pub theta_step_variance: Option<f64>,
    /// Random-walk variance for each state component when untuned.
    #[arg(long)]
    pub state_step_variance: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Initial values and proposals written by the tune verb.
    #[arg(long)]
    pub tuning_file: Option<PathBuf>,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Settings present in `over` replace those here.
    pub fn overlay(&self, over: &ConfigLayer) -> CliResult<ConfigLayer> {
        let to_table = |l: &ConfigLayer| toml::Table::try_from(l).map_err(|e| CliError::Config(format!("config: {e}")));
        let mut base = to_table(self)?;
        base.extend(to_table(over)?);
        base.try_into().map_err(|e| CliError::Config(format!("config: {e}")))
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c8: Option<f64>,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
    pub obs_sd: f64,
    pub observed: Vec<usize>,
    pub n_obs: usize,
    pub delta_tau: f64,
    pub sim_delta_tau: f64,
    pub sampler: Sampler,
    pub rho: f64,
    pub particles: Particles,
    pub max_particles: usize,
    pub n_iters: usize,
    pub theta_thin: usize,
    pub x_thin: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub workers: usize,
    pub tuning: TuningOption,
    pub pilot_fraction: f64,
    pub n_pilot: usize,
    pub lna_steps: usize,
    pub sort: bool,
    pub theta_step_variance: f64,
    pub state_step_variance: f64,
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tuning_file: Option<PathBuf>,
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// `1/Δτ` as an integer, or an error naming `what`.
fn steps_per_unit(delta_tau: f64, what: &str) -> CliResult<usize> {
    if !(delta_tau > 0.0 && delta_tau <= 1.0) {
        return config_err(format!("{what} must lie in (0, 1], got {delta_tau}"));
    }
    let m = (1.0 / delta_tau).round();
    if (m * delta_tau - 1.0).abs() > 1e-9 {
        return config_err(format!("1/{what} must be an integer, got {delta_tau}"));
    }
    Ok(m as usize)
}

impl ExperimentConfig {
    /// Fills defaults from the model and validates. The seed is mandatory.
    pub fn resolve(layer: ConfigLayer) -> CliResult<Self> {
        let model = layer.model.clone().unwrap_or_else(|| "sqrt".into());
        let name: ModelName = model.parse()?;
        let spec: ModelSpec<f64> = model_by_name(name, layer.c8)?;
        let d = spec.state_dim();
        let sampler = layer.sampler.unwrap_or(Sampler::Acpmmh);
        let Some(seed) = layer.seed else {
            return config_err("a seed is required");
        };
        let default_particles = match sampler {
            Sampler::Acpmmh | Sampler::LnaMh => Particles::Fixed(1),
            _ => Particles::Auto,
        };
        let cfg = ExperimentConfig {
            model,
            c8: layer.c8,
            theta: layer.theta.unwrap_or_else(|| spec.theta_true.clone()),
            x0: layer.x0.unwrap_or_else(|| spec.x0.clone()),
            obs_sd: layer.obs_sd.unwrap_or(spec.noise_levels[0]),
            observed: layer.observed.unwrap_or_else(|| (0..d).collect()),
            n_obs: layer.n_obs.unwrap_or(spec.default_n_obs),
            delta_tau: layer.delta_tau.unwrap_or(0.2),
            sim_delta_tau: layer.sim_delta_tau.unwrap_or(0.001),
            sampler,
            rho: match sampler {
                Sampler::Pmmh => layer.rho.unwrap_or(0.0),
                _ => layer.rho.unwrap_or(0.99),
            },
            particles: layer.particles.unwrap_or(default_particles),
            max_particles: layer.max_particles.unwrap_or(512),
            n_iters: layer.n_iters.unwrap_or(10_000),
            theta_thin: layer.theta_thin.unwrap_or(1),
            x_thin: layer.x_thin.unwrap_or(10),
            burn_in: layer.burn_in.unwrap_or(0),
            seed,
            workers: layer.workers.unwrap_or(1),
            tuning: layer.tuning.unwrap_or(TuningOption::None),
            pilot_fraction: layer.pilot_fraction.unwrap_or(0.1),
            n_pilot: layer.n_pilot.unwrap_or(1),
            lna_steps: layer.lna_steps.unwrap_or(sde_pmcmc::lna::DEFAULT_RK4_STEPS),
            sort: layer.sort.unwrap_or(true),
            theta_step_variance: layer.theta_step_variance.unwrap_or(0.01),
            state_step_variance: layer.state_step_variance.unwrap_or(1.0),
            output: layer.output.unwrap_or_else(|| PathBuf::from("out")),
            data: layer.data,
            tuning_file: layer.tuning_file,
        };
        cfg.validate(&spec)?;
        Ok(cfg)
    }

    fn validate(&self, spec: &ModelSpec<f64>) -> CliResult<()> {
        let d = spec.state_dim();
        let p = spec.theta_true.len();
        if self.theta.len() != p {
            return config_err(format!("theta needs {p} values, got {}", self.theta.len()));
        }
        let log_mask = &spec.transform.log_mask;
        if self
            .theta
            .iter()
            .zip(log_mask)
            .any(|(&v, &log)| !v.is_finite() || (log && v <= 0.0))
        {
            return config_err("theta must be finite and positive for log-scale components");
        }
        if self.x0.len() != d || !spec.model.domain().contains(&self.x0) {
            return config_err(format!("x0 must have {d} values inside the state domain"));
        }
        if !(self.obs_sd >= 0.0 && self.obs_sd.is_finite()) {
            return config_err("obs_sd must be finite and nonnegative");
        }
        let mut seen = vec![false; d];
        for &j in &self.observed {
            if j >= d || seen[j] {
                return config_err(format!("observed components must be distinct and below {d}"));
            }
            seen[j] = true;
        }
        if self.observed.is_empty() {
            return config_err("at least one component must be observed");
        }
        steps_per_unit(self.delta_tau, "delta_tau")?;
        steps_per_unit(self.sim_delta_tau, "sim_delta_tau")?;
        if !(0.0..=1.0).contains(&self.rho) {
            return config_err(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        let positive = [
            ("n_obs", self.n_obs),
            ("n_iters", self.n_iters),
            ("theta_thin", self.theta_thin),
            ("x_thin", self.x_thin),
            ("workers", self.workers),
            ("max_particles", self.max_particles),
            ("n_pilot", self.n_pilot),
            ("lna_steps", self.lna_steps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return config_err(format!("{name} must be positive"));
            }
        }
        if self.burn_in >= self.n_iters {
            return config_err("burn_in must be smaller than n_iters");
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction <= 1.0) {
            return config_err("pilot_fraction must lie in (0, 1]");
        }
        if !(self.theta_step_variance > 0.0 && self.state_step_variance > 0.0) {
            return config_err("random-walk variances must be positive");
        }
        Ok(())
    }

    pub fn spec(&self) -> CliResult<ModelSpec<f64>> {
        Ok(model_by_name(self.model.parse()?, self.c8)?)
    }

    pub fn m(&self) -> usize {
        steps_per_unit(self.delta_tau, "delta_tau").expect("validated")
    }

    pub fn sim_m(&self) -> usize {
        steps_per_unit(self.sim_delta_tau, "sim_delta_tau").expect("validated")
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.n_obs, self.m())?)
    }

    pub fn observation(&self, spec: &ModelSpec<f64>) -> CliResult<ObservationModel<f64>> {
        let d = spec.state_dim();
        if spec.name == ModelName::Autoregulatory && self.observed.len() == d {
            return Ok(spec.observation(self.obs_sd)?);
        }
        let var = self.obs_sd * self.obs_sd;
        Ok(ObservationModel::partial(
            d,
            &self.observed,
            &vec![var; self.observed.len()],
        )?)
    }

    /// Main-run pilot length.
    pub fn pilot_iterations(&self) -> usize {
        (self.pilot_fraction * self.n_iters as f64).floor() as usize
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// `(key, TOML value)` pairs in field order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let table = toml::Table::try_from(self).expect("config serialises");
        let mut out: Vec<(String, String)> = Vec::new();
        let text = self.to_toml();
        for line in text.lines() {
            if let Some((k, _)) = line.split_once(" = ") {
                if let Some(v) = table.get(k) {
                    out.push((k.to_string(), v.to_string()));
                }
            }
        }
        out
    }

    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        table
            .try_into()
            .map_err(|e| CliError::Config(format!("config echo: {e}")))
    }
}
