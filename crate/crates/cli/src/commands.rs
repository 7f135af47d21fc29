//! The `simulate`, `tune`, `run` and `report` verbs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use sde_pmcmc::diagnostics::{ess_report, tune_n_acpmmh, tune_n_cpmmh, tune_n_pmmh, EssReport};
use sde_pmcmc::linalg::Mat;
use sde_pmcmc::lna::{lna_mh_run, LnaEstimator, LnaPrior};
use sde_pmcmc::models::ModelSpec;
use sde_pmcmc::parallel::Workers;
use sde_pmcmc::rng::Streams;
use sde_pmcmc::samplers::{
    acpmmh_run, cpmmh_run, pmmh_run, AcpmmhSettings, ChainOutput, CnKernel, ParticleFilterEstimator, PmSettings,
    RwmProposal,
};
use sde_pmcmc::sde::{simulate_data, simulate_path, InitialState, ObservationModel, ParamVector, Problem, TimeGrid};
use sde_pmcmc::tuning::{initial_states_from_data, tune_option1, tune_option2, PilotSettings, TuningResult};
use serde::{Deserialize, Serialize};

use crate::archive::{read_data, read_summary, read_table, write_data, write_table, Summary, Table};
use crate::config::{ExperimentConfig, Particles, Sampler, TuningOption};
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DATA_FILE: &str = "data.csv";
pub const LATENT_FILE: &str = "latent.csv";
pub const THETA_FILE: &str = "theta.csv";
pub const X_FILE: &str = "x_o.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TUNING_FILE: &str = "tuning.toml";

// Independent stream families for each phase of a run.
const SIM_PATH: u64 = 10;
const SIM_NOISE: u64 = 11;
const PILOT: u64 = 1;
const SELECT_N: u64 = 2;
const MAIN: u64 = 3;
const START: u64 = 4;

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

/// Simulated observations and the latent states they were drawn from.
pub struct Simulated {
    pub data: Vec<Vec<f64>>,
    pub latent: Vec<Vec<f64>>,
}

/// Simulates at the fine step `sim_delta_tau` and keeps the integer times.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Simulated> {
    let spec = cfg.spec()?;
    let obs = cfg.observation(&spec)?;
    let theta = ParamVector::from_natural(&cfg.theta, &spec.transform);
    let grid = TimeGrid::new(cfg.n_obs, cfg.sim_m())?;
    let streams = Streams::new(cfg.seed);
    let path = simulate_path(
        &*spec.model,
        &theta,
        &cfg.x0,
        &grid,
        &mut streams.fork(SIM_PATH).stream(0, 0, 0),
    )?;
    let data = simulate_data(&path, &obs, &mut streams.fork(SIM_NOISE).stream(0, 0, 0))?;
    Ok(Simulated {
        data,
        latent: path.observed_states(),
    })
}

/// Writes `data.csv` and `latent.csv` into the output directory.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let sim = simulate(cfg)?;
    create_dir(&cfg.output)?;
    let path = cfg.output.join(DATA_FILE);
    write_data(&path, &sim.data)?;
    let d = cfg.x0.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    write_table(
        &cfg.output.join(LATENT_FILE),
        &header,
        sim.latent.iter().enumerate().map(|(t, x)| (t + 1, x.clone())),
    )?;
    Ok(path)
}

/// Initial values and proposal covariances, as written by `tune` and read
/// back through `tuning_file`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningFile {
    pub particles: usize,
    /// Natural scale.
    pub theta_init: Vec<f64>,
    pub omega_theta: Vec<Vec<f64>>,
    pub x_o_init: Vec<Vec<f64>>,
    pub omega_x: Vec<Vec<Vec<f64>>>,
}

fn mat_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_mat(rows: &[Vec<f64>]) -> CliResult<Mat<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config("tuning file: covariance must be square".into()));
    }
    Ok(Mat::from_row_slice(n, n, &rows.concat()))
}

/// Everything a main run needs, before the sampler starts.
pub struct Prepared {
    pub spec: ModelSpec<f64>,
    pub obs: ObservationModel<f64>,
    pub data: Vec<Vec<f64>>,
    pub init: InitialState<f64>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig, data: Vec<Vec<f64>>) -> CliResult<Self> {
        let spec = cfg.spec()?;
        let obs = cfg.observation(&spec)?;
        if data.is_empty() || data.iter().any(|y| y.len() != obs.obs_dim()) {
            return Err(CliError::Config(format!(
                "data must have at least one row of {} values",
                obs.obs_dim()
            )));
        }
        Ok(Self {
            init: InitialState::point(&cfg.x0),
            spec,
            obs,
            data,
        })
    }

    pub fn problem(&self, m: usize) -> CliResult<Problem<'_, f64>> {
        Ok(Problem::new(&*self.spec.model, &self.obs, &self.data, &self.init, m)?)
    }
}

/// Outcome of the tuning phase.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub file: TuningFile,
    pub pilot: Option<TuningResult<f64>>,
    pub pilot_seconds: f64,
    pub select_seconds: f64,
}

/// Runs the configured tuning option and particle-count selection.
pub fn tune(cfg: &ExperimentConfig, prep: &Prepared) -> CliResult<Tuned> {
    let problem = prep.problem(cfg.m())?;
    let spec = &prep.spec;
    let streams = Streams::new(cfg.seed);
    let workers = Workers::new(cfg.workers);
    let d = spec.state_dim();
    let p = spec.theta_true.len();

    if let Some(path) = &cfg.tuning_file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let file: TuningFile =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let shapes_ok = file.theta_init.len() == p
            && file.omega_theta.len() == p
            && file.x_o_init.len() == problem.n()
            && file.x_o_init.iter().all(|x| x.len() == d)
            && file.omega_x.len() == problem.n()
            && file.omega_x.iter().all(|o| o.len() == d);
        if !shapes_ok || file.particles == 0 {
            return Err(CliError::Config(format!(
                "{}: shapes do not match the problem",
                path.display()
            )));
        }
        return Ok(Tuned {
            file,
            pilot: None,
            pilot_seconds: 0.0,
            select_seconds: 0.0,
        });
    }

    let start = Instant::now();
    let theta0_work = spec.transform.to_work(&cfg.theta);
    let pilot_settings = || {
        let mut s = PilotSettings::new(cfg.pilot_iterations(), theta0_work.clone());
        s.theta_step_variance = cfg.theta_step_variance;
        s.state_step_variance = cfg.state_step_variance;
        s.lna_steps = cfg.lna_steps;
        s
    };
    let pilot_streams = streams.fork(PILOT);
    let pilot = match cfg.tuning {
        TuningOption::One => Some(tune_option1(
            &problem,
            &spec.transform,
            &spec.prior,
            &pilot_settings(),
            &pilot_streams,
        )?),
        TuningOption::Two => Some(tune_option2(
            &problem,
            &spec.transform,
            &spec.prior,
            &pilot_settings(),
            cfg.n_pilot,
            cfg.rho,
            &pilot_streams,
            &workers,
        )?),
        TuningOption::None => None,
    };
    let pilot_seconds = start.elapsed().as_secs_f64();

    let (theta_init, omega_theta, x_o_init, omega_x) = match &pilot {
        Some(r) => (
            r.theta_init.clone(),
            mat_rows(&r.omega_theta),
            r.x_o_init.clone(),
            r.omega_x.iter().map(mat_rows).collect(),
        ),
        None => {
            let x = initial_states_from_data(&problem, &spec.transform, &theta0_work, &streams.fork(START))?;
            let omega_x = mat_rows(&Mat::identity(d).scaled(cfg.state_step_variance));
            (
                cfg.theta.clone(),
                mat_rows(&Mat::identity(p).scaled(cfg.theta_step_variance)),
                x,
                vec![omega_x; problem.n()],
            )
        }
    };

    let start = Instant::now();
    let theta = ParamVector::from_natural(&theta_init, &spec.transform);
    let select = streams.fork(SELECT_N);
    let particles = match (cfg.particles, cfg.sampler) {
        (Particles::Fixed(n), _) => n,
        (Particles::Auto, Sampler::LnaMh) => 1,
        (Particles::Auto, Sampler::Pmmh) => {
            let est = ParticleFilterEstimator::new(problem, cfg.sort);
            tune_n_pmmh(&est, &theta, cfg.max_particles, &select, &workers)?
        }
        (Particles::Auto, Sampler::Cpmmh) => {
            let est = ParticleFilterEstimator::new(problem, cfg.sort);
            tune_n_cpmmh(&est, &theta, cfg.rho, cfg.max_particles, &select, &workers)?
        }
        (Particles::Auto, Sampler::Acpmmh) => tune_n_acpmmh(
            &problem,
            &x_o_init,
            &theta,
            cfg.rho,
            cfg.max_particles,
            &select,
            &workers,
        )?,
    };
    Ok(Tuned {
        file: TuningFile {
            particles,
            theta_init,
            omega_theta,
            x_o_init,
            omega_x,
        },
        pilot,
        pilot_seconds,
        select_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Vec<Vec<f64>>> {
    let Some(path) = &cfg.data else {
        return Err(CliError::Config("a data file is required".into()));
    };
    let spec = cfg.spec()?;
    read_data(path, cfg.observation(&spec)?.obs_dim())
}

/// Writes `tuning.toml` into the output directory.
pub fn cmd_tune(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let prep = Prepared::new(cfg, load_data(cfg)?)?;
    let tuned = tune(cfg, &prep)?;
    create_dir(&cfg.output)?;
    let path = cfg.output.join(TUNING_FILE);
    let text = toml::to_string(&tuned.file).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

/// A finished main run.
pub struct RunResult {
    pub chain: ChainOutput<f64>,
    pub tuned: Tuned,
    pub ess: Option<EssReport>,
    pub param_names: Vec<String>,
    pub state_dim: usize,
    pub n_obs: usize,
}

pub fn state_names(n: usize, d: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|t| (1..=d).map(move |j| format!("x{t}_{j}")))
        .collect()
}

/// Tuning followed by the main run. ESS is taken over every post-burn-in
/// iteration, before any thinning of stored draws.
pub fn run(cfg: &ExperimentConfig, data: Vec<Vec<f64>>) -> CliResult<RunResult> {
    if cfg.n_iters == 0 {
        return Err(CliError::Config("n_iters must be positive".into()));
    }
    let prep = Prepared::new(cfg, data)?;
    let problem = prep.problem(cfg.m())?;
    let spec = &prep.spec;
    let tuned = tune(cfg, &prep)?;
    let f = &tuned.file;
    let streams = Streams::new(cfg.seed).fork(MAIN);
    let workers = Workers::new(cfg.workers);
    let theta0 = spec.transform.to_work(&f.theta_init);
    let theta_proposal = RwmProposal::new(rows_mat(&f.omega_theta)?)?;
    let pm_settings = PmSettings {
        particles: f.particles,
        n_iters: cfg.n_iters,
        proposal: theta_proposal.clone(),
        theta0: theta0.clone(),
        adaptation: None,
    };
    let chain = match cfg.sampler {
        Sampler::Pmmh => {
            let est = ParticleFilterEstimator::new(problem, cfg.sort);
            pmmh_run(&est, &spec.transform, &spec.prior, &pm_settings, &streams, &workers)?
        }
        Sampler::Cpmmh => {
            let est = ParticleFilterEstimator::new(problem, cfg.sort);
            let kernel = CnKernel::new(cfg.rho)?;
            cpmmh_run(
                &est,
                &spec.transform,
                &spec.prior,
                &pm_settings,
                &kernel,
                &streams,
                &workers,
            )?
        }
        Sampler::Acpmmh => {
            let settings = AcpmmhSettings {
                particles: f.particles,
                n_iters: cfg.n_iters,
                kernel: CnKernel::new(cfg.rho)?,
                theta_proposal,
                state_proposals: f
                    .omega_x
                    .iter()
                    .map(|o| RwmProposal::new(rows_mat(o)?).map_err(CliError::from))
                    .collect::<CliResult<_>>()?,
                theta0,
                x_o0: f.x_o_init.clone(),
                x_thin: 1,
                theta_adaptation: None,
                state_adaptation: None,
            };
            acpmmh_run(&problem, &spec.transform, &spec.prior, &settings, &streams, &workers)?
        }
        Sampler::LnaMh => {
            let est = LnaEstimator {
                model: problem.model,
                obs: problem.obs,
                data: problem.data,
                prior: LnaPrior::FromInitialState(prep.init.clone()),
                steps: cfg.lna_steps,
            };
            lna_mh_run(
                &est,
                &spec.transform,
                &spec.prior,
                &pm_settings,
                cfg.x_thin,
                cfg.burn_in,
                &streams,
            )?
            .chain
        }
    };

    let param_names: Vec<String> = spec.param_names.iter().map(|s| s.to_string()).collect();
    let d = spec.state_dim();
    let n = problem.n();
    let mut chains: Vec<(String, Vec<f64>)> = param_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), chain.theta_trace(j)[cfg.burn_in..].to_vec()))
        .collect();
    if cfg.sampler.has_states() {
        let keep: Vec<usize> = (0..chain.x_o.len())
            .filter(|&r| chain.x_o_iterations[r] >= cfg.burn_in)
            .collect();
        for (k, name) in state_names(n, d).into_iter().enumerate() {
            chains.push((name, keep.iter().map(|&r| chain.x_o[r][k]).collect()));
        }
    }
    let acceptance = acceptance_rates(cfg.sampler, &chain);
    let ess = if chains.iter().all(|(_, c)| c.len() >= 10) {
        Some(ess_report(&chains, chain.elapsed.as_secs_f64(), acceptance)?)
    } else {
        None
    };
    Ok(RunResult {
        chain,
        tuned,
        ess,
        param_names,
        state_dim: d,
        n_obs: n,
    })
}

fn acceptance_rates(sampler: Sampler, chain: &ChainOutput<f64>) -> Vec<(String, f64)> {
    let mut out = vec![("theta".to_string(), chain.theta_acceptance.rate())];
    if sampler == Sampler::Acpmmh {
        out.push(("state".into(), chain.state_acceptance.rate()));
        out.push(("endpoint".into(), chain.endpoint_acceptance.rate()));
    }
    out
}

/// Chain files and summary for a finished run.
pub fn write_archive(cfg: &ExperimentConfig, res: &RunResult) -> CliResult<()> {
    create_dir(&cfg.output)?;
    let chain = &res.chain;
    let mut header = vec!["iteration".to_string()];
    header.extend(res.param_names.iter().cloned());
    header.push("log_lik".into());
    let theta_rows = (0..chain.iterations())
        .filter(|i| (i + 1) % cfg.theta_thin == 0)
        .map(|i| {
            let mut row = chain.theta[i].clone();
            row.push(chain.log_lik[i]);
            (i, row)
        });
    write_table(&cfg.output.join(THETA_FILE), &header, theta_rows)?;

    if cfg.sampler.has_states() {
        let mut header = vec!["iteration".to_string()];
        header.extend(state_names(res.n_obs, res.state_dim));
        // LNA draws are already thinned by the sampler.
        let every = if cfg.sampler == Sampler::LnaMh { 1 } else { cfg.x_thin };
        let rows = chain
            .x_o_iterations
            .iter()
            .zip(&chain.x_o)
            .filter(|(&i, _)| cfg.sampler == Sampler::LnaMh || (i + 1) % every == 0)
            .map(|(&i, x)| (i, x.clone()));
        write_table(&cfg.output.join(X_FILE), &header, rows)?;
    }
    summary(cfg, res).write(&cfg.output.join(SUMMARY_FILE))
}

fn summary(cfg: &ExperimentConfig, res: &RunResult) -> Summary {
    let mut s = Summary::default();
    s.push("version", VERSION);
    s.push("config_hash", cfg.hash());
    s.push("sampler", cfg.sampler.as_str());
    s.push("rho", cfg.rho);
    s.push("particles", res.tuned.file.particles as i64);
    s.push("iterations", res.chain.iterations() as i64);
    s.push("burn_in", cfg.burn_in as i64);
    s.push("n_obs", res.n_obs as i64);
    s.push("state_dim", res.state_dim as i64);
    for (name, rate) in acceptance_rates(cfg.sampler, &res.chain) {
        s.push(format!("acceptance.{name}"), rate);
    }
    s.push("seconds.pilot", res.tuned.pilot_seconds);
    s.push("seconds.select_n", res.tuned.select_seconds);
    s.push("seconds.main", res.chain.elapsed.as_secs_f64());
    match &res.ess {
        Some(r) => {
            for c in &r.chains {
                s.push(format!("ess.{}", c.name), c.estimate.ess);
            }
            s.push("ess.min", r.min_ess);
            s.push("ess.mess_per_second", r.mess_per_second);
            let degenerate: Vec<toml::Value> = r.degenerate().into_iter().map(toml::Value::from).collect();
            s.push("ess.degenerate", degenerate);
        }
        None => s.push("ess.min", f64::NAN),
    }
    s.push("tuning.option", String::from(cfg.tuning));
    if let Some(p) = &res.tuned.pilot {
        s.push("tuning.pilot_iterations", p.pilot_iterations as i64);
        for (name, rate) in &p.pilot_acceptance {
            s.push(format!("tuning.pilot_acceptance_{name}"), *rate);
        }
    }
    for (k, v) in cfg.key_values() {
        let value: toml::Value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(v));
        s.push(format!("config.{k}"), value);
    }
    s
}

pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunResult> {
    let res = run(cfg, load_data(cfg)?)?;
    write_archive(cfg, &res)?;
    Ok(res)
}

/// Config recovered from the echo in an archive summary.
pub fn config_from_summary(summary: &toml::Table) -> CliResult<ExperimentConfig> {
    let echo = summary
        .get("config")
        .and_then(|v| v.as_table())
        .ok_or_else(|| CliError::CorruptArchive("summary has no config echo".into()))?;
    ExperimentConfig::from_table(echo.clone())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary statistics written by `report`.
#[derive(Debug, Clone)]
pub struct Report {
    pub ess: EssReport,
    pub sampler: String,
    pub rho: f64,
    pub particles: i64,
    pub relative: f64,
}

fn lookup<'a>(t: &'a toml::Table, path: &[&str]) -> Option<&'a toml::Value> {
    let (last, init) = path.split_last()?;
    let mut cur = t;
    for k in init {
        cur = cur.get(*k)?.as_table()?;
    }
    cur.get(*last)
}

fn as_number(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

fn corrupt(msg: String) -> CliError {
    CliError::CorruptArchive(msg)
}

/// ESS and mESS/s recomputed from the stored draws, plus histogram and
/// credible-band files. `baseline` is another archive whose mESS/s is the
/// reference for the relative column.
pub fn cmd_report(archive: &Path, baseline: Option<&Path>, bins: usize, out: Option<&Path>) -> CliResult<Report> {
    if bins == 0 {
        return Err(CliError::Config("bins must be positive".into()));
    }
    let out = out.unwrap_or(archive);
    let report = archive_ess(archive)?;
    let relative = match baseline {
        Some(b) => report.ess.mess_per_second / archive_ess(b)?.ess.mess_per_second,
        None => 1.0,
    };
    let report = Report { relative, ..report };
    create_dir(out)?;

    let mut r = Summary::default();
    r.push("sampler", report.sampler.as_str());
    r.push("rho", report.rho);
    r.push("particles", report.particles);
    r.push("cpu_seconds", report.ess.seconds);
    for c in &report.ess.chains {
        r.push(format!("ess.{}", c.name), c.estimate.ess);
    }
    r.push("ess.min", report.ess.min_ess);
    let degenerate: Vec<toml::Value> = report.ess.degenerate().into_iter().map(toml::Value::from).collect();
    r.push("ess.degenerate", degenerate);
    r.push("mess_per_second", report.ess.mess_per_second);
    r.push("relative", report.relative);
    for (name, rate) in &report.ess.acceptance {
        r.push(format!("acceptance.{name}"), *rate);
    }
    r.write(&out.join("report.txt"))?;

    let mut w = String::from("sampler,rho,N,cpu_s,mess,mess_per_s,rel\n");
    w.push_str(&format!(
        "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
        report.sampler,
        report.rho,
        report.particles,
        report.ess.seconds,
        report.ess.min_ess,
        report.ess.mess_per_second,
        report.relative
    ));
    std::fs::write(out.join("table.csv"), w).map_err(|e| CliError::io("writing table.csv", e))?;

    let summary = read_summary(&archive.join(SUMMARY_FILE))?;
    let burn_in = lookup(&summary, &["burn_in"]).and_then(as_number).unwrap_or(0.0) as usize;
    let theta = read_table(&archive.join(THETA_FILE), corrupt)?;
    let mut hist = String::from("parameter,bin,lower,upper,density\n");
    for name in theta.header[1..theta.header.len() - 1].iter() {
        let draws = post_burn(&theta, name, burn_in);
        for (b, (lo, hi, dens)) in histogram(&draws, bins).into_iter().enumerate() {
            hist.push_str(&format!("{name},{b},{lo:.16e},{hi:.16e},{dens:.16e}\n"));
        }
    }
    std::fs::write(out.join("histogram.csv"), hist).map_err(|e| CliError::io("writing histogram.csv", e))?;

    let x_path = archive.join(X_FILE);
    if x_path.exists() {
        let x = read_table(&x_path, corrupt)?;
        let mut band = String::from("t,component,mean,lower,upper\n");
        for name in &x.header[1..] {
            let (t, j) = name[1..]
                .split_once('_')
                .ok_or_else(|| corrupt(format!("bad state column '{name}'")))?;
            let mut draws = post_burn(&x, name, burn_in);
            if draws.is_empty() {
                continue;
            }
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            draws.sort_by(f64::total_cmp);
            band.push_str(&format!(
                "{t},{j},{mean:.16e},{:.16e},{:.16e}\n",
                quantile(&draws, 0.025),
                quantile(&draws, 0.975)
            ));
        }
        std::fs::write(out.join("predictive.csv"), band).map_err(|e| CliError::io("writing predictive.csv", e))?;
    }
    Ok(report)
}

fn post_burn(t: &Table, name: &str, burn_in: usize) -> Vec<f64> {
    let col = t.column(name).unwrap_or_default();
    t.index
        .iter()
        .zip(col)
        .filter(|(&i, _)| i >= burn_in)
        .map(|(_, v)| v)
        .collect()
}

/// `(lower, upper, density)` for equal-width bins spanning the draws.
pub fn histogram(draws: &[f64], bins: usize) -> Vec<(f64, f64, f64)> {
    if draws.is_empty() {
        return Vec::new();
    }
    let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in draws {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = draws.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let l = lo + b as f64 * width;
            (l, l + width, c as f64 / (total * width))
        })
        .collect()
}

fn archive_ess(archive: &Path) -> CliResult<Report> {
    let summary = read_summary(&archive.join(SUMMARY_FILE))?;
    let get = |path: &[&str]| {
        lookup(&summary, path)
            .and_then(as_number)
            .ok_or_else(|| corrupt(format!("summary is missing {}", path.join("."))))
    };
    let seconds = get(&["seconds", "main"])?;
    let rho = get(&["rho"])?;
    let particles = get(&["particles"])? as i64;
    let burn_in = get(&["burn_in"])? as usize;
    let sampler = lookup(&summary, &["sampler"])
        .and_then(|v| v.as_str())
        .ok_or_else(|| corrupt("summary is missing sampler".into()))?
        .to_string();
    let acceptance: Vec<(String, f64)> = lookup(&summary, &["acceptance"])
        .and_then(|v| v.as_table())
        .map(|t| {
            t.iter()
                .filter_map(|(k, v)| as_number(v).map(|r| (k.clone(), r)))
                .collect()
        })
        .unwrap_or_default();

    let theta = read_table(&archive.join(THETA_FILE), corrupt)?;
    if theta.header.last().map(String::as_str) != Some("log_lik") {
        return Err(corrupt("theta file must end with a log_lik column".into()));
    }
    let mut chains: Vec<(String, Vec<f64>)> = theta.header[1..theta.header.len() - 1]
        .iter()
        .map(|name| (name.clone(), post_burn(&theta, name, burn_in)))
        .collect();
    let x_path = archive.join(X_FILE);
    if x_path.exists() {
        let x = read_table(&x_path, corrupt)?;
        for name in &x.header[1..] {
            chains.push((name.clone(), post_burn(&x, name, burn_in)));
        }
    }
    let ess = ess_report(&chains, seconds, acceptance).map_err(|e| corrupt(e.to_string()))?;
    Ok(Report {
        ess,
        sampler,
        rho,
        particles,
        relative: 1.0,
    })
}
