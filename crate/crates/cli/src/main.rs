use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sde_pmcmc_cli::commands::{cmd_report, cmd_run, cmd_simulate, cmd_tune};
use sde_pmcmc_cli::{CliResult, ConfigLayer, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "sde-pmcmc",
    version,
    about = "Particle MCMC for partially observed diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Experiment {
    /// TOML file; its settings override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    layer: ConfigLayer,
}

impl Experiment {
    fn resolve(self) -> CliResult<ExperimentConfig> {
        let layer = match &self.config {
            Some(path) => self.layer.overlay(&ConfigLayer::from_file(path)?)?,
            None => self.layer,
        };
        ExperimentConfig::resolve(layer)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observations from the model.
    Simulate(Experiment),
    /// Tune initial values, proposals and the particle count.
    Tune(Experiment),
    /// Tune, then run the sampler and write a chain archive.
    Run(Experiment),
    /// ESS table, histograms and credible bands for an archive.
    Report {
        #[arg(long)]
        archive: PathBuf,
        /// Archive whose mESS/s is the reference for the relative column.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Output directory; defaults to the archive.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Simulate(e) => Ok(cmd_simulate(&e.resolve()?)?.display().to_string()),
        Command::Tune(e) => Ok(cmd_tune(&e.resolve()?)?.display().to_string()),
        Command::Run(e) => {
            let cfg = e.resolve()?;
            let res = cmd_run(&cfg)?;
            let mess = res.ess.as_ref().map_or(f64::NAN, |r| r.min_ess);
            Ok(format!("{} (min ESS {mess:.1})", cfg.output.display()))
        }
        Command::Report {
            archive,
            baseline,
            bins,
            out,
        } => {
            let r = cmd_report(&archive, baseline.as_deref(), bins, out.as_deref())?;
            Ok(format!(
                "min ESS {:.1}, mESS/s {:.3}",
                r.ess.min_ess, r.ess.mess_per_second
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
