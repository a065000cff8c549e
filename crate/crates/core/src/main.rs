use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use popd::cli::{self, Experiment, RunConfig, Scale};

#[derive(Parser)]
#[command(name = "popd", version, about = "Predictive online primal-dual splitting for dynamic imaging")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one predictor on the configured scenario.
    Run { config: PathBuf },
    /// Run several predictors on one shared frame sequence and summarise.
    Compare {
        config: PathBuf,
        /// Predictor names, e.g. `dual_scaling no_prediction`.
        #[arg(required = true, num_args = 1..)]
        predictors: Vec<String>,
    },
    /// Adjoint, prox, preservation and gradient checks at small sizes.
    Selftest,
    /// Print the default config of an experiment.
    Defaults {
        #[arg(value_enum)]
        experiment: ExperimentArg,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Stabilise,
    Pet,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_USAGE as u8 } else { 0 });
        }
    };
    let code = match args.command {
        Command::Run { config } => cli::cmd_run(&config),
        Command::Compare { config, predictors } => cli::cmd_compare(&config, &predictors),
        Command::Selftest => cli::cmd_selftest(),
        Command::Defaults { experiment, scale } => {
            let e = match experiment {
                ExperimentArg::Stabilise => Experiment::Stabilise,
                ExperimentArg::Pet => Experiment::Pet,
            };
            let s = match scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            print!("{}", RunConfig::defaults(e, s).render());
            cli::EXIT_OK
        }
    };
    ExitCode::from(code as u8)
}
