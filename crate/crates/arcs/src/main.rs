use std::path::PathBuf;
use std::process::ExitCode;

use arcs::config::{ExperimentSpec, RawSpec};
use arcs::{commands, selftest, HarnessError};
use clap::{Args, Parser, Subcommand};

/// Covariate-adaptive randomization with sequential covariate selection.
#[derive(Parser)]
#[command(name = "arcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trial per method and write its assignments.
    Run(Flags),
    /// Replication study: summary, per-replication and trajectory CSVs plus a console table.
    Table(Flags),
    /// Fit a pseudo-trial on a data table, then run the replication study on it.
    Calibrate(Flags),
    /// Run the invariant checks.
    Selftest {
        #[arg(long, default_value_t = arcs::config::DEFAULT_SEED)]
        seed: u64,
    },
}

/// Every flag mirrors a key of the JSON config file and overrides it.
#[derive(Args)]
struct Flags {
    /// JSON file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1a, 1b, 2, 3, 4 or calibrated.
    #[arg(long)]
    example: Option<String>,
    /// Comma-separated: cr, rr, arm, cov, arcs-m, arcs-cov, arcs-m-add, arcs-cov-add.
    #[arg(long, value_delimiter = ',', alias = "method")]
    methods: Option<Vec<String>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Initial stage size.
    #[arg(long = "N0")]
    n0: Option<usize>,
    /// Batch size between refits.
    #[arg(long = "N")]
    batch: Option<usize>,
    /// Biased-coin probability.
    #[arg(long)]
    rho: Option<f64>,
    /// w0,w1,w2 of the mean/covariance feature map.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// linear or quadratic (calibrated example).
    #[arg(long)]
    form: Option<String>,
    /// Calibration CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Outcome column of the calibration CSV.
    #[arg(long)]
    outcome: Option<String>,
    /// 0/1 arm column of the calibration CSV; pass an empty value for none.
    #[arg(long)]
    arm: Option<String>,
    /// Covariates of the calibrated outcome model.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl Flags {
    fn into_raw(self) -> (Option<PathBuf>, RawSpec) {
        let raw = RawSpec {
            example: self.example,
            methods: self.methods,
            n: self.n,
            p: self.p,
            n0: self.n0,
            batch: self.batch,
            rho: self.rho,
            weights: self.weights.map(|w| [w[0], w[1], w[2]]),
            reps: self.reps,
            seed: self.seed,
            threads: self.threads,
            out: self.out,
            form: self.form,
            data: self.data,
            outcome: self.outcome,
            arm: self.arm,
            covariates: self.covariates,
        };
        (self.config, raw)
    }

    /// Defaults, then the config file, then the flags.
    fn spec(self, defaults: RawSpec) -> arcs::Result<ExperimentSpec> {
        let (file, flags) = self.into_raw();
        let file = file.as_deref().map(RawSpec::from_file).transpose()?.unwrap_or_default();
        ExperimentSpec::resolve(defaults.overlay(file).overlay(flags))
    }
}

fn execute(command: Command) -> arcs::Result<()> {
    match command {
        Command::Run(flags) => print!("{}", commands::cmd_run(&flags.spec(RawSpec::default())?)?),
        Command::Table(flags) => print!("{}", commands::cmd_table(&flags.spec(RawSpec::default())?)?),
        Command::Calibrate(flags) => {
            let defaults = RawSpec {
                example: Some("calibrated".into()),
                ..RawSpec::default()
            };
            print!("{}", commands::cmd_calibrate(&flags.spec(defaults)?)?)
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed)?;
            for c in &checks {
                println!("{c}");
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if !failed.is_empty() {
                return Err(HarnessError::Selftest(format!("failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ARCS_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
