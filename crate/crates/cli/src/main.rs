use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obsclade::report::{parse_measure, run_experiment, ExperimentConfig, Mode, SampleSizes};
use obsclade::{Error, LambdaSpec, Result};

/// Observable clade sizes in Λ-coalescents: simulation, exact moments and limit laws.
#[derive(Debug, Parser)]
#[command(name = "obsclade", version)]
struct Cli {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "OBSCLADE_THREADS")]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate merger rates λ_{b,k} and total rates λ_b for b ≤ n.
    Rates {
        #[command(flatten)]
        measure: MeasureArg,
        /// Largest number of blocks.
        #[arg(long)]
        n: Option<SampleSizes>,
    },
    /// Simulate genealogies with mutations and write per-leaf statistics.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<u64>,
        /// Exponential growth rate (0 = constant size).
        #[arg(long, allow_negative_numbers = true)]
        rho: Option<f64>,
        /// Use the single-leaf samplers and write `replicate,O1,X`.
        #[arg(long)]
        fast: bool,
    },
    /// Exact moments E(X_m^j), E(O_m^j) for m ≤ n, j ≤ j_max.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        j_max: Option<usize>,
        /// Exact rational arithmetic.
        #[arg(long)]
        exact: bool,
        #[arg(long, hide = true)]
        oracle: bool,
    },
    /// Limit moments E(S^k) of O_n/n.
    Asymptotics {
        #[command(flatten)]
        measure: MeasureArg,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        rho: Option<f64>,
        /// Also report the Beta law proposed for the Bolthausen-Sznitman limit.
        #[arg(long)]
        beta_compare: bool,
    },
    /// Monte Carlo moments of O_n(1) and X_n against the exact recursions.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        j_max: Option<usize>,
        #[arg(long)]
        replicates: Option<u64>,
    },
    /// Full-pipeline O_n/n moments along an n ladder against the limit moments.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        replicates: Option<u64>,
        #[arg(long, allow_negative_numbers = true)]
        rho: Option<f64>,
        /// Additive band on the frequency scale.
        #[arg(long, allow_negative_numbers = true)]
        slack: Option<f64>,
        #[arg(long)]
        beta_compare: bool,
    },
}

#[derive(Debug, Args)]
struct MeasureArg {
    /// kingman, uniform, dirac:P, beta:A,B, beta-alpha:ALPHA, or a JSON object.
    #[arg(long, value_parser = parse_measure_arg)]
    measure: Option<LambdaSpec>,
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    measure: MeasureArg,
    /// Sample size or comma-separated ladder.
    #[arg(long)]
    n: Option<SampleSizes>,
    /// Mutation rate θ (mutations arrive at rate θ/2 per lineage).
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
}

fn parse_measure_arg(text: &str) -> std::result::Result<LambdaSpec, String> {
    parse_measure(text).map_err(|e| e.to_string())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Common {
    fn apply(self, c: &mut ExperimentConfig) {
        set(&mut c.measure, self.measure.measure);
        set(&mut c.n, self.n);
        set(&mut c.theta, self.theta);
    }
}

fn mode_of(command: &Command) -> Mode {
    match command {
        Command::Rates { .. } => Mode::Rates,
        Command::Simulate { .. } => Mode::Simulate,
        Command::Moments { .. } => Mode::Moments,
        Command::Asymptotics { .. } => Mode::Asymptotics,
        Command::Compare { .. } => Mode::Compare,
        Command::Convergence { .. } => Mode::Convergence,
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig> {
    let mode = mode_of(&cli.command);
    let mut c = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
            let mut c = ExperimentConfig::from_json(&text)?;
            c.mode = mode;
            c
        }
        None => ExperimentConfig::new(mode),
    };
    set(&mut c.seed, cli.seed);
    set(&mut c.threads, cli.threads);
    set(&mut c.out, cli.out);
    match cli.command {
        Command::Rates { measure, n } => {
            set(&mut c.measure, measure.measure);
            set(&mut c.n, n);
        }
        Command::Simulate { common, replicates, rho, fast } => {
            common.apply(&mut c);
            set(&mut c.replicates, replicates);
            set(&mut c.rho, rho);
            c.fast |= fast;
        }
        Command::Moments { common, j_max, exact, oracle } => {
            common.apply(&mut c);
            set(&mut c.j_max, j_max);
            c.exact |= exact;
            c.oracle |= oracle;
        }
        Command::Asymptotics { measure, theta, k_max, rho, beta_compare } => {
            set(&mut c.measure, measure.measure);
            set(&mut c.theta, theta);
            set(&mut c.k_max, k_max);
            set(&mut c.rho, rho);
            c.beta_compare |= beta_compare;
        }
        Command::Compare { common, j_max, replicates } => {
            common.apply(&mut c);
            set(&mut c.j_max, j_max);
            set(&mut c.replicates, replicates);
        }
        Command::Convergence { common, k_max, replicates, rho, slack, beta_compare } => {
            common.apply(&mut c);
            set(&mut c.k_max, k_max);
            set(&mut c.replicates, replicates);
            set(&mut c.rho, rho);
            set(&mut c.slack, slack);
            c.beta_compare |= beta_compare;
        }
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests go to stdout and are not failures.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = build_config(cli).and_then(|config| run_experiment(&config));
    match outcome {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for file in &outcome.files {
                eprintln!("wrote {}", file.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
