use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flipsim::harness::{
    load_spec, run_experiment, save_report, write_csv, ClockSource, ExperimentReport,
    ExperimentSpec, Protocol,
};
use flipsim::oracle::{
    direct_sample_requirement, majority_bound_check, stirling_check, ANALYSIS_R_SCALE,
};
use flipsim::{Error, ProtocolConstants};

#[derive(Parser)]
#[command(
    name = "flipsim",
    version,
    about = "Noisy push-gossip simulator and oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo batch for a single (n, epsilon) cell.
    Run(RunArgs),
    /// Runs every cell of a spec file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Defaults to the spec's outputPath.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Numerical checks of the analytic bounds.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    protocol: Protocol,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    initial_bias: Option<f64>,
    #[arg(long)]
    initial_set_size: Option<usize>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    max_rounds: Option<u64>,
    #[arg(long, value_enum)]
    clock_source: Option<ClockSource>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Majority of 2r+1 samples against min(1/2 + 4 delta, 0.51).
    Lemma2 {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Use r = ceil(2^22 / eps^2) instead of the simulation scale.
        #[arg(long, conflicts_with = "r_scale")]
        paper_constants: bool,
        #[arg(long)]
        r_scale: Option<f64>,
    },
    /// Central binomial terms against 1/(10 sqrt r) for r = 1..=r-max.
    Stirling {
        #[arg(long, default_value_t = 10_000)]
        r_max: u64,
    },
    /// Samples needed when every agent hears the source directly.
    Direct {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 2.0)]
        exponent: f64,
    },
}

enum Failure {
    Error(Error),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialisation failed: {e}")))?;
    println!("{text}");
    Ok(())
}

fn finish(
    report: &ExperimentReport,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> Result<(), Failure> {
    for c in &report.per_cell {
        println!(
            "n={} eps={} runs={} success={:.4} [{:.4}, {:.4}] rounds={:.1} messages={:.0}",
            c.n,
            c.epsilon,
            c.runs,
            c.success_rate,
            c.wilson_lo,
            c.wilson_hi,
            c.mean_rounds,
            c.mean_messages
        );
    }
    if let Some(path) = out {
        save_report(report, &path)?;
    }
    if let Some(path) = csv {
        write_csv(report, &path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let mut spec =
                ExperimentSpec::new(args.protocol, vec![args.n], vec![args.eps], args.runs);
            spec.master_seed = args.seed;
            spec.initial_bias = args.initial_bias;
            spec.initial_set_size = args.initial_set_size;
            spec.threshold = args.threshold;
            spec.max_rounds = args.max_rounds;
            spec.clock_source = args.clock_source;
            spec.output_path = args.out.clone();
            let report = run_experiment(&spec)?;
            finish(&report, args.out, args.csv)
        }
        Command::Sweep { spec, out, csv } => {
            let spec = load_spec(&spec)?;
            let out = out.or_else(|| spec.output_path.clone());
            let report = run_experiment(&spec)?;
            finish(&report, out, csv)
        }
        Command::Oracle(OracleCommand::Lemma2 {
            eps,
            delta,
            paper_constants,
            r_scale,
        }) => {
            let scale = if paper_constants {
                ANALYSIS_R_SCALE
            } else {
                r_scale.unwrap_or(ProtocolConstants::default().r_scale)
            };
            let check = majority_bound_check(eps, delta, scale)?;
            print_json(&check)?;
            if check.holds {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
        Command::Oracle(OracleCommand::Stirling { r_max }) => {
            if r_max == 0 {
                return Err(Error::Argument("r-max must be at least 1".into()).into());
            }
            let mut worst = stirling_check(1)?;
            let mut failures = Vec::new();
            for r in 1..=r_max {
                let c = stirling_check(r)?;
                if !c.holds {
                    failures.push(r);
                }
                if c.min_ratio < worst.min_ratio {
                    worst = c;
                }
            }
            #[derive(Serialize)]
            #[serde(rename_all = "camelCase")]
            struct Summary {
                r_max: u64,
                holds: bool,
                worst_r: u64,
                min_ratio: f64,
                failures: Vec<u64>,
            }
            let holds = failures.is_empty();
            print_json(&Summary {
                r_max,
                holds,
                worst_r: worst.r,
                min_ratio: worst.min_ratio,
                failures,
            })?;
            if holds {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
        Command::Oracle(OracleCommand::Direct { eps, n, exponent }) => {
            let m = direct_sample_requirement(eps, n, exponent)?;
            println!("{m}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckFailed) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("flipsim: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
