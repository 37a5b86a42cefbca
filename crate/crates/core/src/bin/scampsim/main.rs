//! `scampsim`: dataset generation, training, lowering, inference,
//! benchmarking, servo-loop simulation and plane dumps from one binary.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const AFTER_HELP: &str = "\
Errors are reported on stderr as a single line `error: <kind>: <message>` \
with a nonzero exit status; files a failed command had started writing are \
removed.

Set SCAMPSIM_LOG (e.g. `info`, `debug`, `scampsim=trace`) for log output.";

#[derive(Debug, Parser)]
#[command(name = "scampsim", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Exact integer arithmetic.
    Ideal,
    /// Analog values clamp to [-128, 127].
    Saturating,
}

#[derive(Debug, Clone, Args)]
struct GlobalArgs {
    /// Model weights (JSON). Defaults to the built-in seeded random model.
    #[arg(long, global = true, value_name = "FILE")]
    weights: Option<PathBuf>,
    /// Dataset directory (manifest.json, or class subdirectories of PGMs).
    #[arg(long, global = true, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Instruction cost table (JSON). Defaults to the shipped table.
    #[arg(long, global = true, value_name = "FILE")]
    cost_table: Option<PathBuf>,
    /// Seed for generation, training, random checks and noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Standard deviation of Gaussian noise on each global sum.
    #[arg(long, global = true, default_value_t = 0.0, value_name = "SIGMA")]
    noise_sigma: f64,
    /// Analog arithmetic mode.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Ideal)]
    mode: Mode,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic rock/paper/scissors dataset as PGMs plus a manifest.
    Gen(commands::GenArgs),
    /// Train binary weights; writes weights.json, train_log.csv and evaluation.json.
    Train(commands::TrainArgs),
    /// Lower the model; writes program.lst and plan.json.
    Lower,
    /// Classify images and compare against the reference inference.
    Infer(commands::InferArgs),
    /// Print the cost-model latency and throughput of the lowered program.
    Bench(commands::BenchArgs),
    /// Simulate the servo loop; writes timeline.csv and reactions.json.
    Loop(commands::LoopArgs),
    /// Write every intermediate plane of one inference as PGM/PBM.
    Dump(commands::DumpArgs),
}

fn one_line(text: &str) -> String {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SCAMPSIM_LOG"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return ExitCode::from(2);
            }
            let msg = e.to_string();
            let msg = msg.trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(msg.split("\n\n").next().unwrap_or(msg)));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let text = e.to_string();
            let msg = text
                .strip_prefix(kind)
                .map(|rest| rest.trim_start_matches(':').trim_start())
                .unwrap_or(&text);
            eprintln!("error: {kind}: {}", one_line(msg));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> scampsim::Result<()> {
    let ctx = commands::Context::new(cli.global)?;
    match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Lower => commands::lower(&ctx),
        Command::Infer(a) => commands::infer(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::Loop(a) => commands::run_loop(&ctx, a),
        Command::Dump(a) => commands::dump(&ctx, a),
    }
}
