mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit code for validation or data errors.
const EXIT_DATA: u8 = 1;
/// Exit code for internal invariant violations.
const EXIT_INTERNAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "invplan", version, about = "Bayesian inverse planning over symbolic world models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Infer mental states from one stimulus.
    Run(RunArgs),
    /// Correlate model ratings with human ratings over a stimulus directory.
    Eval(EvalArgs),
    /// Cross-check the filter against the exhaustive oracle.
    Verify(VerifyArgs),
    /// Synthesize a domain bundle from a task description.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Bundle directory or built-in domain name; defaults to the stimulus' `domain` field.
    #[arg(long)]
    domain: Option<String>,
    /// Agent configuration replacing the bundle's.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rationality parameter, overriding the configuration.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    stimulus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Include planner cache counters, which vary with thread scheduling.
    #[arg(long)]
    stats: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    stimuli: PathBuf,
    human: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = invplan::report::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = invplan::report::DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Also write the scatter pairs as CSV.
    #[arg(long)]
    scatter: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    stimuli: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Adds this much to one filter log-weight before comparing.
    #[arg(long, hide = true)]
    inject_fault: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON task: description, objects, grid_size.
    task: PathBuf,
    /// Directory receiving domain.pddl, config.json and the attempt log.
    #[arg(long)]
    out: PathBuf,
    /// Recorded attempt log to replay instead of calling a service.
    #[arg(long, conflicts_with = "transport_url")]
    replay: Option<PathBuf>,
    #[arg(long)]
    transport_url: Option<String>,
    #[arg(long, default_value = "gemini-2.0-flash")]
    model_name: String,
    #[arg(long, default_value_t = invplan::synthesis::DEFAULT_ATTEMPT_CAP)]
    cap: usize,
    #[arg(long, default_value_t = invplan::synthesis::DEFAULT_TEMPERATURE)]
    temperature: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own usage code would collide with EXIT_INTERNAL
            let code = if e.use_stderr() { EXIT_DATA } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::Synth(a) => commands::synth(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.internal { EXIT_INTERNAL } else { EXIT_DATA })
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
