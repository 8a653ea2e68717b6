use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geocheck_cli::{analyze, run, validate, AnalyzeArgs, BackendSpec, CliError, Config, RunArgs};
use geocheck_core::corpus::Region;
use geocheck_core::runner::ScenarioKind;
use geocheck_core::stats::References;

#[derive(Parser)]
#[command(name = "geocheck", version, about = "Regional fact-checking evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a statement corpus and print its balance report.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Fail on any balance, date or length violation.
        #[arg(long)]
        strict: bool,
    },
    /// Run one fact-checking scenario over a corpus.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        /// statement, rag or agent.
        #[arg(long)]
        scenario: ScenarioKind,
        /// Overrides model_id from the config.
        #[arg(long)]
        model: Option<String>,
        /// wire, scripted:echo-gold or scripted:<trajectory file>.
        #[arg(long, default_value = "wire")]
        backend: BackendSpec,
        /// Overrides parallelism from the config.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Record file to write (one JSON object per line).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        /// Add wall time and cache counts to each record.
        #[arg(long)]
        telemetry: bool,
    },
    /// Accuracy tables, confusion matrices and the logistic regression.
    Analyze {
        /// Record file, or an accuracy-cell CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Sonnet 3.5")]
        reference_model: String,
        #[arg(long, default_value = "asia_pacific")]
        reference_region: Region,
        #[arg(long, default_value = "statement")]
        reference_scenario: ScenarioKind,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Validate { corpus, strict } => validate(&corpus, strict, &mut stdout).map(drop),
        Command::Run { corpus, scenario, model, backend, parallelism, out, config, strict, telemetry } => {
            let mut config = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            if let Some(m) = model {
                config.model_id = m;
            }
            if let Some(p) = parallelism {
                config.parallelism = p;
            }
            let args = RunArgs { corpus, scenario, backend, out, config, strict, telemetry };
            run(&args, &mut stdout).map(drop)
        }
        Command::Analyze { input, out, reference_model, reference_region, reference_scenario, parallelism } => {
            let references =
                References { model: reference_model, region: reference_region, scenario: reference_scenario };
            let args = AnalyzeArgs { input, out_dir: out, references, parallelism };
            analyze(&args, &mut stdout).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
