//! `yieldbench`: end-to-end driver-yielding prediction benchmark.
//!
//! Subcommands run the pipeline stages over one run-configuration file:
//! `stats`, `fit`, `knowledge`, `prompt-preview`, `predict`, `evaluate`,
//! `cost`, plus `gen-data` for seeded synthetic datasets.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data/validation error,
//! 3 transport error, 4 degraded run (parse-failure share exceeded).

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Transport(String),
    Degraded,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Degraded => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Transport(m) => m.clone(),
            CliError::Degraded => "degraded run: parse-failure share exceeded".to_string(),
        }
    }
}

impl From<yieldbench_core::schema::SchemaError> for CliError {
    fn from(e: yieldbench_core::schema::SchemaError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::data::DataError> for CliError {
    fn from(e: yieldbench_core::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::stats::StatsError> for CliError {
    fn from(e: yieldbench_core::stats::StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::logit::LogitError> for CliError {
    fn from(e: yieldbench_core::logit::LogitError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::knowledge::KnowledgeError> for CliError {
    fn from(e: yieldbench_core::knowledge::KnowledgeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::prompt::PromptError> for CliError {
    fn from(e: yieldbench_core::prompt::PromptError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::eval::EvalError> for CliError {
    fn from(e: yieldbench_core::eval::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::cost::CostError> for CliError {
    fn from(e: yieldbench_core::cost::CostError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<yieldbench_core::llm::LlmError> for CliError {
    fn from(e: yieldbench_core::llm::LlmError) -> Self {
        use yieldbench_core::llm::LlmError::*;
        match &e {
            MissingApiKey(_) | Config { .. } | UnknownProvider(_) => {
                CliError::Usage(e.to_string())
            }
            Capability(_) => CliError::Data(e.to_string()),
            _ => CliError::Transport(e.to_string()),
        }
    }
}

impl From<yieldbench_core::inference::InferenceError> for CliError {
    fn from(e: yieldbench_core::inference::InferenceError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "yieldbench", version, about = "Driver-yielding prediction benchmark pipeline")]
struct Cli {
    /// Run-configuration file.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Override paths.output_dir.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override run.mode (live|record|replay|mock).
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Override run.provider.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Override run.parallelism.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Seed for gen-data.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics of the training partition.
    Stats,
    /// Stepwise logistic-regression baseline fit.
    Fit,
    /// Synthesized domain-knowledge block.
    Knowledge,
    /// Fully assembled prompt for one test event.
    PromptPreview {
        /// Event id; defaults to the first test event.
        #[arg(long)]
        event_id: Option<String>,
    },
    /// Batch inference over the test partition.
    Predict,
    /// Metrics (+ cost) for a manifest, or the no-LLM logistic baseline
    /// when no manifest is given.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Cost report for a manifest.
    Cost {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Seeded synthetic dataset (events.csv, sites.csv, schema.toml).
    GenData {
        /// `full` (18 sites, 3,314 events) or `demo` (4 sites, 85 events).
        #[arg(long, default_value = "demo")]
        layout: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    // gen-data runs without a config file
    if let Command::GenData { layout, out } = &cli.command {
        return pipeline::cmd_gen_data(layout, cli.seed, out);
    }

    let mut config = RunConfig::load(&cli.config)?;
    if let Some(output) = cli.output {
        config.output_dir = output;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(provider) = cli.provider {
        config.provider = provider;
    }
    if let Some(parallelism) = cli.parallelism {
        config.parallelism = parallelism;
    }

    match &cli.command {
        Command::Stats => pipeline::cmd_stats(&config),
        Command::Fit => pipeline::cmd_fit(&config),
        Command::Knowledge => pipeline::cmd_knowledge(&config),
        Command::PromptPreview { event_id } => {
            pipeline::cmd_prompt_preview(&config, event_id.as_deref())
        }
        Command::Predict => pipeline::cmd_predict(&config),
        Command::Evaluate { manifest } => match manifest {
            Some(path) => pipeline::cmd_evaluate_manifest(&config, path),
            None => pipeline::cmd_evaluate_baseline(&config),
        },
        Command::Cost { manifest } => pipeline::cmd_cost(&config, manifest),
        Command::GenData { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output goes to stdout with status 0
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
