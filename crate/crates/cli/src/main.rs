//! `contagion`: run the reconstruction and simulation pipeline stage by stage.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("missing {}; run `contagion {subcommand}` first", path.display())]
    MissingArtifact { path: PathBuf, subcommand: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact { .. } => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<contagion_core::Error> for CliError {
    fn from(e: contagion_core::Error) -> Self {
        use contagion_core::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::Malformed { .. }
            | E::DuplicateId(_)
            | E::Timestamp { .. }
            | E::DimensionMismatch { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "contagion",
    version,
    about = "Contagion-network reconstruction and SIR simulation over news articles"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long = "gamma-hours", global = true)]
    gamma_hours: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pre-trained word vectors, used instead of `train` output.
    #[arg(long, global = true)]
    vectors: Option<PathBuf>,
    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a JSON Lines article file into the output directory.
    Ingest { input: Option<PathBuf> },
    /// Train skip-gram word vectors on the corpus.
    Train,
    /// Build TF-IDF weighted document vectors.
    Embed,
    /// Export pairwise similarities and their histograms.
    Similarity,
    /// Reconstruct the spread network at the configured rho and gamma.
    Reconstruct,
    /// Giant-component fraction over the rho grid.
    SweepRho,
    /// Infection lags over the window grid.
    SweepWindow,
    /// Publisher-level adjacency from the reconstructed network.
    Adjacency,
    /// Integrate the network SIR model at the configured lambda.
    Simulate,
    /// Peak infections per day over the lambda grid.
    FitLambda,
    /// Sample one state history and simulated spread network.
    Realize,
    /// Daily-incidence envelope over many realizations.
    Ensemble,
    /// Compare the ensemble envelope with empirical daily counts.
    Compare,
    /// Generate a corpus with planted cascades.
    Synth,
    /// Collect the figure CSVs into `<out>/report`.
    Report,
}

impl Cli {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.gamma_hours {
            c.gamma_hours = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.runs {
            c.runs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.vectors {
            c.vectors = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config()?;
    match &cli.command {
        Command::Ingest { input } => commands::ingest(&config, input.as_deref()),
        Command::Train => commands::train(&config),
        Command::Embed => commands::embed(&config),
        Command::Similarity => commands::similarity(&config),
        Command::Reconstruct => commands::reconstruct_network(&config),
        Command::SweepRho => commands::sweep_rho(&config),
        Command::SweepWindow => commands::sweep_window(&config),
        Command::Adjacency => commands::adjacency(&config),
        Command::Simulate => commands::simulate(&config),
        Command::FitLambda => commands::fit_lambda(&config),
        Command::Realize => commands::realize(&config),
        Command::Ensemble => commands::ensemble(&config),
        Command::Compare => commands::compare(&config),
        Command::Synth => commands::synth(&config),
        Command::Report => commands::report(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
