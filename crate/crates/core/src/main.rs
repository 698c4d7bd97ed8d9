use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellqos::pipeline::{
    stage_evaluate, stage_features, stage_ingest, stage_kpi, stage_neighbors, stage_pipeline,
    stage_synth, stage_train, stage_weights, PipelineConfig, PipelineError,
};

/// Cell-level 5G quality-of-service estimation pipeline.
#[derive(Parser)]
#[command(name = "cellqos", version, about)]
struct Cli {
    /// Flat key=value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every random component of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// KPI throughput threshold in Mbps.
    #[arg(long, global = true)]
    x: Option<f64>,

    /// Coverage threshold in percentage points.
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Input directory with the cells/split/throughput/slots/land-use
    /// tables.
    #[arg(long = "in", global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long = "out", global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-city dataset into the input directory.
    Synth,
    /// Parse and validate the cells table; report eligibility counts.
    Ingest,
    /// Compute the experience-rate KPI per cell.
    Kpi,
    /// Export neighbor/interferer edges for map plotting.
    Neighbors,
    /// Assemble the feature matrix and targets.
    Features,
    /// Compute label-distribution-smoothing sample weights.
    Weights,
    /// Train the boosted-tree model on the train split.
    Train,
    /// Predict and report MAPE / coverage per scope.
    Evaluate,
    /// Run ingest through evaluate in order.
    Pipeline,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Kpi => "kpi",
            Command::Neighbors => "neighbors",
            Command::Features => "features",
            Command::Weights => "weights",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Pipeline => "pipeline",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::default();
    if let Some(path) = &cli.config {
        config.load_file(path)?;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if let Some(seed) = cli.seed {
        config.apply("seed", &seed.to_string())?;
    }
    if let Some(x) = cli.x {
        config.x_mbps = x;
    }
    if let Some(theta) = cli.theta {
        config.theta = theta;
    }
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let config = resolve_config(cli)?;

    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| PipelineError::Message(format!("thread pool: {e}")))?;
    }

    for (key, value) in config.resolved_pairs() {
        println!("config {key}={value}");
    }

    match cli.command {
        Command::Synth => stage_synth(&config),
        Command::Ingest => stage_ingest(&config),
        Command::Kpi => stage_kpi(&config),
        Command::Neighbors => stage_neighbors(&config),
        Command::Features => stage_features(&config),
        Command::Weights => stage_weights(&config),
        Command::Train => stage_train(&config),
        Command::Evaluate => stage_evaluate(&config),
        Command::Pipeline => stage_pipeline(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('"', "'").replace('\n', " ");
            eprintln!("error stage={} message=\"{message}\"", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
