use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polarflip::flip::Strategy;
use polarflip::harness::{self, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "polarflip", version, about = "Polar code CA-SCL / bit-flip decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo BLER / extra-attempt sweep over Eb/N0.
    Sweep(Overrides),
    /// Training data from frames whose initial decode fails the CRC.
    Dataset(Overrides),
    /// Merge result files into results.csv and results.dat.
    Report {
        /// results.json or results CSV files written by `sweep`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the constructed code (information set, critical set) as JSON.
    Code(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON file mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// path_confidence, exact_ratio, simplified, lstm or genie.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    tmax: Option<usize>,
    #[arg(long)]
    list_size: Option<usize>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated Eb/N0 values in dB.
    #[arg(long, value_delimiter = ',')]
    ebn0: Option<Vec<f64>>,
    #[arg(long)]
    frames: Option<u64>,
    /// Stop a point after this many block errors; 0 disables early stopping.
    #[arg(long)]
    target_errors: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write a per-frame diagnostic log.
    #[arg(long)]
    diagnostics: bool,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.tmax {
            c.t_max = v;
        }
        if let Some(v) = self.list_size {
            c.list_size = v;
        }
        if let Some(v) = self.weights {
            c.weights_path = Some(v);
        }
        if let Some(v) = self.out {
            c.output_dir = v;
        }
        if let Some(v) = self.ebn0 {
            c.ebn0_db = v;
        }
        if let Some(v) = self.frames {
            c.frames_per_point = v;
        }
        if let Some(v) = self.target_errors {
            c.target_block_errors = (v > 0).then_some(v);
        }
        if let Some(v) = self.threads {
            c.threads = Some(v);
        }
        c.diagnostics |= self.diagnostics;
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Sweep(o) => {
            let config = o.resolve()?;
            let results = harness::run_sweep_to_dir(&config)?;
            for r in &results {
                println!(
                    "{} L={} T_max={} ebn0={} dB: frames={} errors={} bler={:.4e} [{:.2e}, {:.2e}] extra_attempts={:.4} ({:.1} s)",
                    r.strategy,
                    r.list_size,
                    r.t_max,
                    r.ebn0_db,
                    r.frames,
                    r.block_errors,
                    r.bler,
                    r.bler_low,
                    r.bler_high,
                    r.mean_extra_attempts,
                    r.wall_seconds
                );
            }
            println!("wrote {}", config.output_dir.display());
        }
        Command::Dataset(o) => {
            let config = o.resolve()?;
            let meta = harness::generate_dataset(&config, &config.output_dir)?;
            println!(
                "train={} validation={} normalization={} histogram={:?}",
                meta.train_count, meta.validation_count, meta.normalization, meta.label_histogram
            );
            println!("wrote {}", config.output_dir.display());
        }
        Command::Report { inputs, out } => {
            let mut all = Vec::new();
            for path in &inputs {
                all.extend(harness::read_results(path)?);
            }
            harness::report(&all, &out)?;
            println!("{} rows -> {}", all.len(), out.display());
        }
        Command::Code(o) => {
            let config = o.resolve()?;
            let desc = config.code.build()?.description();
            println!("{}", serde_json::to_string_pretty(&desc).expect("description serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polarflip: {e}");
            ExitCode::FAILURE
        }
    }
}
