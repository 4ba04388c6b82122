mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{InputFormat, SynthKind, UsageError};

#[derive(Debug, Parser)]
#[command(name = "ssmrisk", version, about = "Surrogate-safety risk estimation and jerk-based evaluation")]
struct Cli {
    /// Declarative run configuration (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    run_config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct InputArgs {
    /// Input format.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,

    /// Generic CSV files or directories of them.
    pub inputs: Vec<PathBuf>,

    /// HighD recording ids, e.g. `01`, `1-57` or `3,5,9`. Repeatable.
    #[arg(long = "recording", value_name = "ID")]
    pub recordings: Vec<String>,

    /// Directory holding HighD recordings.
    #[arg(long, env = "SSMRISK_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    /// Lane layout (TOML) for generic inputs. Defaults to `<stem>.layout.toml`
    /// or `layout.toml` next to each input.
    #[arg(long)]
    pub layout: Option<PathBuf>,

    /// Frame rate of generic inputs (Hz).
    #[arg(long)]
    pub frame_rate: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate inputs and print a summary.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        /// Write each scene as generic CSV (plus its layout) into this directory.
        #[arg(long, value_name = "DIR")]
        write_generic: Option<PathBuf>,
    },
    /// Compute per-ego risk time series for one model.
    Risk {
        #[command(flatten)]
        input: InputArgs,
        /// Model id such as `2a` or `1f`.
        #[arg(long)]
        config: Option<String>,
        /// Trained autoencoder for configurations f and g.
        #[arg(long)]
        ae: Option<PathBuf>,
        /// Restrict to one ego vehicle id.
        #[arg(long)]
        ego: Option<u32>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Correlate risk gradients with jerk for one or more models.
    Eval {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated model ids (default: the twelve-model grid).
        #[arg(long, value_delimiter = ',')]
        configs: Vec<String>,
        /// Trained linear autoencoder (configuration f).
        #[arg(long)]
        ae_linear: Option<PathBuf>,
        /// Trained tanh autoencoder (configuration g).
        #[arg(long)]
        ae_tanh: Option<PathBuf>,
        #[arg(long)]
        significance: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Pairwise signed-rank comparison of evaluated models.
    Compare {
        /// Result CSVs written by `eval`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        significance: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic scenes as generic CSV.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<SynthKind>,
        /// Reaction delay (s) of the ego in a cut-in.
        #[arg(long)]
        delay: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        /// Scenario description (TOML).
        #[arg(long, conflicts_with_all = ["kind", "golden", "responsive"])]
        spec: Option<PathBuf>,
        /// Write the golden battery with its expected SSM values.
        #[arg(long, conflicts_with_all = ["kind", "responsive"])]
        golden: bool,
        /// Write this many randomized reactive cut-in scenes.
        #[arg(long, value_name = "N", conflicts_with = "kind")]
        responsive: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ssmrisk::Error>() {
            return match e {
                ssmrisk::Error::NoEgoCandidates => 3,
                e if e.is_input_error() => 2,
                _ => 1,
            };
        }
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() || cause.is::<toml::de::Error>() {
            return 2;
        }
    }
    1
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = config::RunConfig::load(cli.run_config.as_deref())?;
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Ingest { input, write_generic } => commands::ingest(&file.input(&input)?, write_generic.as_deref()),
        Command::Risk { input, config, ae, ego, out } => {
            let run = file.risk(&input, config, ae, ego, out)?;
            commands::risk(&run)
        }
        Command::Eval { input, configs, ae_linear, ae_tanh, significance, out } => {
            let run = file.eval(&input, configs, ae_linear, ae_tanh, significance, out)?;
            commands::eval(&run)
        }
        Command::Compare { results, significance, out } => {
            let out = out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
            commands::compare(&results, significance.or(file.significance).unwrap_or(0.05), &out)
        }
        Command::Synth { kind, delay, duration, spec, golden, responsive, seed, out } => {
            let request = commands::SynthRequest { kind, delay, duration, spec, golden, responsive, seed };
            commands::synth(&request, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
