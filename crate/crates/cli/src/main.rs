use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vlcsim_cli::{presets, run, CliError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "vlcsim", version, about = "Multi-user MIMO visible-light link simulator")]
struct Cli {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Named setup: fig3a, fig3b, fig3c, fig4 .. fig8.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Monte Carlo symbols per SNR point.
    #[arg(long, global = true)]
    symbols: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Received-gain map over the receiver plane.
    ChannelMap,
    /// BER versus transmit SNR, analytic and Monte Carlo.
    BerSweep,
    /// Normalized throughput versus transmit SNR.
    ThroughputSweep,
    /// BER with channel estimates made stale by user motion.
    Mobility,
    /// Check the config and build every channel without running anything.
    Validate,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.symbols {
        cfg.simulation.symbols = n;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let cfg = load(&cli)?;
    let out = PathBuf::from(&cfg.output.dir);
    let written = match cli.command {
        Command::ChannelMap => run::channel_map(&cfg, &out)?,
        Command::BerSweep => run::ber_sweep(&cfg, &out)?,
        Command::ThroughputSweep => run::throughput_sweep(&cfg, &out)?,
        Command::Mobility => run::mobility(&cfg, &out)?,
        Command::Validate => {
            for line in run::validate(&cfg)? {
                println!("{line}");
            }
            println!("config ok");
            return Ok(());
        }
    };
    println!("{}", written.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vlcsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
