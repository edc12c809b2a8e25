use std::path::PathBuf;
use std::process::ExitCode;

use blockhunter_cli::{cmd_hunt, cmd_simulate, cmd_topology, cmd_validate, parse_detectors, CliError, CliResult, Invocation, LoadedConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blockhunter", version, about = "Federated anomaly hunting on a simulated cluster-based blockchain IIoT network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config (JSON); built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps and client training
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Name the run directory by seed instead of time and zero round durations
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the factories and elect heads; writes topology.json
    Topology {
        #[command(flatten)]
        common: Common,
    },
    /// Run the chain simulator once, or a seed-averaged sweep grid
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...` or `key=a..b` (doubling); keys: block_size, miners, tx_rate, interval, duration, mode
        #[arg(long)]
        sweep: Vec<String>,
        /// cluster or non_cluster
        #[arg(long)]
        mode: Option<String>,
    },
    /// Simulate or load data, train federated detectors, evaluate and alert
    Hunt {
        #[command(flatten)]
        common: Common,
        /// ned, if, cblof, pca, kmeans, a comma list, or all
        #[arg(long)]
        detector: Option<String>,
        /// cluster or non_cluster
        #[arg(long)]
        mode: Option<String>,
    },
    /// Check a config and its data files without running anything
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> CliResult<LoadedConfig> {
    let mut loaded = match &common.config {
        Some(p) => LoadedConfig::load(p)?,
        None => LoadedConfig::defaults(),
    };
    if let Some(s) = common.seed {
        loaded.config.seed = s;
    }
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(loaded)
}

fn apply_mode(loaded: &mut LoadedConfig, mode: &Option<String>) -> CliResult<()> {
    if let Some(m) = mode {
        loaded.config.sim.mode = m.parse()?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Topology { common } => {
            let inv = Invocation {
                loaded: load(&common)?,
                deterministic: common.deterministic,
            };
            cmd_topology(&inv)?.print(&mut stdout)?;
        }
        Command::Simulate { common, sweep, mode } => {
            let mut loaded = load(&common)?;
            apply_mode(&mut loaded, &mode)?;
            let inv = Invocation {
                loaded,
                deterministic: common.deterministic,
            };
            cmd_simulate(&inv, &sweep)?.print(&mut stdout)?;
        }
        Command::Hunt { common, detector, mode } => {
            let mut loaded = load(&common)?;
            apply_mode(&mut loaded, &mode)?;
            let detectors = match detector {
                Some(d) => parse_detectors(&d)?,
                None => vec![loaded.config.federation.detector.kind],
            };
            let inv = Invocation {
                loaded,
                deterministic: common.deterministic,
            };
            cmd_hunt(&inv, &detectors)?.print(&mut stdout)?;
        }
        Command::Validate { common } => {
            cmd_validate(&load(&common)?)?;
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
