use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use phasecluster::ingestion::PeriodId;
use phasecluster::pipeline::{self, EmbedInput, RunConfig, DEFAULT_K};
use phasecluster::spectral::CompressionMask;
use phasecluster::synth::SynthConfig;
use phasecluster::{Error, ErrorKind};

/// Smart-meter phase identification from hourly voltage.
#[derive(Parser)]
#[command(name = "phasecluster", version, about)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feeder with known phase labels.
    Synth(SynthArgs),
    /// Cluster one feeder for one period.
    Cluster(RunArgs),
    /// Transformer purity and, for two assignments, cross-period stability.
    Validate(ValidateArgs),
    /// 2D coordinates from a feature matrix or a distance matrix.
    Embed(EmbedArgs),
    /// Cluster, validate and embed two periods in one run.
    Report(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    readings: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    feeder: Option<String>,
    /// Month as YYYY-MM; repeat for `report`.
    #[arg(long)]
    period: Vec<PeriodId>,
    /// fixed:30,60,...  |  topk:K  |  threshold:T  (default: six daily harmonics)
    #[arg(long)]
    mask: Option<CompressionMask>,
    #[arg(long)]
    k: Option<usize>,
    /// Scale every feature column to unit variance before clustering.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Assignment CSV; give twice to compare periods.
    #[arg(long, required = true, num_args = 1)]
    assignment: Vec<PathBuf>,
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(
        long,
        conflicts_with = "distances",
        required_unless_present = "distances"
    )]
    features: Option<PathBuf>,
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Assignment CSV used to label the output points.
    #[arg(long)]
    assignment: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunFile {
    readings: Option<PathBuf>,
    topology: Option<PathBuf>,
    feeder: Option<String>,
    period: Option<String>,
    periods: Option<Vec<String>>,
    mask: Option<String>,
    k: Option<usize>,
    standardize: Option<bool>,
    out: Option<PathBuf>,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Paths in a config file are taken relative to the file.
fn relative_to(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn missing(flag: &str) -> Error {
    Error::Parameter(format!("--{flag} is required (flag or config file)"))
}

fn run_config(args: RunArgs) -> Result<RunConfig, Error> {
    let file: RunFile = match &args.config {
        Some(p) => read_toml(p)?,
        None => RunFile::default(),
    };
    let base = args.config.as_deref().and_then(Path::parent);
    let path = |flag: Option<PathBuf>, from_file: Option<PathBuf>, name: &str| {
        flag.or_else(|| from_file.map(|p| relative_to(base, p)))
            .ok_or_else(|| missing(name))
    };
    let readings = path(args.readings, file.readings, "readings")?;
    let topology = path(args.topology, file.topology, "topology")?;
    let feeder_id = args
        .feeder
        .or(file.feeder)
        .ok_or_else(|| missing("feeder"))?;

    let periods = if !args.period.is_empty() {
        args.period
    } else {
        let raw: Vec<String> = file
            .periods
            .unwrap_or_default()
            .into_iter()
            .chain(file.period)
            .collect();
        raw.iter()
            .map(|s| s.parse().map_err(|e: Error| Error::Config(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if periods.is_empty() {
        return Err(missing("period"));
    }
    let mask = match (args.mask, file.mask) {
        (Some(m), _) => Some(m),
        (None, Some(s)) => Some(s.parse()?),
        (None, None) => None,
    };

    Ok(RunConfig {
        readings,
        topology,
        feeder_id,
        periods,
        mask,
        k: args.k.or(file.k).unwrap_or(DEFAULT_K),
        standardize: args.standardize || file.standardize.unwrap_or(false),
        out_dir: path(args.out, file.out, "out")?,
    })
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth(args) => {
            let mut config: SynthConfig = match &args.config {
                Some(p) => read_toml(p)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let artifacts = pipeline::cmd_synth(&config, &args.out)?;
            for p in artifacts.paths() {
                println!("wrote {}", args.out.join(p).display());
            }
        }
        Command::Cluster(args) => {
            let config = run_config(args)?;
            let (_, result) = pipeline::cmd_cluster(&config)?;
            println!(
                "{} {}: {} meters, mask {}",
                config.feeder_id,
                result.period,
                result.assignment.len(),
                result.mask
            );
            for (label, size) in result.assignment.cluster_sizes() {
                println!("  cluster {label}: {size}");
            }
            println!("wrote {}", config.out_dir.display());
        }
        Command::Validate(args) => {
            let (_, purity, stab) =
                pipeline::cmd_validate(&args.assignment, &args.topology, &args.out)?;
            for p in &purity {
                print!("{}", p.to_text());
            }
            if let Some(s) = stab {
                print!("{}", s.to_text());
            }
        }
        Command::Embed(args) => {
            let input = match (args.features, args.distances) {
                (Some(f), _) => EmbedInput::Features(f),
                (None, Some(d)) => EmbedInput::Distances(d),
                (None, None) => return Err(missing("features or --distances")),
            };
            let (_, embedding) =
                pipeline::cmd_embed(&input, args.assignment.as_deref(), &args.out)?;
            println!(
                "stress = {}, rank = {}",
                phasecluster::format::num(embedding.stress),
                embedding.rank
            );
        }
        Command::Report(args) => {
            let config = run_config(args)?;
            let (_, report) = pipeline::cmd_report(&config)?;
            for p in &report.purity {
                println!(
                    "{} purity = {}/{} = {}",
                    p.period_id,
                    p.majority_count(),
                    p.total_meters,
                    phasecluster::format::num(p.purity)
                );
            }
            println!(
                "stable fraction = {}",
                phasecluster::format::num(report.stability.stable_fraction)
            );
            println!("wrote {}", config.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
