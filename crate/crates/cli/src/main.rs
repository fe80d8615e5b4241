//! `rainfreq`: cluster a daily precipitation grid by PWM ratio, fit EGPD models
//! at three pooling levels, map return levels and check the fits on held-out
//! wet days.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rainfreq::egpd::Level;
use rainfreq::ingest::Season;
use rainfreq::synth::SynthFormat;
use rainfreq::ErrorClass;

use config::{ConfigFile, KChoice, Overrides, RunConfig, DEFAULT_SEED};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(rainfreq::Error),
}

impl From<rainfreq::Error> for CliError {
    fn from(e: rainfreq::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "rainfreq", version, about = "Regional frequency analysis of daily precipitation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML config file, or a run manifest (JSON) from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input grid: long CSV (`.csv`) or dense sidecar (`.json`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Seasons, comma separated (SON, DJF, MAM, JJA) or `all`.
    #[arg(long, global = true, value_delimiter = ',')]
    season: Option<Vec<String>>,
    /// Number of clusters, or `scan` for the validity report over k = 2..10.
    #[arg(long, global = true)]
    k: Option<KChoice>,
    /// Model levels, comma separated: local, semiregional, regional.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<Level>>,
    /// Return periods in years, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    periods: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Wet-day threshold (mm).
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// ω field, partitions with silhouettes, and the validity report for `--k scan`.
    Cluster,
    /// Fit the requested model levels on the FIT third of each site's wet days.
    Fit {
        /// Partition table to use instead of `<out>/<SEASON>/partition_k<k>.csv`.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Return-level fields from fitted parameters.
    ReturnLevels,
    /// Anderson–Darling tests on held-out wet days for a seeded subsample of sites.
    Validate {
        /// Fraction of sites tested.
        #[arg(long)]
        fraction: Option<f64>,
        /// Monte Carlo draws for the null distribution.
        #[arg(long)]
        simulations: Option<usize>,
    },
    /// Write a synthetic grid and its truth manifest.
    Synth {
        /// TOML grid description (regions, years, ranges).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "long-csv")]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    LongCsv,
    Dense,
}

fn parse_seasons(raw: &[String]) -> Result<Vec<Season>, CliError> {
    if raw.len() == 1 && raw[0].trim().eq_ignore_ascii_case("all") {
        return Ok(Season::ALL.to_vec());
    }
    raw.iter().map(|s| s.parse::<Season>().map_err(|e| CliError::Usage(e.to_string()))).collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let mut file = match &g.config {
        Some(path) => ConfigFile::read(path)?,
        None => ConfigFile::default(),
    };
    let threads = g.threads.or(file.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;

    if let Command::Synth { spec, format } = &cli.command {
        let out = g.out.or(file.out).ok_or_else(|| CliError::Usage("synth needs --out".into()))?;
        let format = match format {
            FormatArg::LongCsv => SynthFormat::LongCsv,
            FormatArg::Dense => SynthFormat::Dense,
        };
        return commands::synth(spec, format, g.seed.or(file.seed).unwrap_or(DEFAULT_SEED), &out);
    }

    let (fraction, simulations) = match &cli.command {
        Command::Validate { fraction, simulations } => (*fraction, *simulations),
        _ => (None, None),
    };
    let seasons = g.season.as_deref().map(parse_seasons).transpose()?;
    file.threads = Some(threads);
    let config = RunConfig::resolve(
        file,
        Overrides {
            input: g.input,
            seasons,
            threshold: g.threshold,
            k: g.k,
            levels: g.levels,
            periods: g.periods,
            out: g.out,
            seed: g.seed,
            threads: None,
            gof_fraction: fraction,
            simulations,
        },
    )?;
    match cli.command {
        Command::Cluster => commands::cluster(&config),
        Command::Fit { partition } => commands::fit(&config, partition.as_deref()),
        Command::ReturnLevels => commands::return_levels(&config),
        Command::Validate { .. } => commands::validate(&config),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rainfreq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
