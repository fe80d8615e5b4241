//! Run configuration: a TOML file (or an earlier run manifest) overlaid with
//! command-line flags, resolved into a [`RunConfig`] with every default filled.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rainfreq::egpd::{Level, RegionalOptions};
use rainfreq::ingest::{GridSource, Season, DEFAULT_THRESHOLD};
use rainfreq::pipeline::GofOptions;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PERIODS: [f64; 3] = [10.0, 50.0, 100.0];

/// Number of clusters for a season, or a scan over the validity range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Scan,
    Fixed(usize),
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("scan") {
            return Ok(KChoice::Scan);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(KChoice::Fixed(k)),
            _ => Err(format!("k must be an integer ≥ 2 or `scan`, got `{s}`")),
        }
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Scan => f.write_str("scan"),
            KChoice::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for KChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KChoice::Scan => s.serialize_str("scan"),
            KChoice::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => KChoice::from_str(&k.to_string()),
            Raw::Text(s) => KChoice::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `k` in a config file: one value for all seasons, or a table by season.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum KSetting {
    All(KChoice),
    PerSeason(BTreeMap<Season, KChoice>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    LongCsv,
    Dense,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofSection {
    pub fraction: Option<f64>,
    pub simulations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionalSection {
    pub eps: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Everything a config file may set; all keys optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub seasons: Option<Vec<Season>>,
    pub threshold: Option<f64>,
    pub k: Option<KSetting>,
    pub levels: Option<Vec<Level>>,
    pub periods: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub gof: Option<GofSection>,
    pub regional: Option<RegionalSection>,
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: ConfigFile,
}

impl ConfigFile {
    /// Reads a TOML config, or the `config` block of a JSON run manifest.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str::<ManifestConfig>(&text)
                .map(|m| m.config)
                .map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
        }
    }
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub seasons: Option<Vec<Season>>,
    pub threshold: Option<f64>,
    pub k: Option<KChoice>,
    pub levels: Option<Vec<Level>>,
    pub periods: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub gof_fraction: Option<f64>,
    pub simulations: Option<usize>,
}

/// Fully resolved configuration, written verbatim into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub seasons: Vec<Season>,
    pub threshold: f64,
    pub k: BTreeMap<Season, KChoice>,
    pub levels: Vec<Level>,
    pub periods: Vec<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub gof: GofOptions,
    pub regional: RegionalOptions,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile, flags: Overrides) -> Result<Self, CliError> {
        let seasons = flags.seasons.or(file.seasons).unwrap_or_else(|| Season::ALL.to_vec());
        if seasons.is_empty() {
            return Err(CliError::Usage("no season selected".into()));
        }
        let mut seasons_sorted = seasons.clone();
        seasons_sorted.sort();
        seasons_sorted.dedup();
        if seasons_sorted.len() != seasons.len() {
            return Err(CliError::Usage("a season is listed twice".into()));
        }
        let k_for = |s: Season| match (&flags.k, &file.k) {
            (Some(k), _) => Some(*k),
            (None, Some(KSetting::All(k))) => Some(*k),
            (None, Some(KSetting::PerSeason(map))) => map.get(&s).copied(),
            (None, None) => None,
        };
        let k = seasons.iter().filter_map(|&s| k_for(s).map(|k| (s, k))).collect();

        let levels = flags.levels.or(file.levels).unwrap_or_else(|| Level::ALL.to_vec());
        if levels.is_empty() {
            return Err(CliError::Usage("no model level selected".into()));
        }
        let periods = flags.periods.or(file.periods).unwrap_or_else(|| DEFAULT_PERIODS.to_vec());
        if periods.is_empty() || periods.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(CliError::Usage("return periods must be positive".into()));
        }
        let threshold = flags.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD);
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(CliError::Usage(format!("threshold must be non-negative, got {threshold}")));
        }
        let gof_file = file.gof.unwrap_or_default();
        let defaults = GofOptions::default();
        let gof = GofOptions {
            fraction: flags.gof_fraction.or(gof_file.fraction).unwrap_or(defaults.fraction),
            simulations: flags.simulations.or(gof_file.simulations).unwrap_or(defaults.simulations),
        };
        if !(gof.fraction > 0.0 && gof.fraction <= 1.0) || gof.simulations == 0 {
            return Err(CliError::Usage("gof fraction must lie in (0, 1] and simulations be positive".into()));
        }
        let regional_file = file.regional.unwrap_or_default();
        let regional_default = RegionalOptions::default();
        let regional = RegionalOptions {
            eps: regional_file.eps.unwrap_or(regional_default.eps),
            max_iter: regional_file.max_iter.unwrap_or(regional_default.max_iter),
        };
        if !(regional.eps > 0.0) || regional.max_iter == 0 {
            return Err(CliError::Usage("regional eps and max_iter must be positive".into()));
        }
        Ok(RunConfig {
            input: flags.input.or(file.input),
            format: file.format,
            seasons,
            threshold,
            k,
            levels,
            periods,
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            threads: flags.threads.or(file.threads).unwrap_or(0),
            gof,
            regional,
        })
    }

    pub fn grid_source(&self) -> Result<GridSource, CliError> {
        let path = self.input.clone().ok_or_else(|| CliError::Usage("no input grid (use --input)".into()))?;
        match self.format {
            Some(InputFormat::LongCsv) => Ok(GridSource::LongCsv(path)),
            Some(InputFormat::Dense) => Ok(GridSource::Dense(path)),
            None => GridSource::infer(&path).map_err(|e| CliError::Usage(e.to_string())),
        }
    }

    pub fn season_dir(&self, season: Season) -> PathBuf {
        self.out.join(season.as_str())
    }

    pub fn needs_partition(&self) -> bool {
        self.levels.iter().any(|l| *l != Level::Local)
    }
}
