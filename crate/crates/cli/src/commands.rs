//! Subcommand bodies. Each season writes into `<out>/<SEASON>/`; later
//! subcommands read only what earlier ones wrote there.

use std::path::{Path, PathBuf};

use rainfreq::cluster::{K_MAX, K_MIN};
use rainfreq::egpd::Level;
use rainfreq::evaluate::{qq_data, ReturnLevelField};
use rainfreq::export::{
    diagnostic_rows, diff_summaries, fields_from_rows, load_fits, load_partition, marker_rows, omega_rows, param_rows,
    partition_rows, read_csv, return_level_rows, shape_rows, validity_rows, wet_stats_rows, write_csv, write_json,
    ParamRow, PartitionRow, QqRow, WetStatsRow,
};
use rainfreq::ingest::{read_long_csv, DenseSidecar, GridSource, Season, SiteSeries};
use rainfreq::pipeline::{
    cluster_season, fit_levels, goodness_of_fit, model_scores, scan_season, unfitted, SeasonData, SeedPlan,
};
use rainfreq::synth::{SynthFormat, SynthGrid, SynthSpec};
use rainfreq::Error;
use serde::Serialize;

use crate::config::{KChoice, RunConfig};
use crate::CliError;

/// Conventions recorded in every manifest.
const NOTES: [&str; 6] = [
    "omega is computed from all wet days of the season; the omega table's n_fit column is that sample size",
    "n_wds_mean averages wet days over complete season-years only, corrected for missing days",
    "wet days are values strictly above the threshold; fits, likelihoods and return levels use the distribution truncated at the threshold",
    "return levels are the upper quantiles with exceedance probability 1/(T * n_wds_mean)",
    "goodness of fit tests the TEST third of the thinned wet days; the SPARE third is unused",
    "consecutive wet days are split FIT/TEST/SPARE by position modulo 3",
];

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a T,
    seeds: Option<SeedPlan>,
    notes: &'a [&'a str],
}

fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &T,
    seeds: Option<SeedPlan>,
) -> Result<(), CliError> {
    create_dir(dir)?;
    let manifest =
        Manifest { tool: "rainfreq", version: env!("CARGO_PKG_VERSION"), command, config, seeds, notes: &NOTES };
    write_json(dir.join(format!("manifest_{command}.json")), &manifest)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(Error::Io { path: dir.to_path_buf(), source: e }))
}

/// The input grid, read once (long CSV) or streamed per season (dense).
enum Grid {
    Loaded(Vec<SiteSeries>),
    Dense(PathBuf, DenseSidecar),
}

impl Grid {
    fn open(source: &GridSource) -> Result<Self, CliError> {
        Ok(match source {
            GridSource::LongCsv(path) => Grid::Loaded(read_long_csv(path)?),
            GridSource::Dense(path) => Grid::Dense(path.clone(), DenseSidecar::read(path)?),
        })
    }

    fn season(&self, season: Season, threshold: f64) -> Result<SeasonData, CliError> {
        let data = match self {
            Grid::Loaded(sites) => SeasonData::from_sites(sites.iter().cloned().map(Ok), season, threshold)?,
            Grid::Dense(path, sidecar) => SeasonData::from_sites(sidecar.stream(path)?, season, threshold)?,
        };
        if data.is_empty() {
            return Err(CliError::Core(Error::Missing("the input grid has no sites".into())));
        }
        Ok(data)
    }
}

fn partition_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("partition_k{k}.csv"))
}

fn period_name(t: f64) -> String {
    format!("return_levels_T{t}.csv")
}

fn fixed_k(config: &RunConfig, season: Season) -> Option<usize> {
    match config.k.get(&season) {
        Some(KChoice::Fixed(k)) => Some(*k),
        _ => None,
    }
}

fn say(message: impl AsRef<str>) {
    eprintln!("{}", message.as_ref());
}

pub fn cluster(config: &RunConfig) -> Result<(), CliError> {
    let grid = Grid::open(&config.grid_source()?)?;
    for &season in &config.seasons {
        let k = config.k.get(&season).copied().unwrap_or(KChoice::Scan);
        let dir = config.season_dir(season);
        create_dir(&dir)?;
        let data = grid.season(season, config.threshold)?;
        let field = data.omega_field();
        write_csv(dir.join("omega.csv"), &omega_rows(&data, &field))?;
        write_csv(dir.join("wet_stats.csv"), &wet_stats_rows(&data))?;
        let partitions = match k {
            KChoice::Fixed(k) => vec![cluster_season(&data, &field, k)?],
            KChoice::Scan => {
                let scan = scan_season(&data, &field, K_MIN, K_MAX)?;
                write_csv(dir.join("validity.csv"), &validity_rows(&scan.report))?;
                write_json(dir.join("validity.json"), &scan.report)?;
                for row in scan.report.rows.iter().filter(|r| r.flag.is_some()) {
                    say(format!("{season}: k = {} flagged: {}", row.k, row.flag.as_deref().unwrap_or("")));
                }
                scan.partitions
            }
        };
        for p in &partitions {
            write_csv(partition_path(&dir, p.k), &partition_rows(&data, p))?;
            write_csv(dir.join(format!("markers_k{}.csv", p.k)), &marker_rows(&data, p))?;
        }
        say(format!(
            "{season}: {} sites, {} with degenerate omega, k = {k}",
            data.len(),
            field.degenerate.iter().filter(|&&d| d).count()
        ));
    }
    write_manifest(&config.out, "cluster", config, None)
}

pub fn fit(config: &RunConfig, partition_override: Option<&Path>) -> Result<(), CliError> {
    if partition_override.is_some() && config.seasons.len() != 1 {
        return Err(CliError::Usage("--partition needs exactly one --season".into()));
    }
    for &season in &config.seasons {
        if config.needs_partition() && fixed_k(config, season).is_none() {
            return Err(CliError::Usage(format!(
                "{season}: semiregional and regional fits need an explicit --k (a number, not `scan`)"
            )));
        }
    }
    let grid = Grid::open(&config.grid_source()?)?;
    for &season in &config.seasons {
        let dir = config.season_dir(season);
        create_dir(&dir)?;
        let data = grid.season(season, config.threshold)?;
        let k = fixed_k(config, season);
        let path = partition_override.map(Path::to_path_buf).or_else(|| k.map(|k| partition_path(&dir, k)));
        let loaded = match path {
            Some(path) if config.needs_partition() || path.exists() => {
                let rows: Vec<PartitionRow> = read_csv(&path)?;
                let loaded = load_partition(&data, &rows)?;
                if let Some(k) = k.filter(|&k| k != loaded.k) {
                    return Err(CliError::Core(Error::SiteMismatch(format!(
                        "{season}: partition {} has {} clusters, expected {k}",
                        path.display(),
                        loaded.k
                    ))));
                }
                Some(loaded)
            }
            _ => None,
        };
        let (labels, k) = match &loaded {
            Some(p) => (Some(p.labels.as_slice()), p.k),
            None => (None, 0),
        };
        let fits = fit_levels(&data, labels, k, &config.levels, &config.regional)?;
        write_csv(dir.join("params.csv"), &param_rows(&data, &fits))?;
        write_csv(dir.join("shapes.csv"), &shape_rows(season, &fits))?;
        write_csv(dir.join("diagnostics.csv"), &diagnostic_rows(&data, &fits))?;
        write_csv(dir.join("unfitted.csv"), &unfitted(&data, &fits))?;
        write_csv(dir.join("wet_stats.csv"), &wet_stats_rows(&data))?;
        write_csv(dir.join("model_scores.csv"), &model_scores(&data, &fits))?;
        for f in &fits {
            say(format!("{season}: {} fitted {}/{} sites", f.level, f.fitted(), data.len()));
        }
    }
    write_manifest(&config.out, "fit", config, None)
}

pub fn return_levels(config: &RunConfig) -> Result<(), CliError> {
    for &season in &config.seasons {
        let dir = config.season_dir(season);
        let params: Vec<ParamRow> = read_csv(dir.join("params.csv"))?;
        let params: Vec<ParamRow> = params.into_iter().filter(|p| config.levels.contains(&p.level)).collect();
        if params.is_empty() {
            return Err(CliError::Core(Error::Missing(format!(
                "{season}: no parameters for the requested levels in {}",
                dir.join("params.csv").display()
            ))));
        }
        let stats: Vec<WetStatsRow> = read_csv(dir.join("wet_stats.csv"))?;
        let rows = return_level_rows(&params, &stats, &config.periods)?;
        for &t in &config.periods {
            let field: Vec<_> = rows.iter().filter(|r| r.t_years == t).cloned().collect();
            write_csv(dir.join(period_name(t)), &field)?;
        }
        let fields: Vec<ReturnLevelField> = fields_from_rows(&rows);
        let diffs = diff_summaries(&fields, Level::Regional, Level::Local)?;
        if !diffs.is_empty() {
            write_json(dir.join("return_level_diff.json"), &diffs)?;
        }
        say(format!("{season}: {} return-level fields", fields.len()));
    }
    write_manifest(&config.out, "return-levels", config, None)
}

pub fn validate(config: &RunConfig) -> Result<(), CliError> {
    let grid = Grid::open(&config.grid_source()?)?;
    let seeds = SeedPlan::new(config.seed);
    for &season in &config.seasons {
        let dir = config.season_dir(season);
        let data = grid.season(season, config.threshold)?;
        let params: Vec<ParamRow> = read_csv(dir.join("params.csv"))?;
        let fits: Vec<_> =
            load_fits(&data, &params)?.into_iter().filter(|f| config.levels.contains(&f.level)).collect();
        if fits.is_empty() {
            return Err(CliError::Core(Error::Missing(format!("{season}: no parameters for the requested levels"))));
        }
        let partition = match fixed_k(config, season).map(|k| partition_path(&dir, k)) {
            Some(path) if path.exists() => {
                let rows: Vec<PartitionRow> = read_csv(&path)?;
                let loaded = load_partition(&data, &rows)?;
                Some((rows, loaded))
            }
            _ => None,
        };
        let silhouettes = partition.as_ref().map(|(_, p)| p.silhouettes.as_slice());
        let report = goodness_of_fit(&data, &fits, silhouettes, &config.gof, &seeds)?;
        write_csv(dir.join("gof.csv"), &report.rows)?;
        write_csv(dir.join("gof_skipped.csv"), &report.skipped)?;
        write_json(dir.join("gof_summary.json"), &report.summary())?;

        let mut qq = Vec::new();
        if let Some((rows, _)) = &partition {
            let index = data.index();
            for row in rows.iter().filter(|r| r.is_medoid) {
                let i = index[row.site_id.as_str()];
                for fit in &fits {
                    if let Some(dist) = fit.sites[i].dist {
                        let truncated = dist.truncated(data.threshold)?;
                        if let Ok(points) = qq_data(&truncated, &data.sites[i].wet.test_values()) {
                            qq.extend(QqRow::from_points(&row.site_id, season, fit.level, &points));
                        }
                    }
                }
            }
        }
        write_csv(dir.join("qq.csv"), &qq)?;
        for f in &fits {
            let cell = report.rate(season, f.level);
            say(format!(
                "{season}: {} nonrejection {}/{} ({:.3})",
                f.level, cell.nonrejected, cell.tested, cell.nonrejection_rate
            ));
        }
    }
    write_manifest(&config.out, "validate", config, Some(seeds))
}

#[derive(Serialize)]
struct SynthRun<'a> {
    spec: &'a SynthSpec,
    format: SynthFormat,
    seed: u64,
    out: &'a Path,
}

pub fn synth(spec_path: &Path, format: SynthFormat, seed: u64, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Usage(format!("cannot read synth spec {}: {e}", spec_path.display())))?;
    let spec: SynthSpec = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid synth spec {}: {e}", spec_path.display())))?;
    let grid = SynthGrid::new(spec.clone(), seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let path = grid.write(out, format)?;
    say(format!("wrote {} sites to {}", grid.len(), path.display()));
    write_manifest(out, "synth", &SynthRun { spec: &spec, format, seed, out }, None)
}
