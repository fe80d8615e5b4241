//! Tabular outputs. Every CSV carries a one-line header, even when empty, and
//! floats are written in shortest round-trip form so tables read back exactly.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::{Partition, ValidityReport};
use crate::egpd::{return_level, Egpd, Level};
use crate::error::{Error, Result};
use crate::evaluate::{return_level_diff, GofRow, GofSkip, ModelScore, QqPoint, ReturnLevelDiff, ReturnLevelField};
use crate::ingest::{SampleStatus, Season};
use crate::pipeline::{Estimator, LevelFit, SeasonData, SiteFit, Unfitted};
use crate::pwm::OmegaField;

/// A CSV row type with a fixed header.
pub trait Record: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Writes `rows` under the type's header.
pub fn write_csv<T: Record>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(file));
    writer.write_record(T::HEADER).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?.flush().map_err(|e| Error::io(path, e))
}

/// Reads rows, checking the header. Row numbers in errors count the header as row 1.
pub fn read_csv<T: Record>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(std::io::BufReader::new(file));
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != T::HEADER {
        return Err(Error::schema(
            path,
            1,
            format!("expected header `{}`, found `{}`", T::HEADER.join(","), found.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.deserialize().enumerate() {
        out.push(record.map_err(|e: csv::Error| Error::schema(path, i + 2, e.to_string()))?);
    }
    Ok(out)
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaRow {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    pub season: Season,
    pub omega: Option<f64>,
    /// Size of the wet-day sample behind ω.
    pub n_fit: usize,
}

impl Record for OmegaRow {
    const HEADER: &'static [&'static str] = &["site_id", "lon", "lat", "season", "omega", "n_fit"];
}

pub fn omega_rows(data: &SeasonData, field: &OmegaField) -> Vec<OmegaRow> {
    data.sites
        .iter()
        .enumerate()
        .map(|(i, s)| OmegaRow {
            site_id: s.info.site_id.clone(),
            lon: s.info.lon,
            lat: s.info.lat,
            season: data.season,
            omega: (!field.degenerate[i]).then_some(field.omega[i]).and_then(finite),
            n_fit: field.sample_size[i],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    pub season: Season,
    pub cluster: Option<usize>,
    pub silhouette: Option<f64>,
    pub is_medoid: bool,
}

impl Record for PartitionRow {
    const HEADER: &'static [&'static str] = &["site_id", "lon", "lat", "season", "cluster", "silhouette", "is_medoid"];
}

pub fn partition_rows(data: &SeasonData, partition: &Partition) -> Vec<PartitionRow> {
    data.sites
        .iter()
        .enumerate()
        .map(|(i, s)| PartitionRow {
            site_id: s.info.site_id.clone(),
            lon: s.info.lon,
            lat: s.info.lat,
            season: data.season,
            cluster: partition.assignment[i],
            silhouette: finite(partition.silhouettes[i]),
            is_medoid: partition.is_medoid(i),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Medoid,
    MaxSilhouette,
    MinSilhouette,
}

/// Sites worth marking on a partition map: each cluster's medoid and its
/// members with the highest and lowest silhouette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerRow {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    pub season: Season,
    pub cluster: usize,
    pub marker: Marker,
    pub silhouette: Option<f64>,
}

impl Record for MarkerRow {
    const HEADER: &'static [&'static str] = &["site_id", "lon", "lat", "season", "cluster", "marker", "silhouette"];
}

pub fn marker_rows(data: &SeasonData, partition: &Partition) -> Vec<MarkerRow> {
    let row = |i: usize, cluster: usize, marker: Marker| {
        let s = &data.sites[i];
        MarkerRow {
            site_id: s.info.site_id.clone(),
            lon: s.info.lon,
            lat: s.info.lat,
            season: data.season,
            cluster,
            marker,
            silhouette: finite(partition.silhouettes[i]),
        }
    };
    let mut out = Vec::new();
    for (c, &m) in partition.medoids.iter().enumerate() {
        out.push(row(m, c, Marker::Medoid));
        let scored: Vec<usize> = (0..data.len())
            .filter(|&i| partition.assignment[i] == Some(c) && partition.silhouettes[i].is_finite())
            .collect();
        let by = |a: &&usize, b: &&usize| partition.silhouettes[**a].total_cmp(&partition.silhouettes[**b]);
        if let Some(&hi) = scored.iter().max_by(|a, b| by(a, b).then(b.cmp(a))) {
            out.push(row(hi, c, Marker::MaxSilhouette));
        }
        if let Some(&lo) = scored.iter().min_by(|a, b| by(a, b).then(a.cmp(b))) {
            out.push(row(lo, c, Marker::MinSilhouette));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityCsvRow {
    pub k: usize,
    pub mean_silhouette: Option<f64>,
    pub dunn: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub xie_beni: Option<f64>,
    pub s_dbw: Option<f64>,
}

impl Record for ValidityCsvRow {
    const HEADER: &'static [&'static str] = &["k", "mean_silhouette", "dunn", "davies_bouldin", "xie_beni", "s_dbw"];
}

pub fn validity_rows(report: &ValidityReport) -> Vec<ValidityCsvRow> {
    report
        .rows
        .iter()
        .map(|r| ValidityCsvRow {
            k: r.k,
            mean_silhouette: finite(r.mean_silhouette),
            dunn: finite(r.dunn),
            davies_bouldin: finite(r.davies_bouldin),
            xie_beni: finite(r.xie_beni),
            s_dbw: finite(r.s_dbw),
        })
        .collect()
}

/// Per-site wet-day bookkeeping, carried from fitting to return levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WetStatsRow {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    pub elevation: Option<f64>,
    pub season: Season,
    pub threshold: f64,
    pub n_wet: usize,
    pub n_fit: usize,
    pub n_test: usize,
    pub complete_seasons: usize,
    pub n_wds_mean: Option<f64>,
    pub status: SampleStatus,
    pub excessive_missing: bool,
}

impl Record for WetStatsRow {
    const HEADER: &'static [&'static str] = &[
        "site_id",
        "lon",
        "lat",
        "elevation",
        "season",
        "threshold",
        "n_wet",
        "n_fit",
        "n_test",
        "complete_seasons",
        "n_wds_mean",
        "status",
        "excessive_missing",
    ];
}

pub fn wet_stats_rows(data: &SeasonData) -> Vec<WetStatsRow> {
    data.sites
        .iter()
        .map(|s| WetStatsRow {
            site_id: s.info.site_id.clone(),
            lon: s.info.lon,
            lat: s.info.lat,
            elevation: s.info.elevation,
            season: data.season,
            threshold: data.threshold,
            n_wet: s.wet.wet_values.len(),
            n_fit: s.wet.split.fit.len(),
            n_test: s.wet.split.test.len(),
            complete_seasons: s.wet.complete_seasons,
            n_wds_mean: (s.wet.complete_seasons > 0).then_some(s.wet.n_wds_mean).and_then(finite),
            status: s.wet.status,
            excessive_missing: s.excessive_missing,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub cluster: Option<usize>,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
    pub converged: bool,
    pub n_fit: usize,
}

impl Record for ParamRow {
    const HEADER: &'static [&'static str] =
        &["site_id", "season", "level", "cluster", "kappa", "sigma", "xi", "converged", "n_fit"];
}

impl ParamRow {
    pub fn dist(&self) -> Result<Option<Egpd>> {
        match (self.kappa, self.sigma, self.xi) {
            (Some(k), Some(s), Some(x)) => Egpd::new(k, s, x).map(Some),
            _ => Ok(None),
        }
    }
}

pub fn param_rows(data: &SeasonData, fits: &[LevelFit]) -> Vec<ParamRow> {
    let mut out = Vec::new();
    for fit in fits {
        for (s, f) in data.sites.iter().zip(&fit.sites) {
            out.push(ParamRow {
                site_id: s.info.site_id.clone(),
                season: data.season,
                level: fit.level,
                cluster: f.cluster,
                kappa: f.dist.map(|d| d.kappa()),
                sigma: f.dist.map(|d| d.sigma()),
                xi: f.dist.map(|d| d.xi()),
                converged: f.converged,
                n_fit: f.n_fit,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub estimator: Option<Estimator>,
    pub iterations: usize,
    pub converged: bool,
    pub note: Option<String>,
}

impl Record for DiagnosticRow {
    const HEADER: &'static [&'static str] =
        &["site_id", "season", "level", "estimator", "iterations", "converged", "note"];
}

pub fn diagnostic_rows(data: &SeasonData, fits: &[LevelFit]) -> Vec<DiagnosticRow> {
    let mut out = Vec::new();
    for fit in fits {
        for (s, f) in data.sites.iter().zip(&fit.sites) {
            out.push(DiagnosticRow {
                site_id: s.info.site_id.clone(),
                season: data.season,
                level: fit.level,
                estimator: f.estimator,
                iterations: f.iterations,
                converged: f.converged,
                note: f.reason.clone(),
            });
        }
    }
    out
}

/// One shared (κ, ξ) row per cluster for the regional level, ξ only for the
/// semiregional level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRow {
    pub season: Season,
    pub level: Level,
    pub cluster: usize,
    pub kappa: Option<f64>,
    pub xi: f64,
    pub n_fitted: usize,
}

impl Record for ShapeRow {
    const HEADER: &'static [&'static str] = &["season", "level", "cluster", "kappa", "xi", "n_fitted"];
}

pub fn shape_rows(season: Season, fits: &[LevelFit]) -> Vec<ShapeRow> {
    let mut out = Vec::new();
    for fit in fits {
        for (c, shape) in fit.shapes.iter().enumerate() {
            if let Some(shape) = shape {
                out.push(ShapeRow {
                    season,
                    level: fit.level,
                    cluster: c,
                    kappa: (fit.level == Level::Regional).then_some(shape.kappa),
                    xi: shape.xi,
                    n_fitted: shape.n_fitted,
                });
            }
        }
    }
    out
}

impl Record for Unfitted {
    const HEADER: &'static [&'static str] = &["site_id", "season", "level", "reason"];
}

impl Record for ModelScore {
    const HEADER: &'static [&'static str] =
        &["season", "level", "n_sites", "n_clusters", "n_params", "log_likelihood", "aic"];
}

impl Record for GofRow {
    const HEADER: &'static [&'static str] =
        &["site_id", "season", "level", "ad_stat", "p_value", "reject_5pct", "altitude_band", "silhouette_band"];
}

impl Record for GofSkip {
    const HEADER: &'static [&'static str] = &["site_id", "season", "level", "reason"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub probability: f64,
    pub empirical: f64,
    pub model: f64,
}

impl Record for QqRow {
    const HEADER: &'static [&'static str] = &["site_id", "season", "level", "probability", "empirical", "model"];
}

impl QqRow {
    pub fn from_points(site_id: &str, season: Season, level: Level, points: &[QqPoint]) -> Vec<QqRow> {
        points
            .iter()
            .map(|p| QqRow {
                site_id: site_id.to_string(),
                season,
                level,
                probability: p.probability,
                empirical: p.empirical,
                model: p.model,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelRow {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    pub season: Season,
    #[serde(rename = "T_years")]
    pub t_years: f64,
    pub return_level_mm: Option<f64>,
    pub level: Level,
}

impl Record for ReturnLevelRow {
    const HEADER: &'static [&'static str] = &["site_id", "lon", "lat", "season", "T_years", "return_level_mm", "level"];
}

/// Labels read back from a partition table, aligned with `data`'s sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPartition {
    pub k: usize,
    pub labels: Vec<usize>,
    pub silhouettes: Vec<f64>,
}

/// Aligns a partition table with the season's sites. Every site needs a label
/// and the labels must cover `0..k` without gaps.
pub fn load_partition(data: &SeasonData, rows: &[PartitionRow]) -> Result<LoadedPartition> {
    let mut by_id: HashMap<&str, &PartitionRow> = HashMap::with_capacity(rows.len());
    for r in rows {
        if r.season != data.season {
            return Err(Error::SiteMismatch(format!(
                "partition row for `{}` is for season {}, expected {}",
                r.site_id, r.season, data.season
            )));
        }
        if by_id.insert(r.site_id.as_str(), r).is_some() {
            return Err(Error::SiteMismatch(format!("site `{}` appears twice in the partition", r.site_id)));
        }
    }
    if by_id.len() != data.len() {
        return Err(Error::SiteMismatch(format!("partition has {} sites, grid has {}", by_id.len(), data.len())));
    }
    let mut labels = Vec::with_capacity(data.len());
    let mut silhouettes = Vec::with_capacity(data.len());
    for s in &data.sites {
        let id = s.info.site_id.as_str();
        let row = by_id.get(id).ok_or_else(|| Error::SiteMismatch(format!("site `{id}` missing from partition")))?;
        labels.push(row.cluster.ok_or_else(|| Error::Missing(format!("site `{id}` has no cluster label")))?);
        silhouettes.push(row.silhouette.unwrap_or(f64::NAN));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; k];
    for &l in &labels {
        present[l] = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(Error::SiteMismatch(format!("cluster {c} of 0..{k} has no sites")));
    }
    Ok(LoadedPartition { k, labels, silhouettes })
}

/// Rebuilds per-level fits from a parameter table, aligned with `data`'s sites.
/// Levels appear in the order they first occur in the table.
pub fn load_fits(data: &SeasonData, rows: &[ParamRow]) -> Result<Vec<LevelFit>> {
    let index = data.index();
    let mut levels: Vec<Level> = Vec::new();
    for r in rows {
        if !levels.contains(&r.level) {
            levels.push(r.level);
        }
    }
    let mut fits: Vec<LevelFit> = levels
        .iter()
        .map(|&level| LevelFit {
            level,
            sites: vec![
                SiteFit {
                    dist: None,
                    cluster: None,
                    converged: false,
                    estimator: None,
                    iterations: 0,
                    n_fit: 0,
                    reason: Some("absent from parameter table".into()),
                };
                data.len()
            ],
            shapes: Vec::new(),
        })
        .collect();
    for r in rows {
        if r.season != data.season {
            return Err(Error::SiteMismatch(format!(
                "parameter row for `{}` is for season {}, expected {}",
                r.site_id, r.season, data.season
            )));
        }
        let &i = index
            .get(r.site_id.as_str())
            .ok_or_else(|| Error::SiteMismatch(format!("site `{}` is not in the grid", r.site_id)))?;
        let l = levels.iter().position(|&l| l == r.level).expect("collected above");
        let dist = r.dist()?;
        fits[l].sites[i] = SiteFit {
            dist,
            cluster: r.cluster,
            converged: r.converged,
            estimator: None,
            iterations: 0,
            n_fit: r.n_fit,
            reason: dist.is_none().then(|| "no parameters".to_string()),
        };
    }
    Ok(fits)
}

/// Return levels straight from the parameter and wet-day tables.
/// Fitted sites without a wet-day rate are an error.
pub fn return_level_rows(params: &[ParamRow], stats: &[WetStatsRow], periods: &[f64]) -> Result<Vec<ReturnLevelRow>> {
    let by_id: HashMap<(&str, Season), &WetStatsRow> =
        stats.iter().map(|s| ((s.site_id.as_str(), s.season), s)).collect();
    let mut out = Vec::with_capacity(params.len() * periods.len());
    for &t in periods {
        for p in params {
            let stat = by_id.get(&(p.site_id.as_str(), p.season)).ok_or_else(|| {
                Error::Missing(format!("no wet-day statistics for site `{}` in {}", p.site_id, p.season))
            })?;
            let value = match p.dist()? {
                Some(dist) => {
                    let n_wds = stat.n_wds_mean.ok_or_else(|| {
                        Error::Missing(format!("site `{}` has parameters but no n_wds_mean", p.site_id))
                    })?;
                    Some(return_level(&dist, t, n_wds, stat.threshold)?)
                }
                None => None,
            };
            out.push(ReturnLevelRow {
                site_id: p.site_id.clone(),
                lon: stat.lon,
                lat: stat.lat,
                season: p.season,
                t_years: t,
                return_level_mm: value,
                level: p.level,
            });
        }
    }
    Ok(out)
}

/// Groups return-level rows into fields, one per (season, level, period).
pub fn fields_from_rows(rows: &[ReturnLevelRow]) -> Vec<ReturnLevelField> {
    let mut out: Vec<ReturnLevelField> = Vec::new();
    for r in rows {
        let pos = out
            .iter()
            .position(|f| f.season == r.season && f.level == r.level && f.t_years == r.t_years)
            .unwrap_or_else(|| {
                out.push(ReturnLevelField {
                    season: r.season,
                    t_years: r.t_years,
                    level: r.level,
                    site_ids: Vec::new(),
                    values: Vec::new(),
                });
                out.len() - 1
            });
        out[pos].site_ids.push(r.site_id.clone());
        out[pos].values.push(r.return_level_mm.unwrap_or(f64::NAN));
    }
    out
}

/// Regional-versus-local comparison per season and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub season: Season,
    #[serde(rename = "T_years")]
    pub t_years: f64,
    pub n_compared: usize,
    pub fraction_within_10pct: f64,
    pub mean_abs_relative: f64,
}

pub fn diff_summaries(fields: &[ReturnLevelField], a: Level, b: Level) -> Result<Vec<DiffSummary>> {
    let mut out = Vec::new();
    for fa in fields.iter().filter(|f| f.level == a) {
        if let Some(fb) = fields.iter().find(|f| f.level == b && f.season == fa.season && f.t_years == fa.t_years) {
            let ReturnLevelDiff { n_compared, fraction_within_10pct, mean_abs_relative, .. } =
                return_level_diff(fa, fb)?;
            out.push(DiffSummary {
                season: fa.season,
                t_years: fa.t_years,
                n_compared,
                fraction_within_10pct,
                mean_abs_relative,
            });
        }
    }
    Ok(out)
}
