//! One season end to end: wet-day samples, ω field, clustering, the three
//! model levels, return levels and holdout goodness of fit.
//!
//! Each stage is a separate function over [`SeasonData`] so that file-based
//! drivers can run them one at a time.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{pam, scan_k, Partition, ScanResult};
use crate::egpd::{
    fit_local, fit_semiregional, return_level, ClusterShape, Egpd, FitMethod, Level, RegionalModel, RegionalOptions,
    RegionalSite,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    anderson_darling_test, return_level_diff, spatial_subsample, AdNull, AltitudeBand, GofReport, GofRow, GofSkip,
    ModelScore, ReturnLevelDiff, ReturnLevelField, SilhouetteBand, SIGNIFICANCE,
};
use crate::ingest::{seasonal_wet_sample, SampleStatus, Season, SeasonalWetSample, SiteInfo, SiteSeries};
use crate::pwm::{omega, OmegaField};

/// Sites reduced per parallel batch while streaming a grid.
const BATCH: usize = 512;

/// One site's wet-day data for the season.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSample {
    pub info: SiteInfo,
    pub wet: SeasonalWetSample,
    pub excessive_missing: bool,
}

impl SiteSample {
    pub fn from_series(series: &SiteSeries, season: Season, threshold: f64) -> Result<Self> {
        Ok(SiteSample {
            info: series.info.clone(),
            wet: seasonal_wet_sample(series, season, threshold)?,
            excessive_missing: series.has_excessive_missing(),
        })
    }

    pub fn is_usable(&self) -> bool {
        self.wet.is_usable()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonData {
    pub season: Season,
    pub threshold: f64,
    pub sites: Vec<SiteSample>,
}

impl SeasonData {
    /// Reduces a stream of daily series to their seasonal wet-day samples,
    /// batch by batch, so the daily records never all sit in memory.
    pub fn from_sites<I>(sites: I, season: Season, threshold: f64) -> Result<Self>
    where
        I: IntoIterator<Item = Result<SiteSeries>>,
    {
        let mut out = Vec::new();
        let mut batch = Vec::with_capacity(BATCH);
        let flush = |batch: &mut Vec<SiteSeries>, out: &mut Vec<SiteSample>| -> Result<()> {
            let reduced: Result<Vec<SiteSample>> =
                batch.par_iter().map(|s| SiteSample::from_series(s, season, threshold)).collect();
            out.extend(reduced?);
            batch.clear();
            Ok(())
        };
        for site in sites {
            batch.push(site?);
            if batch.len() == BATCH {
                flush(&mut batch, &mut out)?;
            }
        }
        flush(&mut batch, &mut out)?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = out.iter().find(|s| !seen.insert(s.info.site_id.as_str())) {
            return Err(Error::SiteMismatch(format!("site id `{}` appears twice", dup.info.site_id)));
        }
        Ok(SeasonData { season, threshold, sites: out })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// ω from every wet day of each site; degenerate or tiny samples are flagged.
    pub fn omega_field(&self) -> OmegaField {
        let values: Vec<f64> = self.sites.par_iter().map(|s| omega(&s.wet.wet_values).unwrap_or(f64::NAN)).collect();
        let sizes = self.sites.iter().map(|s| s.wet.wet_values.len()).collect();
        OmegaField::from_values(values, sizes).expect("one size per value")
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.sites.iter().map(|s| (s.info.lon, s.info.lat)).collect()
    }

    pub fn site_ids(&self) -> Vec<&str> {
        self.sites.iter().map(|s| s.info.site_id.as_str()).collect()
    }

    /// Position of each site id.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.sites.iter().enumerate().map(|(i, s)| (s.info.site_id.as_str(), i)).collect()
    }
}

fn finish_partition(data: &SeasonData, mut partition: Partition) -> Result<Partition> {
    partition.assign_degenerate(&data.coords())?;
    Ok(partition)
}

/// Clusters the season's ω field into `k` regions; sites with a degenerate ω
/// take the label of their geographically nearest clustered site.
pub fn cluster_season(data: &SeasonData, field: &OmegaField, k: usize) -> Result<Partition> {
    finish_partition(data, pam(field, k)?)
}

/// Partitions and validity indices for every `k` in the range.
pub fn scan_season(data: &SeasonData, field: &OmegaField, k_min: usize, k_max: usize) -> Result<ScanResult> {
    let mut scan = scan_k(field, k_min, k_max)?;
    scan.partitions = scan.partitions.into_iter().map(|p| finish_partition(data, p)).collect::<Result<Vec<_>>>()?;
    Ok(scan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Pwm,
    MaxLikelihood,
    FixedPoint,
}

impl From<FitMethod> for Estimator {
    fn from(m: FitMethod) -> Self {
        match m {
            FitMethod::Pwm => Estimator::Pwm,
            FitMethod::MaxLikelihood => Estimator::MaxLikelihood,
        }
    }
}

/// One site's parameters at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFit {
    pub dist: Option<Egpd>,
    pub cluster: Option<usize>,
    pub converged: bool,
    pub estimator: Option<Estimator>,
    pub iterations: usize,
    pub n_fit: usize,
    /// Why the site has no parameters, when it has none.
    pub reason: Option<String>,
}

impl SiteFit {
    fn failed(cluster: Option<usize>, n_fit: usize, reason: String) -> Self {
        SiteFit { dist: None, cluster, converged: false, estimator: None, iterations: 0, n_fit, reason: Some(reason) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelFit {
    pub level: Level,
    pub sites: Vec<SiteFit>,
    /// Cluster-common shape; for the semiregional level only `xi` is shared.
    pub shapes: Vec<Option<ClusterShape>>,
}

impl LevelFit {
    pub fn fitted(&self) -> usize {
        self.sites.iter().filter(|s| s.dist.is_some()).count()
    }
}

/// Fits the requested levels. Semiregional and regional levels need `labels`
/// (one cluster label per site, in `0..k`); both start from the local fits.
pub fn fit_levels(
    data: &SeasonData,
    labels: Option<&[usize]>,
    k: usize,
    levels: &[Level],
    options: &RegionalOptions,
) -> Result<Vec<LevelFit>> {
    let needs_partition = levels.iter().any(|l| *l != Level::Local);
    if needs_partition {
        let labels = labels.ok_or_else(|| {
            Error::InvalidArgument("semiregional and regional fits need a partition with an explicit k".into())
        })?;
        if labels.len() != data.len() {
            return Err(Error::SiteMismatch(format!("{} labels for {} sites", labels.len(), data.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("cluster label {bad} outside 0..{k}")));
        }
    }
    let threshold = data.threshold;
    let fit_values: Vec<Vec<f64>> = data.sites.iter().map(|s| s.wet.fit_values()).collect();
    let cluster_of = |i: usize| labels.map(|l| l[i]);

    let local: Vec<SiteFit> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let n_fit = fit_values[i].len();
            if !data.sites[i].is_usable() {
                return SiteFit::failed(cluster_of(i), n_fit, "insufficient data".into());
            }
            match fit_local(&fit_values[i], threshold) {
                Ok(f) => SiteFit {
                    dist: Some(f.dist),
                    cluster: cluster_of(i),
                    converged: true,
                    estimator: Some(f.method.into()),
                    iterations: f.iterations,
                    n_fit,
                    reason: None,
                },
                Err(e) => SiteFit::failed(cluster_of(i), n_fit, e.to_string()),
            }
        })
        .collect();

    let mut out = Vec::new();
    for &level in levels {
        match level {
            Level::Local => out.push(LevelFit { level, sites: local.clone(), shapes: Vec::new() }),
            Level::Semiregional => {
                let labels = labels.expect("checked above");
                let shapes: Vec<Option<ClusterShape>> = (0..k)
                    .map(|c| {
                        ClusterShape::from_local(
                            (0..data.len()).filter(|&i| labels[i] == c).filter_map(|i| local[i].dist.as_ref()),
                        )
                        .ok()
                    })
                    .collect();
                let sites: Vec<SiteFit> = (0..data.len())
                    .into_par_iter()
                    .map(|i| {
                        let n_fit = fit_values[i].len();
                        let cluster = Some(labels[i]);
                        if !data.sites[i].is_usable() {
                            return SiteFit::failed(cluster, n_fit, "insufficient data".into());
                        }
                        let Some(shape) = shapes[labels[i]] else {
                            return SiteFit::failed(cluster, n_fit, "cluster has no local fit".into());
                        };
                        match fit_semiregional(&fit_values[i], threshold, shape.xi, local[i].dist.as_ref()) {
                            Ok(f) => SiteFit {
                                dist: Some(f.dist),
                                cluster,
                                converged: true,
                                estimator: Some(f.method.into()),
                                iterations: f.iterations,
                                n_fit,
                                reason: None,
                            },
                            Err(e) => SiteFit::failed(cluster, n_fit, e.to_string()),
                        }
                    })
                    .collect();
                out.push(LevelFit { level, sites, shapes });
            }
            Level::Regional => {
                let labels = labels.expect("checked above");
                let usable: Vec<usize> = (0..data.len()).filter(|&i| data.sites[i].is_usable()).collect();
                let inputs: Vec<RegionalSite<'_>> =
                    usable.iter().map(|&i| RegionalSite { values: &fit_values[i], local: local[i].dist }).collect();
                let usable_labels: Vec<usize> = usable.iter().map(|&i| labels[i]).collect();
                let model = RegionalModel::fit(&inputs, &usable_labels, k, threshold, options)?;
                let mut sites: Vec<SiteFit> = (0..data.len())
                    .map(|i| SiteFit::failed(Some(labels[i]), fit_values[i].len(), "insufficient data".into()))
                    .collect();
                for (j, &i) in usable.iter().enumerate() {
                    sites[i] = match (model.sites[j], model.site_dist(j, labels[i])) {
                        (Some(sigma), Some(dist)) => SiteFit {
                            dist: Some(dist),
                            cluster: Some(labels[i]),
                            converged: sigma.converged,
                            estimator: Some(Estimator::FixedPoint),
                            iterations: sigma.iterations,
                            n_fit: fit_values[i].len(),
                            reason: (!sigma.converged).then(|| "fixed point not reached; local scale kept".into()),
                        },
                        _ => SiteFit::failed(Some(labels[i]), fit_values[i].len(), "cluster has no local fit".into()),
                    };
                }
                out.push(LevelFit { level, sites, shapes: model.shapes });
            }
        }
    }
    Ok(out)
}

/// FIT-data log-likelihood of every site at one level; `None` where unfitted.
pub fn log_likelihoods(data: &SeasonData, fit: &LevelFit) -> Vec<Option<f64>> {
    data.sites
        .par_iter()
        .zip(fit.sites.par_iter())
        .map(|(site, f)| {
            let dist = f.dist?.truncated(data.threshold).ok()?;
            let ll = dist.log_likelihood(&site.wet.fit_values());
            ll.is_finite().then_some(ll)
        })
        .collect()
}

/// Total AIC per level over the sites fitted at every given level.
pub fn model_scores(data: &SeasonData, fits: &[LevelFit]) -> Vec<ModelScore> {
    let lls: Vec<Vec<Option<f64>>> = fits.iter().map(|f| log_likelihoods(data, f)).collect();
    let common: Vec<usize> = (0..data.len()).filter(|&i| lls.iter().all(|l| l[i].is_some())).collect();
    fits.iter()
        .zip(&lls)
        .map(|(fit, ll)| {
            let mut clusters: Vec<usize> = common.iter().filter_map(|&i| fit.sites[i].cluster).collect();
            clusters.sort_unstable();
            clusters.dedup();
            let values: Vec<f64> = common.iter().map(|&i| ll[i].expect("common set")).collect();
            ModelScore::new(data.season, fit.level, &values, clusters.len())
        })
        .collect()
}

/// Return-level fields of one level, one per period.
pub fn return_levels(data: &SeasonData, fit: &LevelFit, periods: &[f64]) -> Result<Vec<ReturnLevelField>> {
    let ids: Vec<String> = data.sites.iter().map(|s| s.info.site_id.clone()).collect();
    periods
        .iter()
        .map(|&t| {
            let values: Result<Vec<f64>> = data
                .sites
                .par_iter()
                .zip(fit.sites.par_iter())
                .map(|(site, f)| match f.dist {
                    Some(d) if site.wet.n_wds_mean > 0.0 => return_level(&d, t, site.wet.n_wds_mean, data.threshold),
                    _ => Ok(f64::NAN),
                })
                .collect();
            Ok(ReturnLevelField {
                season: data.season,
                t_years: t,
                level: fit.level,
                site_ids: ids.clone(),
                values: values?,
            })
        })
        .collect()
}

/// Relative difference of two levels' fields, period by period.
pub fn return_level_diffs(a: &[ReturnLevelField], b: &[ReturnLevelField]) -> Result<Vec<ReturnLevelDiff>> {
    a.iter()
        .map(|fa| {
            let fb = b
                .iter()
                .find(|f| f.t_years == fa.t_years)
                .ok_or_else(|| Error::Missing(format!("no field for T = {}", fa.t_years)))?;
            return_level_diff(fa, fb)
        })
        .collect()
}

/// Named seeds drawn in a fixed order from the run's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
    pub subsample: u64,
    pub ad_null: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        SeedPlan { master, subsample: rng.random(), ad_null: rng.random() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofOptions {
    pub fraction: f64,
    pub simulations: usize,
}

impl Default for GofOptions {
    fn default() -> Self {
        GofOptions {
            fraction: crate::evaluate::DEFAULT_SUBSAMPLE_FRACTION,
            simulations: crate::evaluate::DEFAULT_SIMULATIONS,
        }
    }
}

/// Anderson–Darling tests of the TEST holdout on a seeded subsample of sites.
/// `silhouettes` (one per site) feeds the silhouette bands when given.
pub fn goodness_of_fit(
    data: &SeasonData,
    fits: &[LevelFit],
    silhouettes: Option<&[f64]>,
    options: &GofOptions,
    seeds: &SeedPlan,
) -> Result<GofReport> {
    let ids = data.site_ids();
    let chosen = spatial_subsample(&ids, options.fraction, seeds.subsample)?;
    let null = AdNull::new(seeds.ad_null, options.simulations);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for fit in fits {
        let results: Vec<std::result::Result<GofRow, GofSkip>> = chosen
            .par_iter()
            .map(|&i| {
                let site = &data.sites[i];
                let skip = |reason: String| GofSkip {
                    site_id: site.info.site_id.clone(),
                    season: data.season,
                    level: fit.level,
                    reason,
                };
                let dist = fit.sites[i].dist.ok_or_else(|| skip("no fitted parameters".into()))?;
                let truncated = dist.truncated(data.threshold).map_err(|e| skip(e.to_string()))?;
                let result = anderson_darling_test(&truncated, &site.wet.test_values(), &null)
                    .map_err(|e| skip(e.to_string()))?;
                Ok(GofRow {
                    site_id: site.info.site_id.clone(),
                    season: data.season,
                    level: fit.level,
                    ad_stat: result.statistic,
                    p_value: result.p_value,
                    reject_5pct: result.reject(SIGNIFICANCE),
                    altitude_band: AltitudeBand::of(site.info.elevation),
                    silhouette_band: SilhouetteBand::of(silhouettes.map(|s| s[i])),
                })
            })
            .collect();
        for r in results {
            match r {
                Ok(row) => rows.push(row),
                Err(skip) => skipped.push(skip),
            }
        }
    }
    Ok(GofReport { seed: seeds.master, fraction: options.fraction, simulations: null.simulations(), rows, skipped })
}

/// Sites without parameters at some level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unfitted {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub reason: String,
}

pub fn unfitted(data: &SeasonData, fits: &[LevelFit]) -> Vec<Unfitted> {
    let mut out = Vec::new();
    for fit in fits {
        for (site, f) in data.sites.iter().zip(&fit.sites) {
            if let Some(reason) = &f.reason {
                if f.dist.is_none() || !f.converged {
                    out.push(Unfitted {
                        site_id: site.info.site_id.clone(),
                        season: data.season,
                        level: fit.level,
                        reason: reason.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Number of sites with usable samples.
pub fn usable_count(data: &SeasonData) -> usize {
    data.sites.iter().filter(|s| s.wet.status == SampleStatus::Ok).count()
}
