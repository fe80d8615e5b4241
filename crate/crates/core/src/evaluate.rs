//! Holdout goodness of fit, model comparison and return-level comparison.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::egpd::{Level, Truncated};
use crate::error::{Error, Result};
use crate::ingest::Season;

/// Smallest holdout tested.
pub const MIN_HOLDOUT: usize = 20;
/// Simulated statistics behind each p-value.
pub const DEFAULT_SIMULATIONS: usize = 999;
/// Default share of sites tested.
pub const DEFAULT_SUBSAMPLE_FRACTION: f64 = 0.125;
pub const SIGNIFICANCE: f64 = 0.05;

/// Anderson–Darling `A²` from sorted `(ln F, ln(1 − F))` pairs.
fn ad_from_logs(ln_cdf: &[f64], ln_sf: &[f64]) -> f64 {
    let n = ln_cdf.len();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        s += (2 * i + 1) as f64 * (ln_cdf[i] + ln_sf[n - 1 - i]);
    }
    -nf - s / nf
}

/// `A²` of uniform variates against the uniform law.
pub fn ad_statistic_uniform(u: &[f64]) -> f64 {
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ln_cdf: Vec<f64> = sorted.iter().map(|&v| v.ln()).collect();
    let ln_sf: Vec<f64> = sorted.iter().map(|&v| (-v).ln_1p()).collect();
    ad_from_logs(&ln_cdf, &ln_sf)
}

/// `A²` of a sample against a fitted truncated EGPD. The upper tail uses the
/// survival function directly, so large observations keep full precision.
pub fn ad_statistic(dist: &Truncated, sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ln_cdf: Vec<f64> = sorted.iter().map(|&z| dist.cdf(z).ln()).collect();
    let ln_sf: Vec<f64> = sorted.iter().map(|&z| dist.sf(z).ln()).collect();
    ad_from_logs(&ln_cdf, &ln_sf)
}

/// Simulated null distributions of `A²`, one per holdout size.
///
/// The parameters under test come from data disjoint from the holdout, so
/// under the null the probability integral transform of the holdout is an
/// i.i.d. uniform sample whatever the fitted parameters are. Samples drawn
/// from the fitted law therefore give the same statistics as uniform draws,
/// and one table per size serves every site. Each table is seeded from the
/// master seed and the size alone.
#[derive(Debug)]
pub struct AdNull {
    seed: u64,
    simulations: usize,
    tables: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

impl AdNull {
    pub fn new(seed: u64, simulations: usize) -> Self {
        AdNull { seed, simulations: simulations.max(1), tables: Mutex::new(HashMap::new()) }
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    /// Sorted simulated statistics for holdout size `n`.
    pub fn table(&self, n: usize) -> Arc<Vec<f64>> {
        if let Some(t) = self.tables.lock().expect("null table lock").get(&n) {
            return Arc::clone(t);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut u = vec![0.0; n];
        let mut stats: Vec<f64> = (0..self.simulations)
            .map(|_| {
                for v in u.iter_mut() {
                    *v = rng.random::<f64>().max(f64::MIN_POSITIVE);
                }
                ad_statistic_uniform(&u)
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        let table = Arc::new(stats);
        self.tables.lock().expect("null table lock").entry(n).or_insert(Arc::clone(&table));
        table
    }

    /// `(1 + #{simulated ≥ observed}) / (N + 1)`.
    pub fn p_value(&self, n: usize, statistic: f64) -> f64 {
        let table = self.table(n);
        let below = table.partition_point(|&s| s < statistic);
        (1 + table.len() - below) as f64 / (table.len() + 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl AdResult {
    pub fn reject(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Anderson–Darling test of a holdout against the fitted truncated EGPD.
pub fn anderson_darling_test(dist: &Truncated, holdout: &[f64], null: &AdNull) -> Result<AdResult> {
    if holdout.len() < MIN_HOLDOUT {
        return Err(Error::SampleTooSmall { needed: MIN_HOLDOUT, got: holdout.len() });
    }
    if let Some(bad) = holdout.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonPositive(*bad));
    }
    let statistic = ad_statistic(dist, holdout);
    Ok(AdResult { statistic, p_value: null.p_value(holdout.len(), statistic), n: holdout.len() })
}

/// Seeded uniform choice of `⌈fraction · n⌉` sites. The choice depends only on
/// the set of ids, not on their order. Returns input positions, ascending.
pub fn spatial_subsample<S: AsRef<str>>(site_ids: &[S], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("subsample fraction must lie in (0, 1], got {fraction}")));
    }
    let n = site_ids.len();
    let take = ((fraction * n as f64).ceil() as usize).min(n);
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&a, &b| site_ids[a].as_ref().cmp(site_ids[b].as_ref()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample_indices(&mut rng, n, take).into_iter().map(|i| by_id[i]).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

/// Total AIC of one model level over a set of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub season: Season,
    pub level: Level,
    pub n_sites: usize,
    pub n_clusters: usize,
    pub n_params: usize,
    pub log_likelihood: f64,
    pub aic: f64,
}

impl ModelScore {
    /// Sums per-site FIT log-likelihoods in the given order.
    pub fn new(season: Season, level: Level, site_log_likelihoods: &[f64], n_clusters: usize) -> Self {
        let n_sites = site_log_likelihoods.len();
        let n_params = level.parameter_count(n_sites, n_clusters);
        let log_likelihood: f64 = site_log_likelihoods.iter().sum();
        ModelScore { season, level, n_sites, n_clusters, n_params, log_likelihood, aic: aic(log_likelihood, n_params) }
    }
}

/// Empirical order statistics paired with model quantiles at `(j − 0.5)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub probability: f64,
    pub empirical: f64,
    pub model: f64,
}

pub fn qq_data(dist: &Truncated, holdout: &[f64]) -> Result<Vec<QqPoint>> {
    if holdout.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let mut sorted = holdout.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(j, empirical)| {
            let probability = (j as f64 + 0.5) / n;
            Ok(QqPoint { probability, empirical, model: dist.quantile(probability)? })
        })
        .collect()
}

/// Return levels of one season, period and model level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelField {
    pub season: Season,
    pub t_years: f64,
    pub level: Level,
    pub site_ids: Vec<String>,
    /// `NaN` where a site has no fit.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLevelDiff {
    /// `(a − b) / b` per site; `NaN` when either value is missing.
    pub relative: Vec<f64>,
    pub n_compared: usize,
    pub fraction_within_10pct: f64,
    pub mean_abs_relative: f64,
}

pub fn return_level_diff(a: &ReturnLevelField, b: &ReturnLevelField) -> Result<ReturnLevelDiff> {
    if a.site_ids != b.site_ids {
        return Err(Error::SiteMismatch("return-level fields cover different sites".into()));
    }
    if a.season != b.season || a.t_years != b.t_years {
        return Err(Error::SiteMismatch(format!(
            "cannot compare {} T={} with {} T={}",
            a.season, a.t_years, b.season, b.t_years
        )));
    }
    let relative: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| if x.is_finite() && y.is_finite() && y != 0.0 { (x - y) / y } else { f64::NAN })
        .collect();
    let finite: Vec<f64> = relative.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    let (within, mean_abs) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (
            finite.iter().filter(|v| v.abs() < 0.10).count() as f64 / n as f64,
            finite.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        )
    };
    Ok(ReturnLevelDiff { relative, n_compared: n, fraction_within_10pct: within, mean_abs_relative: mean_abs })
}

pub const ALTITUDE_SPLIT_M: f64 = 1000.0;
pub const SILHOUETTE_SPLIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AltitudeBand {
    #[serde(rename = "below_1000m")]
    Below1000m,
    #[serde(rename = "above_1000m")]
    Above1000m,
    #[serde(rename = "unknown")]
    Unknown,
}

impl AltitudeBand {
    pub fn of(elevation: Option<f64>) -> Self {
        match elevation {
            Some(e) if e.is_finite() && e < ALTITUDE_SPLIT_M => AltitudeBand::Below1000m,
            Some(e) if e.is_finite() => AltitudeBand::Above1000m,
            _ => AltitudeBand::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AltitudeBand::Below1000m => "below_1000m",
            AltitudeBand::Above1000m => "above_1000m",
            AltitudeBand::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SilhouetteBand {
    #[serde(rename = "below_0.2")]
    Below0_2,
    #[serde(rename = "above_0.2")]
    Above0_2,
    #[serde(rename = "unknown")]
    Unknown,
}

impl SilhouetteBand {
    pub fn of(silhouette: Option<f64>) -> Self {
        match silhouette {
            Some(s) if s.is_finite() && s < SILHOUETTE_SPLIT => SilhouetteBand::Below0_2,
            Some(s) if s.is_finite() => SilhouetteBand::Above0_2,
            _ => SilhouetteBand::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SilhouetteBand::Below0_2 => "below_0.2",
            SilhouetteBand::Above0_2 => "above_0.2",
            SilhouetteBand::Unknown => "unknown",
        }
    }
}

/// One tested site under one model level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub ad_stat: f64,
    pub p_value: f64,
    pub reject_5pct: bool,
    pub altitude_band: AltitudeBand,
    pub silhouette_band: SilhouetteBand,
}

/// Sites that were drawn for testing but could not be tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofSkip {
    pub site_id: String,
    pub season: Season,
    pub level: Level,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub seed: u64,
    pub fraction: f64,
    pub simulations: usize,
    pub rows: Vec<GofRow>,
    pub skipped: Vec<GofSkip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub tested: usize,
    pub nonrejected: usize,
    pub nonrejection_rate: f64,
}

impl RateCell {
    fn from_rows<'a>(rows: impl Iterator<Item = &'a GofRow>) -> Self {
        let (mut tested, mut kept) = (0, 0);
        for r in rows {
            tested += 1;
            if !r.reject_5pct {
                kept += 1;
            }
        }
        let rate = if tested > 0 { kept as f64 / tested as f64 } else { f64::NAN };
        RateCell { tested, nonrejected: kept, nonrejection_rate: rate }
    }
}

/// Nonrejection rates per season and level, overall and by band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofSummary {
    pub seed: u64,
    pub fraction: f64,
    pub simulations: usize,
    pub holdout: String,
    pub overall: BTreeMap<String, BTreeMap<String, RateCell>>,
    pub by_altitude: BTreeMap<String, BTreeMap<String, BTreeMap<String, RateCell>>>,
    pub by_silhouette: BTreeMap<String, BTreeMap<String, BTreeMap<String, RateCell>>>,
}

impl GofReport {
    pub fn rate(&self, season: Season, level: Level) -> RateCell {
        RateCell::from_rows(self.rows.iter().filter(|r| r.season == season && r.level == level))
    }

    pub fn summary(&self) -> GofSummary {
        let mut keys: Vec<(Season, Level)> = self.rows.iter().map(|r| (r.season, r.level)).collect();
        keys.sort();
        keys.dedup();
        let mut overall: BTreeMap<String, BTreeMap<String, RateCell>> = BTreeMap::new();
        let mut by_altitude: BTreeMap<String, BTreeMap<String, BTreeMap<String, RateCell>>> = BTreeMap::new();
        let mut by_silhouette: BTreeMap<String, BTreeMap<String, BTreeMap<String, RateCell>>> = BTreeMap::new();
        for (season, level) in keys {
            let rows = || self.rows.iter().filter(move |r| r.season == season && r.level == level);
            overall.entry(season.to_string()).or_default().insert(level.to_string(), RateCell::from_rows(rows()));
            for band in [AltitudeBand::Below1000m, AltitudeBand::Above1000m, AltitudeBand::Unknown] {
                let cell = RateCell::from_rows(rows().filter(|r| r.altitude_band == band));
                if cell.tested > 0 {
                    by_altitude
                        .entry(season.to_string())
                        .or_default()
                        .entry(level.to_string())
                        .or_default()
                        .insert(band.as_str().into(), cell);
                }
            }
            for band in [SilhouetteBand::Below0_2, SilhouetteBand::Above0_2, SilhouetteBand::Unknown] {
                let cell = RateCell::from_rows(rows().filter(|r| r.silhouette_band == band));
                if cell.tested > 0 {
                    by_silhouette
                        .entry(season.to_string())
                        .or_default()
                        .entry(level.to_string())
                        .or_default()
                        .insert(band.as_str().into(), cell);
                }
            }
        }
        GofSummary {
            seed: self.seed,
            fraction: self.fraction,
            simulations: self.simulations,
            holdout: "test".into(),
            overall,
            by_altitude,
            by_silhouette,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_names_match_their_serialized_form() {
        for b in [AltitudeBand::Below1000m, AltitudeBand::Above1000m, AltitudeBand::Unknown] {
            assert_eq!(serde_json::to_value(b).unwrap(), b.as_str());
        }
        for b in [SilhouetteBand::Below0_2, SilhouetteBand::Above0_2, SilhouetteBand::Unknown] {
            assert_eq!(serde_json::to_value(b).unwrap(), b.as_str());
        }
    }
    use crate::egpd::Egpd;

    fn fitted() -> Truncated {
        Egpd::new(1.2, 5.0, 0.2).unwrap().truncated(1.0).unwrap()
    }

    fn brute_ad(u: &[f64]) -> f64 {
        // Textbook form with explicit 1 − U.
        let mut s = u.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let sum: f64 = (1..=n).map(|i| (2 * i - 1) as f64 * (s[i - 1].ln() + (1.0 - s[n - i]).ln())).sum();
        -(n as f64) - sum / n as f64
    }

    #[test]
    fn statistic_matches_textbook_form() {
        let u = [0.11, 0.52, 0.33, 0.91, 0.47, 0.05, 0.76];
        assert!((ad_statistic_uniform(&u) - brute_ad(&u)).abs() < 1e-12);
        // Single point at the median: A² = −1 − 2 ln 0.5.
        assert!((ad_statistic_uniform(&[0.5]) - (-1.0 - 2.0 * 0.5f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn statistic_is_invariant_under_the_probability_transform() {
        let t = fitted();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = t.sample_n(&mut rng, 300);
        let u: Vec<f64> = sample.iter().map(|&z| t.cdf(z)).collect();
        assert!((ad_statistic(&t, &sample) - ad_statistic_uniform(&u)).abs() < 1e-10);
    }

    #[test]
    fn null_tables_are_reproducible_and_cached() {
        let a = AdNull::new(7, 199);
        let b = AdNull::new(7, 199);
        assert_eq!(a.table(50), b.table(50));
        assert!(Arc::ptr_eq(&a.table(50), &a.table(50)));
        assert!(a.table(50).windows(2).all(|w| w[0] <= w[1]));
        // Large-sample median of A² is about 0.78.
        let t = a.table(200);
        assert!((t[99] - 0.78).abs() < 0.15, "{}", t[99]);
    }

    #[test]
    fn p_value_bounds() {
        let null = AdNull::new(1, 999);
        assert_eq!(null.p_value(30, f64::INFINITY), 1.0 / 1000.0);
        assert_eq!(null.p_value(30, 0.0), 1.0);
    }

    #[test]
    fn huge_null_sample_is_not_rejected() {
        let t = fitted();
        let sample: Vec<f64> = (0..20_000).map(|j| t.quantile((j as f64 + 0.5) / 20_000.0).unwrap()).collect();
        let r = anderson_darling_test(&t, &sample, &AdNull::new(3, 199)).unwrap();
        assert!(r.p_value > 0.05);
    }

    #[test]
    fn small_holdout_is_skipped() {
        let t = fitted();
        assert!(matches!(
            anderson_darling_test(&t, &[2.0; 10], &AdNull::new(0, 9)),
            Err(Error::SampleTooSmall { needed: 20, got: 10 })
        ));
    }

    #[test]
    fn subsample_contract() {
        let ids: Vec<String> = (0..20_000).map(|i| format!("s{i:05}")).collect();
        let chosen = spatial_subsample(&ids, 0.125, 9).unwrap();
        assert_eq!(chosen.len(), 2500);
        assert_eq!(chosen, spatial_subsample(&ids, 0.125, 9).unwrap());
        assert_eq!(spatial_subsample(&ids[..10], 1.0, 3).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(spatial_subsample(&ids[..10], 0.01, 3).unwrap().len(), 1);
        assert!(spatial_subsample(&ids, 0.0, 1).is_err());
        assert!(spatial_subsample(&ids, 1.5, 1).is_err());
        // Permuting the input selects the same ids.
        let mut reversed = ids[..100].to_vec();
        reversed.reverse();
        let pick = |v: &[String], c: Vec<usize>| {
            let mut s: Vec<String> = c.into_iter().map(|i| v[i].clone()).collect();
            s.sort();
            s
        };
        assert_eq!(
            pick(&ids[..100], spatial_subsample(&ids[..100], 0.3, 4).unwrap()),
            pick(&reversed, spatial_subsample(&reversed, 0.3, 4).unwrap())
        );
    }

    #[test]
    fn aic_definition() {
        assert_eq!(aic(0.0, 3), 6.0);
        assert_eq!(aic(-10.0, 4) - aic(-10.0, 3), 2.0);
        let s = ModelScore::new(Season::Son, Level::Regional, &[-1.0, -2.0, -3.0], 1);
        assert_eq!(s.n_params, 5);
        assert_eq!(s.aic, 2.0 * 5.0 + 12.0);
        let a = ModelScore::new(Season::Son, Level::Local, &[-1.0, -2.0], 1);
        let b = ModelScore::new(Season::Son, Level::Local, &[-3.0], 1);
        let ab = ModelScore::new(Season::Son, Level::Local, &[-1.0, -2.0, -3.0], 1);
        assert!((a.aic + b.aic - ab.aic).abs() < 1e-12);
    }

    #[test]
    fn qq_contract() {
        let t = fitted();
        let n = 40;
        let exact: Vec<f64> = (0..n).map(|j| t.quantile((j as f64 + 0.5) / n as f64).unwrap()).collect();
        let qq = qq_data(&t, &exact).unwrap();
        assert_eq!(qq.len(), n);
        for p in &qq {
            assert!((p.empirical - p.model).abs() < 1e-12);
        }
        assert!(qq.windows(2).all(|w| w[0].empirical <= w[1].empirical && w[0].model <= w[1].model));
        assert!(qq_data(&t, &[]).is_err());
    }

    #[test]
    fn qq_tracks_a_large_sample() {
        let t = fitted();
        let sample = t.sample_n(&mut ChaCha8Rng::seed_from_u64(12), 10_000);
        for p in qq_data(&t, &sample).unwrap().iter().filter(|p| p.probability <= 0.99) {
            assert!(((p.empirical - p.model) / p.model).abs() < 0.10, "{p:?}");
        }
    }

    fn rl_field(values: Vec<f64>) -> ReturnLevelField {
        ReturnLevelField {
            season: Season::Son,
            t_years: 50.0,
            level: Level::Local,
            site_ids: (0..values.len()).map(|i| i.to_string()).collect(),
            values,
        }
    }

    #[test]
    fn return_level_diff_contract() {
        let a = rl_field(vec![10.0, 20.0, 30.0]);
        let d = return_level_diff(&a, &a).unwrap();
        assert!(d.relative.iter().all(|&v| v == 0.0));
        assert_eq!(d.fraction_within_10pct, 1.0);
        let b = rl_field(vec![20.0, 40.0, 60.0]);
        let d = return_level_diff(&a, &b).unwrap();
        assert!(d.relative.iter().all(|&v| v == -0.5));
        assert_eq!(d.fraction_within_10pct, 0.0);
        let c = rl_field(vec![1.0, 2.0]);
        assert!(return_level_diff(&a, &c).is_err());
        let d = return_level_diff(&rl_field(vec![f64::NAN, 11.0]), &rl_field(vec![5.0, 10.0])).unwrap();
        assert_eq!(d.n_compared, 1);
        assert!(d.relative[0].is_nan());
    }

    #[test]
    fn summary_groups_by_season_level_and_band() {
        let row = |level, reject, alt: Option<f64>, sil: Option<f64>| GofRow {
            site_id: "x".into(),
            season: Season::Djf,
            level,
            ad_stat: 0.5,
            p_value: if reject { 0.01 } else { 0.5 },
            reject_5pct: reject,
            altitude_band: AltitudeBand::of(alt),
            silhouette_band: SilhouetteBand::of(sil),
        };
        let report = GofReport {
            seed: 1,
            fraction: 0.125,
            simulations: 999,
            rows: vec![
                row(Level::Local, false, Some(200.0), Some(0.5)),
                row(Level::Local, true, Some(1500.0), Some(0.1)),
                row(Level::Regional, false, None, Some(0.3)),
            ],
            skipped: vec![],
        };
        let s = report.summary();
        assert_eq!(s.overall["DJF"]["local"].nonrejection_rate, 0.5);
        assert_eq!(s.overall["DJF"]["regional"].tested, 1);
        assert_eq!(s.by_altitude["DJF"]["local"]["above_1000m"].nonrejected, 0);
        assert_eq!(s.by_silhouette["DJF"]["local"]["above_0.2"].nonrejection_rate, 1.0);
        assert_eq!(report.rate(Season::Djf, Level::Local).tested, 2);
    }
}
