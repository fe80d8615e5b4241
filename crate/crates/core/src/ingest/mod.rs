//! Daily precipitation series, seasonal subsetting, wet-day extraction and the
//! FIT/TEST/SPARE thinning of consecutive wet days.

mod dense;
mod long_csv;

pub use dense::{read_dense, write_dense, DenseRows, DenseSidecar, DenseWriter, SidecarSite};
pub use long_csv::{read_long_csv, write_long_csv, LongCsvWriter, LONG_CSV_HEADER};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default wet-day threshold (mm/day).
pub const DEFAULT_THRESHOLD: f64 = 1.0;
/// Minimum number of FIT values for a site to be fitted.
pub const MIN_FIT_VALUES: usize = 30;
/// A site is flagged when some season-year misses more than this fraction of days.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    #[serde(rename = "SON")]
    Son,
    #[serde(rename = "DJF")]
    Djf,
    #[serde(rename = "MAM")]
    Mam,
    #[serde(rename = "JJA")]
    Jja,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Son, Season::Djf, Season::Mam, Season::Jja];

    pub fn of_month(month: u32) -> Season {
        match month {
            9..=11 => Season::Son,
            12 | 1 | 2 => Season::Djf,
            3..=5 => Season::Mam,
            _ => Season::Jja,
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        Season::of_month(date.month()) == *self
    }

    /// Season-year label. December belongs to the DJF of the following year.
    pub fn season_year(date: NaiveDate) -> i32 {
        if date.month() == 12 {
            date.year() + 1
        } else {
            date.year()
        }
    }

    /// First and last calendar day of the season in a given season-year.
    pub fn bounds(&self, season_year: i32) -> (NaiveDate, NaiveDate) {
        let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid season bound");
        match self {
            Season::Son => (ymd(season_year, 9, 1), ymd(season_year, 11, 30)),
            Season::Djf => {
                let end = ymd(season_year, 3, 1).pred_opt().expect("valid date");
                (ymd(season_year - 1, 12, 1), end)
            }
            Season::Mam => (ymd(season_year, 3, 1), ymd(season_year, 5, 31)),
            Season::Jja => (ymd(season_year, 6, 1), ymd(season_year, 8, 31)),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Season::Son => "SON",
            Season::Djf => "DJF",
            Season::Mam => "MAM",
            Season::Jja => "JJA",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SON" => Ok(Season::Son),
            "DJF" => Ok(Season::Djf),
            "MAM" => Ok(Season::Mam),
            "JJA" => Ok(Season::Jja),
            other => Err(Error::InvalidArgument(format!("unknown season `{other}`"))),
        }
    }
}

/// Static description of a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteInfo {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<f64>,
}

/// One grid point's daily precipitation. Missing days are stored as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub info: SiteInfo,
    dates: Vec<NaiveDate>,
    values: Vec<f32>,
    missing_flag: bool,
}

impl SiteSeries {
    /// Dates must be strictly increasing; values non-negative or `NaN` (missing).
    pub fn new(info: SiteInfo, dates: Vec<NaiveDate>, values: Vec<f32>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "site {}: {} dates but {} values",
                info.site_id,
                dates.len(),
                values.len()
            )));
        }
        if let Some(row) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneDates { site: info.site_id, row: row + 1 });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_nan() && !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "site {}: precipitation must be finite and non-negative, got {bad}",
                info.site_id
            )));
        }
        let missing_flag = excessive_missing(&dates, &values);
        Ok(SiteSeries { info, dates, values, missing_flag })
    }

    pub fn site_id(&self) -> &str {
        &self.info.site_id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Raw values, `NaN` marking missing days.
    pub fn raw_values(&self) -> &[f32] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Option<f32> {
        let v = self.values[i];
        (!v.is_nan()).then_some(v)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// True when some season-year inside the record misses more than 20% of its days.
    pub fn has_excessive_missing(&self) -> bool {
        self.missing_flag
    }
}

fn excessive_missing(dates: &[NaiveDate], values: &[f32]) -> bool {
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return false;
    };
    let mut observed: std::collections::HashMap<(Season, i32), i64> = Default::default();
    for (d, v) in dates.iter().zip(values) {
        if !v.is_nan() {
            *observed.entry((Season::of_month(d.month()), Season::season_year(*d))).or_default() += 1;
        }
    }
    for season in Season::ALL {
        for sy in Season::season_year(first)..=Season::season_year(last) {
            let (start, end) = season.bounds(sy);
            let start = start.max(first);
            let end = end.min(last);
            if start > end {
                continue;
            }
            let expected = (end - start).num_days() + 1;
            let seen = observed.get(&(season, sy)).copied().unwrap_or(0);
            if (expected - seen) as f64 > MAX_MISSING_FRACTION * expected as f64 {
                return true;
            }
        }
    }
    false
}

/// Wet-day positions split by their rank in the chronological wet-day sequence:
/// FIT ≡ 0, TEST ≡ 1, SPARE ≡ 2 (mod 3).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub fit: Vec<usize>,
    pub test: Vec<usize>,
    pub spare: Vec<usize>,
}

impl Split {
    pub fn by_position(n: usize) -> Self {
        let mut split = Split::default();
        for i in 0..n {
            match i % 3 {
                0 => split.fit.push(i),
                1 => split.test.push(i),
                _ => split.spare.push(i),
            }
        }
        split
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Ok,
    /// Fewer than [`MIN_FIT_VALUES`] FIT values or no complete season.
    InsufficientData,
}

/// Wet-day values of one site in one season.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalWetSample {
    pub site_id: String,
    pub season: Season,
    pub threshold: f64,
    /// Values strictly above the threshold, chronological.
    pub wet_values: Vec<f64>,
    pub wet_dates: Vec<NaiveDate>,
    /// Mean wet days per season over complete season-years, corrected for missing days.
    pub n_wds_mean: f64,
    pub complete_seasons: usize,
    pub split: Split,
    pub status: SampleStatus,
}

impl SeasonalWetSample {
    fn pick(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.wet_values[i]).collect()
    }

    pub fn fit_values(&self) -> Vec<f64> {
        self.pick(&self.split.fit)
    }

    pub fn test_values(&self) -> Vec<f64> {
        self.pick(&self.split.test)
    }

    pub fn spare_values(&self) -> Vec<f64> {
        self.pick(&self.split.spare)
    }

    pub fn is_usable(&self) -> bool {
        self.status == SampleStatus::Ok
    }
}

/// Extracts the in-season wet days (`value > threshold`) of a site.
pub fn seasonal_wet_sample(series: &SiteSeries, season: Season, threshold: f64) -> Result<SeasonalWetSample> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    let mut wet_values = Vec::new();
    let mut wet_dates = Vec::new();
    for (i, &d) in series.dates.iter().enumerate() {
        if !season.contains(d) {
            continue;
        }
        if let Some(v) = series.value(i) {
            let v = v as f64;
            if v > threshold {
                wet_values.push(v);
                wet_dates.push(d);
            }
        }
    }

    // Complete season-years only; missing days scale the count back up.
    let (mut calendar_days, mut observed_days, mut wet_days, mut complete) = (0i64, 0i64, 0i64, 0usize);
    if let (Some(&first), Some(&last)) = (series.dates.first(), series.dates.last()) {
        for sy in Season::season_year(first)..=Season::season_year(last) {
            let (start, end) = season.bounds(sy);
            if start < first || end > last {
                continue;
            }
            complete += 1;
            calendar_days += (end - start).num_days() + 1;
            let lo = series.dates.partition_point(|d| *d < start);
            let hi = series.dates.partition_point(|d| *d <= end);
            for i in lo..hi {
                if let Some(v) = series.value(i) {
                    observed_days += 1;
                    if v as f64 > threshold {
                        wet_days += 1;
                    }
                }
            }
        }
    }
    let n_wds_mean = if complete > 0 && observed_days > 0 {
        wet_days as f64 / observed_days as f64 * (calendar_days as f64 / complete as f64)
    } else {
        f64::NAN
    };

    let split = Split::by_position(wet_values.len());
    let status = if split.fit.len() >= MIN_FIT_VALUES && n_wds_mean > 0.0 {
        SampleStatus::Ok
    } else {
        SampleStatus::InsufficientData
    };
    Ok(SeasonalWetSample {
        site_id: series.info.site_id.clone(),
        season,
        threshold,
        wet_values,
        wet_dates,
        n_wds_mean,
        complete_seasons: complete,
        split,
        status,
    })
}

/// Declared input layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", content = "path", rename_all = "snake_case")]
pub enum GridSource {
    /// Long CSV: `site_id,lon,lat,date,precip_mm`.
    LongCsv(PathBuf),
    /// JSON sidecar describing a row-major `f32` matrix (sites × days).
    Dense(PathBuf),
}

impl GridSource {
    /// Picks the format from the file extension (`.csv` or `.json`).
    pub fn infer(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(GridSource::LongCsv(path.to_path_buf())),
            Some("json") => Ok(GridSource::Dense(path.to_path_buf())),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer input format of {}; use a .csv (long) or .json (dense sidecar) file",
                path.display()
            ))),
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            GridSource::LongCsv(p) | GridSource::Dense(p) => p,
        }
    }
}

/// Loads every site of a grid.
pub fn load_grid(source: &GridSource) -> Result<Vec<SiteSeries>> {
    match source {
        GridSource::LongCsv(path) => read_long_csv(path),
        GridSource::Dense(path) => read_dense(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn info(id: &str) -> SiteInfo {
        SiteInfo { site_id: id.into(), lon: 7.0, lat: 46.0, elevation: None }
    }

    fn daily(start: NaiveDate, values: Vec<f32>) -> SiteSeries {
        let dates = start.iter_days().take(values.len()).collect();
        SiteSeries::new(info("s"), dates, values).unwrap()
    }

    #[test]
    fn season_membership_and_labels() {
        assert_eq!(Season::of_month(12), Season::Djf);
        assert_eq!(Season::season_year(date(2000, 12, 15)), 2001);
        assert_eq!(Season::season_year(date(2001, 1, 15)), 2001);
        assert_eq!(Season::Djf.bounds(2001), (date(2000, 12, 1), date(2001, 2, 28)));
        assert_eq!(Season::Djf.bounds(2004), (date(2003, 12, 1), date(2004, 2, 29)));
        assert_eq!("jja".parse::<Season>().unwrap(), Season::Jja);
        assert!("winter".parse::<Season>().is_err());
    }

    #[test]
    fn rejects_bad_series() {
        let d = vec![date(2000, 1, 2), date(2000, 1, 1)];
        assert!(matches!(SiteSeries::new(info("a"), d, vec![1.0, 2.0]), Err(Error::NonMonotoneDates { row: 1, .. })));
        let d = vec![date(2000, 1, 1)];
        assert!(SiteSeries::new(info("a"), d.clone(), vec![-1.0]).is_err());
        assert!(SiteSeries::new(info("a"), d, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn all_dry_series_is_insufficient() {
        let s = daily(date(2000, 1, 1), vec![0.5; 800]);
        let w = seasonal_wet_sample(&s, Season::Jja, 1.0).unwrap();
        assert!(w.wet_values.is_empty());
        assert_eq!(w.status, SampleStatus::InsufficientData);
    }

    #[test]
    fn mod_three_split() {
        let split = Split::by_position(9);
        assert_eq!(split.fit, vec![0, 3, 6]);
        assert_eq!(split.test, vec![1, 4, 7]);
        assert_eq!(split.spare, vec![2, 5, 8]);
    }

    #[test]
    fn threshold_must_be_positive() {
        let s = daily(date(2000, 1, 1), vec![2.0; 10]);
        assert!(seasonal_wet_sample(&s, Season::Djf, 0.0).is_err());
    }

    #[test]
    fn wet_days_are_strictly_above_threshold() {
        let s = daily(date(2001, 6, 1), vec![1.0, 1.5, 0.0, 3.0, 1.0]);
        let w = seasonal_wet_sample(&s, Season::Jja, 1.0).unwrap();
        assert_eq!(w.wet_values, vec![1.5, 3.0]);
        assert_eq!(w.wet_dates, vec![date(2001, 6, 2), date(2001, 6, 4)]);
    }

    #[test]
    fn n_wds_uses_complete_seasons_and_corrects_for_missing() {
        // Two full years; every JJA day wet except a missing week in 2001.
        let start = date(2000, 1, 1);
        let dates: Vec<NaiveDate> = start.iter_days().take(731).collect();
        let values: Vec<f32> = dates
            .iter()
            .map(|d| {
                if d.year() == 2001 && d.month() == 7 && d.day() <= 7 {
                    f32::NAN
                } else if Season::Jja.contains(*d) {
                    5.0
                } else {
                    0.0
                }
            })
            .collect();
        let s = SiteSeries::new(info("x"), dates, values).unwrap();
        assert!(!s.has_excessive_missing());
        let w = seasonal_wet_sample(&s, Season::Jja, 1.0).unwrap();
        assert_eq!(w.complete_seasons, 2);
        assert!((w.n_wds_mean - 92.0).abs() < 1e-12);
        // DJF: season-year 2000 starts 1999-12-01 (outside), 2001 is complete,
        // 2002 starts in the record but ends outside.
        let w = seasonal_wet_sample(&s, Season::Djf, 1.0).unwrap();
        assert_eq!(w.complete_seasons, 1);
    }

    #[test]
    fn excessive_missing_is_flagged() {
        let mut values = vec![2.0f32; 400];
        for v in values.iter_mut().skip(160).take(30) {
            *v = f32::NAN;
        }
        let s = daily(date(2000, 1, 1), values);
        assert!(s.has_excessive_missing());
        assert_eq!(s.missing_count(), 30);
    }

    #[test]
    fn idempotent_on_own_output() {
        let values: Vec<f32> = (0..1000).map(|i| ((i * 37) % 11) as f32 * 0.7).collect();
        let s = daily(date(1990, 3, 1), values);
        let w = seasonal_wet_sample(&s, Season::Mam, 1.0).unwrap();
        let again_series =
            SiteSeries::new(info("s"), w.wet_dates.clone(), w.wet_values.iter().map(|&v| v as f32).collect()).unwrap();
        let again = seasonal_wet_sample(&again_series, Season::Mam, 1.0).unwrap();
        assert_eq!(again.wet_values, w.wet_values);
        assert_eq!(again.wet_dates, w.wet_dates);
        assert_eq!(again.split, w.split);
    }

    #[test]
    fn infer_format() {
        assert!(matches!(GridSource::infer("a/b.csv").unwrap(), GridSource::LongCsv(_)));
        assert!(matches!(GridSource::infer("grid.json").unwrap(), GridSource::Dense(_)));
        assert!(GridSource::infer("grid.nc").is_err());
    }
}
