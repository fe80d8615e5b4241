//! Synthetic daily precipitation grids with known regions and parameters.
//!
//! Regions are longitude bands. Within a region every site shares `(κ, ξ)` and
//! draws its own `σ` uniformly from the region's range, so sites differ only
//! by scale. Each day is wet with the region's probability; wet amounts
//! follow the EGPD truncated at the threshold and dry days are zero.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::egpd::Egpd;
use crate::error::{Error, Result};
use crate::ingest::{DenseWriter, LongCsvWriter, SiteInfo, SiteSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub sites: usize,
    pub kappa: f64,
    pub xi: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Probability that a day is wet (above the threshold).
    pub wet_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthFormat {
    LongCsv,
    Dense,
}

fn default_threshold() -> f64 {
    1.0
}

fn default_start_year() -> i32 {
    1980
}

fn default_band_width() -> f64 {
    5.0
}

fn default_lat() -> [f64; 2] {
    [40.0, 50.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub regions: Vec<RegionSpec>,
    /// Whole calendar years generated, starting on 1 January.
    pub years: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Longitude width of each region's band (degrees).
    #[serde(default = "default_band_width")]
    pub band_width: f64,
    #[serde(default = "default_lat")]
    pub lat_range: [f64; 2],
    /// Elevation drawn uniformly from this range when given (m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_range: Option<[f64; 2]>,
    /// Share of days blanked out as missing.
    #[serde(default)]
    pub missing_fraction: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.regions.is_empty() {
            return bad("at least one region is required".into());
        }
        if self.years == 0 {
            return bad("years must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if !(self.band_width > 0.0) || !(self.lat_range[0] <= self.lat_range[1]) {
            return bad("band_width must be positive and lat_range ordered".into());
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad(format!("missing_fraction must lie in [0, 1), got {}", self.missing_fraction));
        }
        if let Some([lo, hi]) = self.elevation_range {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad("elevation_range must be ordered and finite".into());
            }
        }
        for (r, region) in self.regions.iter().enumerate() {
            if region.sites == 0 {
                return bad(format!("region {r} has no sites"));
            }
            if !(region.sigma_min > 0.0 && region.sigma_min <= region.sigma_max && region.sigma_max.is_finite()) {
                return bad(format!("region {r}: need 0 < sigma_min ≤ sigma_max"));
            }
            if !(region.wet_fraction > 0.0 && region.wet_fraction <= 1.0) {
                return bad(format!("region {r}: wet_fraction must lie in (0, 1]"));
            }
            Egpd::new(region.kappa, region.sigma_min, region.xi)?.truncated(self.threshold)?;
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.regions.iter().map(|r| r.sites).sum()
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.start_year, 1, 1).expect("valid start year")
    }

    pub fn n_days(&self) -> usize {
        let end = NaiveDate::from_ymd_opt(self.start_year + self.years as i32, 1, 1).expect("valid end year");
        (end - self.start_date()).num_days() as usize
    }
}

/// Ground truth for one generated site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSite {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<f64>,
    pub region: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub xi: f64,
    pub wet_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub seed: u64,
    pub spec: SynthSpec,
    pub sites: Vec<TruthSite>,
}

impl TruthManifest {
    pub fn labels(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.region).collect()
    }
}

/// A planned grid: site layout, parameters and per-site seeds, drawn up front
/// from one master generator. Series are produced on demand.
#[derive(Debug, Clone)]
pub struct SynthGrid {
    pub truth: TruthManifest,
    dates: Vec<NaiveDate>,
}

impl SynthGrid {
    pub fn new(spec: SynthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut sites = Vec::with_capacity(spec.n_sites());
        for (r, region) in spec.regions.iter().enumerate() {
            let cols = (region.sites as f64).sqrt().ceil() as usize;
            let rows = region.sites.div_ceil(cols);
            for i in 0..region.sites {
                let (col, row) = (i % cols, i / cols);
                let lon = spec.band_width * (r as f64 + (col as f64 + 0.5) / cols as f64);
                let lat =
                    spec.lat_range[0] + (spec.lat_range[1] - spec.lat_range[0]) * (row as f64 + 0.5) / rows as f64;
                let sigma = if region.sigma_max > region.sigma_min {
                    master.random_range(region.sigma_min..region.sigma_max)
                } else {
                    region.sigma_min
                };
                let elevation =
                    spec.elevation_range.map(|[lo, hi]| if hi > lo { master.random_range(lo..hi) } else { lo });
                sites.push(TruthSite {
                    site_id: format!("s{:06}", sites.len()),
                    lon,
                    lat,
                    elevation,
                    region: r,
                    kappa: region.kappa,
                    sigma,
                    xi: region.xi,
                    wet_fraction: region.wet_fraction,
                    seed: master.random(),
                });
            }
        }
        let dates = spec.start_date().iter_days().take(spec.n_days()).collect();
        Ok(SynthGrid { truth: TruthManifest { seed, spec, sites }, dates })
    }

    pub fn len(&self) -> usize {
        self.truth.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.sites.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Daily series of site `i`; depends only on the master seed and `i`.
    pub fn site(&self, i: usize) -> Result<SiteSeries> {
        let truth = &self.truth.sites[i];
        let spec = &self.truth.spec;
        let dist = Egpd::new(truth.kappa, truth.sigma, truth.xi)?.truncated(spec.threshold)?;
        let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
        let values: Vec<f32> = (0..self.dates.len())
            .map(|_| {
                let missing = spec.missing_fraction > 0.0 && rng.random::<f64>() < spec.missing_fraction;
                let wet = rng.random::<f64>() < truth.wet_fraction;
                let amount = if wet {
                    // Rounding to f32 must not pull a wet value onto the threshold.
                    let z = dist.sample(&mut rng) as f32;
                    if (z as f64) > spec.threshold {
                        z
                    } else {
                        next_up(spec.threshold as f32)
                    }
                } else {
                    0.0
                };
                if missing {
                    f32::NAN
                } else {
                    amount
                }
            })
            .collect();
        let info =
            SiteInfo { site_id: truth.site_id.clone(), lon: truth.lon, lat: truth.lat, elevation: truth.elevation };
        SiteSeries::new(info, self.dates.clone(), values)
    }

    /// Writes the grid and `truth.json` into `dir`; returns the input path to load.
    pub fn write(&self, dir: impl AsRef<Path>, format: SynthFormat) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = match format {
            SynthFormat::LongCsv => {
                let path = dir.join("grid.csv");
                let mut writer = LongCsvWriter::with_columns(&path, self.truth.spec.elevation_range.is_some())?;
                for i in 0..self.len() {
                    writer.push(&self.site(i)?)?;
                }
                writer.finish()?;
                path
            }
            SynthFormat::Dense => {
                let path = dir.join("grid.json");
                let mut writer =
                    DenseWriter::create(&path, "grid.f32", self.truth.spec.start_date(), self.dates.len())?;
                for i in 0..self.len() {
                    writer.push(&self.site(i)?)?;
                }
                writer.finish()?;
                path
            }
        };
        let truth_path = dir.join("truth.json");
        let json = serde_json::to_vec_pretty(&self.truth).map_err(|e| Error::json(&truth_path, e))?;
        std::fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))?;
        Ok(path)
    }
}

fn next_up(x: f32) -> f32 {
    f32::from_bits(x.to_bits() + 1)
}
