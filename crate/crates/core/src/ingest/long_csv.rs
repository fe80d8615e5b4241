//! Long CSV layout: one row per site and day, `site_id,lon,lat,date,precip_mm`.
//! Sites keep their order of first appearance. An empty, `NA` or `NaN`
//! precipitation field marks a missing day. An optional `elevation` column
//! (m) is read when present.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{SiteInfo, SiteSeries};
use crate::error::{Error, Result};

pub const LONG_CSV_HEADER: [&str; 5] = ["site_id", "lon", "lat", "date", "precip_mm"];

struct Pending {
    info: SiteInfo,
    dates: Vec<NaiveDate>,
    values: Vec<f32>,
    first_row: usize,
}

fn parse_f64(field: &str, name: &str, path: &Path, row: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::schema(path, row, format!("column `{name}`: cannot parse `{field}` as a number")))
}

fn parse_precip(field: &str, path: &Path, row: usize) -> Result<f32> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
        return Ok(f32::NAN);
    }
    let v: f32 =
        field.parse().map_err(|_| Error::schema(path, row, format!("column `precip_mm`: cannot parse `{field}`")))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::schema(path, row, format!("column `precip_mm`: negative or non-finite value `{field}`")));
    }
    Ok(v)
}

/// Reads a long CSV file. Row numbers in errors count the header as row 1.
pub fn read_long_csv(path: impl AsRef<Path>) -> Result<Vec<SiteSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(std::io::BufReader::new(file));

    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut column = [0usize; 5];
    for (slot, name) in column.iter_mut().zip(LONG_CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::schema(path, 1, format!("missing column `{name}`")))?;
    }
    let elevation_column = headers.iter().position(|h| h.trim() == "elevation");

    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut record = csv::StringRecord::new();
    let mut row = 1;
    while reader.read_record(&mut record).map_err(|e| Error::csv(path, e))? {
        row += 1;
        let field = |i: usize| record.get(column[i]).unwrap_or("");
        let site_id = field(0).trim();
        if site_id.is_empty() {
            return Err(Error::schema(path, row, "empty `site_id`"));
        }
        let lon = parse_f64(field(1), "lon", path, row)?;
        let lat = parse_f64(field(2), "lat", path, row)?;
        let date = NaiveDate::parse_from_str(field(3).trim(), "%Y-%m-%d")
            .map_err(|_| Error::schema(path, row, format!("column `date`: `{}` is not an ISO-8601 date", field(3))))?;
        let value = parse_precip(field(4), path, row)?;
        let elevation = match elevation_column.and_then(|c| record.get(c)).map(str::trim) {
            Some(e) if !e.is_empty() => Some(parse_f64(e, "elevation", path, row)?),
            _ => None,
        };

        let slot = match index.get(site_id) {
            Some(&i) => i,
            None => {
                index.insert(site_id.to_string(), order.len());
                order.push(Pending {
                    info: SiteInfo { site_id: site_id.to_string(), lon, lat, elevation },
                    dates: Vec::new(),
                    values: Vec::new(),
                    first_row: row,
                });
                order.len() - 1
            }
        };
        let pending = &mut order[slot];
        if pending.info.lon != lon || pending.info.lat != lat {
            return Err(Error::schema(
                path,
                row,
                format!("site `{site_id}` changes coordinates (first seen on row {})", pending.first_row),
            ));
        }
        if pending.dates.last().is_some_and(|last| date <= *last) {
            return Err(Error::NonMonotoneDates { site: site_id.to_string(), row });
        }
        pending.dates.push(date);
        pending.values.push(value);
    }

    order.into_iter().map(|p| SiteSeries::new(p.info, p.dates, p.values)).collect()
}

/// Streaming writer for the long CSV layout; missing days become empty fields.
pub struct LongCsvWriter {
    path: std::path::PathBuf,
    writer: csv::Writer<std::io::BufWriter<std::fs::File>>,
    with_elevation: bool,
}

impl LongCsvWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Self::with_columns(path, false)
    }

    /// Adds a trailing `elevation` column when `with_elevation` is set.
    pub fn with_columns(path: impl AsRef<Path>, with_elevation: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(std::io::BufWriter::with_capacity(1 << 20, file));
        let mut header = LONG_CSV_HEADER.to_vec();
        if with_elevation {
            header.push("elevation");
        }
        writer.write_record(&header).map_err(|e| Error::csv(&path, e))?;
        Ok(LongCsvWriter { path, writer, with_elevation })
    }

    pub fn push(&mut self, site: &SiteSeries) -> Result<()> {
        let lon = site.info.lon.to_string();
        let lat = site.info.lat.to_string();
        let elevation = site.info.elevation.map(|e| e.to_string()).unwrap_or_default();
        for (d, v) in site.dates().iter().zip(site.raw_values()) {
            let value = if v.is_nan() { String::new() } else { v.to_string() };
            let date = d.format("%Y-%m-%d").to_string();
            let result = if self.with_elevation {
                self.writer.write_record([site.site_id(), &lon, &lat, &date, &value, &elevation])
            } else {
                self.writer.write_record([site.site_id(), &lon, &lat, &date, &value])
            };
            result.map_err(|e| Error::csv(&self.path, e))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let path = self.path;
        self.writer.into_inner().map_err(|e| Error::io(&path, e.into_error()))?.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Writes sites in the long CSV layout.
pub fn write_long_csv(path: impl AsRef<Path>, sites: &[SiteSeries]) -> Result<()> {
    let with_elevation = sites.iter().any(|s| s.info.elevation.is_some());
    let mut writer = LongCsvWriter::with_columns(path, with_elevation)?;
    for site in sites {
        writer.push(site)?;
    }
    writer.finish()
}
