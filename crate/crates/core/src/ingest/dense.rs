//! Dense layout: a JSON sidecar with the site table, start date and day count,
//! plus a row-major little-endian `f32` matrix (sites × days). `NaN` marks a
//! missing day.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{SiteInfo, SiteSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarSite {
    pub site_id: String,
    pub lon: f64,
    pub lat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation: Option<f64>,
}

impl From<&SidecarSite> for SiteInfo {
    fn from(s: &SidecarSite) -> Self {
        SiteInfo { site_id: s.site_id.clone(), lon: s.lon, lat: s.lat, elevation: s.elevation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSidecar {
    pub start_date: NaiveDate,
    pub n_days: usize,
    /// Matrix file, relative to the sidecar's directory unless absolute.
    pub data: PathBuf,
    pub sites: Vec<SidecarSite>,
}

impl DenseSidecar {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let sidecar: DenseSidecar = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path, e))?;
        if sidecar.n_days == 0 {
            return Err(Error::schema(path, 0, "`n_days` must be positive"));
        }
        Ok(sidecar)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.start_date.iter_days().take(self.n_days).collect()
    }

    fn data_path(&self, sidecar_path: &Path) -> PathBuf {
        if self.data.is_absolute() {
            self.data.clone()
        } else {
            sidecar_path.parent().unwrap_or(Path::new(".")).join(&self.data)
        }
    }

    /// Streams sites one row at a time, so large grids never sit in memory whole.
    pub fn stream(&self, sidecar_path: impl AsRef<Path>) -> Result<DenseRows<'_>> {
        let data_path = self.data_path(sidecar_path.as_ref());
        let file = File::open(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let expected = (self.sites.len() * self.n_days * 4) as u64;
        let actual = file.metadata().map_err(|e| Error::io(&data_path, e))?.len();
        if actual != expected {
            return Err(Error::schema(
                &data_path,
                0,
                format!(
                    "matrix holds {actual} bytes, expected {expected} ({} sites × {} days × 4)",
                    self.sites.len(),
                    self.n_days
                ),
            ));
        }
        Ok(DenseRows {
            sidecar: self,
            reader: BufReader::with_capacity(1 << 20, file),
            dates: self.dates(),
            next: 0,
            buffer: vec![0u8; self.n_days * 4],
            data_path,
        })
    }
}

pub struct DenseRows<'a> {
    sidecar: &'a DenseSidecar,
    reader: BufReader<File>,
    dates: Vec<NaiveDate>,
    next: usize,
    buffer: Vec<u8>,
    data_path: PathBuf,
}

impl Iterator for DenseRows<'_> {
    type Item = Result<SiteSeries>;

    fn next(&mut self) -> Option<Self::Item> {
        let site = self.sidecar.sites.get(self.next)?;
        self.next += 1;
        if let Err(e) = self.reader.read_exact(&mut self.buffer) {
            return Some(Err(Error::io(&self.data_path, e)));
        }
        let values: Vec<f32> =
            self.buffer.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        if let Some(day) = values.iter().position(|v| !v.is_nan() && !(v.is_finite() && *v >= 0.0)) {
            return Some(Err(Error::schema(
                &self.data_path,
                self.next,
                format!("site `{}`, day {day}: negative or non-finite value {}", site.site_id, values[day]),
            )));
        }
        Some(SiteSeries::new(site.into(), self.dates.clone(), values))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.sidecar.sites.len() - self.next;
        (left, Some(left))
    }
}

/// Reads every site of a dense grid.
pub fn read_dense(sidecar_path: impl AsRef<Path>) -> Result<Vec<SiteSeries>> {
    let path = sidecar_path.as_ref();
    let sidecar = DenseSidecar::read(path)?;
    sidecar.stream(path)?.collect()
}

/// Streaming writer for the dense layout. Sites must share one daily calendar.
pub struct DenseWriter {
    sidecar: DenseSidecar,
    sidecar_path: PathBuf,
    data_path: PathBuf,
    writer: BufWriter<File>,
}

impl DenseWriter {
    /// `data_name` is stored relative to the sidecar's directory.
    pub fn create(
        sidecar_path: impl AsRef<Path>,
        data_name: &str,
        start_date: NaiveDate,
        n_days: usize,
    ) -> Result<Self> {
        let sidecar_path = sidecar_path.as_ref().to_path_buf();
        let data_path = sidecar_path.parent().unwrap_or(Path::new(".")).join(data_name);
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        Ok(DenseWriter {
            sidecar: DenseSidecar { start_date, n_days, data: PathBuf::from(data_name), sites: Vec::new() },
            sidecar_path,
            data_path,
            writer: BufWriter::with_capacity(1 << 20, file),
        })
    }

    pub fn push(&mut self, site: &SiteSeries) -> Result<()> {
        if site.len() != self.sidecar.n_days || site.dates().first() != Some(&self.sidecar.start_date) {
            return Err(Error::InvalidArgument(format!(
                "site {} does not match the grid calendar ({} days from {})",
                site.site_id(),
                self.sidecar.n_days,
                self.sidecar.start_date
            )));
        }
        let mut bytes = Vec::with_capacity(site.len() * 4);
        for v in site.raw_values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.writer.write_all(&bytes).map_err(|e| Error::io(&self.data_path, e))?;
        self.sidecar.sites.push(SidecarSite {
            site_id: site.info.site_id.clone(),
            lon: site.info.lon,
            lat: site.info.lat,
            elevation: site.info.elevation,
        });
        Ok(())
    }

    pub fn finish(mut self) -> Result<DenseSidecar> {
        self.writer.flush().map_err(|e| Error::io(&self.data_path, e))?;
        let json = serde_json::to_vec_pretty(&self.sidecar).map_err(|e| Error::json(&self.sidecar_path, e))?;
        std::fs::write(&self.sidecar_path, json).map_err(|e| Error::io(&self.sidecar_path, e))?;
        Ok(self.sidecar)
    }
}

/// Writes sites in the dense layout as `<sidecar>` plus `<data_name>` beside it.
pub fn write_dense(sidecar_path: impl AsRef<Path>, data_name: &str, sites: &[SiteSeries]) -> Result<DenseSidecar> {
    let first = sites.first().ok_or_else(|| Error::InvalidArgument("no sites to write".into()))?;
    let start = *first.dates().first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    let mut writer = DenseWriter::create(sidecar_path, data_name, start, first.len())?;
    for site in sites {
        writer.push(site)?;
    }
    writer.finish()
}
