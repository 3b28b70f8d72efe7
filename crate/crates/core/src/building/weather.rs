//! Weather series: CSV ingestion, validation and linear interpolation.
//!
//! Timestamps are ISO-8601 strings. Times without an offset are read as UTC
//! and taken to be local solar time by the solar routines.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    /// Seconds since the Unix epoch.
    pub time: f64,
    pub dry_bulb: f64,
    pub sky_temperature: f64,
    pub relative_humidity: f64,
    pub global_horizontal: f64,
    pub diffuse_horizontal: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeatherSeries {
    records: Vec<WeatherRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    timestamp: String,
    dry_bulb: f64,
    sky_temperature: f64,
    relative_humidity: f64,
    global_horizontal: f64,
    diffuse_horizontal: f64,
    wind_speed: f64,
    wind_direction: f64,
}

pub fn parse_timestamp(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp() as f64 + dt.nanosecond() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = dt.and_utc();
            return Ok(utc.timestamp() as f64 + utc.nanosecond() as f64 * 1e-9);
        }
    }
    Err(Error::Parse(format!("unrecognised timestamp {s:?}")))
}

pub fn format_timestamp(t: f64) -> String {
    let secs = t.floor() as i64;
    let nanos = ((t - secs as f64) * 1e9).round() as u32;
    match DateTime::from_timestamp(secs, nanos.min(999_999_999)) {
        Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => format!("{t}"),
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

fn lerp_angle(a: f64, b: f64, w: f64) -> f64 {
    let mut d = (b - a) % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    (a + d * w).rem_euclid(360.0)
}

impl WeatherSeries {
    pub fn new(records: Vec<WeatherRecord>) -> Result<Self> {
        let s = Self { records };
        s.validate()?;
        Ok(s)
    }

    pub fn records(&self) -> &[WeatherRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.records.first().map(|r| r.time).unwrap_or(f64::NAN)
    }

    pub fn end(&self) -> f64 {
        self.records.last().map(|r| r.time).unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Validation("weather series is empty".into()));
        }
        for w in self.records.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::Validation(format!(
                    "weather timestamps must increase strictly (at {})",
                    format_timestamp(w[1].time)
                )));
            }
        }
        for r in &self.records {
            if r.global_horizontal < 0.0 || r.diffuse_horizontal < 0.0 {
                return Err(Error::Validation(format!("negative radiation at {}", format_timestamp(r.time))));
            }
            if !(0.0..=100.0).contains(&r.relative_humidity) {
                return Err(Error::Validation(format!(
                    "relative humidity outside [0, 100] at {}",
                    format_timestamp(r.time)
                )));
            }
            if r.wind_speed < 0.0 {
                return Err(Error::Validation(format!("negative wind speed at {}", format_timestamp(r.time))));
            }
        }
        Ok(())
    }

    /// Linear interpolation between the records bracketing `t`.
    pub fn at(&self, t: f64) -> Result<WeatherRecord> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::Range { t, start, end });
        }
        let k = self.records.partition_point(|r| r.time <= t);
        if k == self.records.len() {
            return Ok(self.records[k - 1]);
        }
        let (a, b) = (&self.records[k - 1], &self.records[k]);
        let w = (t - a.time) / (b.time - a.time);
        Ok(WeatherRecord {
            time: t,
            dry_bulb: lerp(a.dry_bulb, b.dry_bulb, w),
            sky_temperature: lerp(a.sky_temperature, b.sky_temperature, w),
            relative_humidity: lerp(a.relative_humidity, b.relative_humidity, w),
            global_horizontal: lerp(a.global_horizontal, b.global_horizontal, w),
            diffuse_horizontal: lerp(a.diffuse_horizontal, b.diffuse_horizontal, w),
            wind_speed: lerp(a.wind_speed, b.wind_speed, w),
            wind_direction: lerp_angle(a.wind_direction, b.wind_direction, w),
        })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row?;
            records.push(WeatherRecord {
                time: parse_timestamp(&row.timestamp)?,
                dry_bulb: row.dry_bulb,
                sky_temperature: row.sky_temperature,
                relative_humidity: row.relative_humidity,
                global_horizontal: row.global_horizontal,
                diffuse_horizontal: row.diffuse_horizontal,
                wind_speed: row.wind_speed,
                wind_direction: row.wind_direction,
            });
        }
        Self::new(records)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(CsvRow {
                timestamp: format_timestamp(r.time),
                dry_bulb: r.dry_bulb,
                sky_temperature: r.sky_temperature,
                relative_humidity: r.relative_humidity,
                global_horizontal: r.global_horizontal,
                diffuse_horizontal: r.diffuse_horizontal,
                wind_speed: r.wind_speed,
                wind_direction: r.wind_direction,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
