//! Event and region CSV files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{num, write_atomic};
use crate::error::{Error, Result};
use crate::model::{Event, SpatialPoint, StudyRegion};

/// Largest fraction of malformed rows tolerated before a file is rejected.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// Maps timestamps to 1-based periods of fixed width starting at `epoch`.
///
/// A timestamp exactly on a bin boundary belongs to the later bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Binning {
    /// ISO 8601 local time of the start of period 1.
    pub epoch: String,
    pub width_minutes: u32,
}

impl Default for Binning {
    fn default() -> Self {
        Self { epoch: "2000-01-01T00:00:00".into(), width_minutes: 120 }
    }
}

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

impl Binning {
    pub fn validate(&self) -> Result<()> {
        if self.width_minutes == 0 {
            return Err(Error::Config("bin width must be positive".into()));
        }
        self.epoch_time().map(|_| ())
    }

    fn epoch_time(&self) -> Result<NaiveDateTime> {
        parse_time(&self.epoch).ok_or_else(|| Error::Config(format!("unparseable epoch {:?}", self.epoch)))
    }

    /// Period of `timestamp`, or `None` before the epoch.
    pub fn period(&self, timestamp: &str) -> Result<Option<usize>> {
        let t = parse_time(timestamp).ok_or_else(|| Error::Input(format!("unparseable timestamp {timestamp:?}")))?;
        let secs = (t - self.epoch_time()?).num_seconds();
        if secs < 0 {
            return Ok(None);
        }
        Ok(Some((secs / (60 * self.width_minutes as i64)) as usize + 1))
    }
}

/// A row that could not be turned into an event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

/// Parsed events with the rows that were rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub events: Vec<Event>,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TimeColumn {
    Period,
    Timestamp,
}

fn parse_row(rec: &csv::StringRecord, kind: TimeColumn, binning: &Binning) -> std::result::Result<Event, String> {
    if rec.len() != 3 {
        return Err(format!("expected 3 fields, found {}", rec.len()));
    }
    let coord = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = rec[i].trim().parse().map_err(|_| format!("non-numeric {name} {:?}", &rec[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {name}"))
        }
    };
    let t = match kind {
        TimeColumn::Period => {
            let t: usize = rec[0].trim().parse().map_err(|_| format!("invalid period {:?}", &rec[0]))?;
            if t == 0 {
                return Err("periods are 1-based".into());
            }
            t
        }
        TimeColumn::Timestamp => binning
            .period(&rec[0])
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("timestamp {:?} precedes the epoch", &rec[0]))?,
    };
    Ok(Event::new(t, coord(1, "x")?, coord(2, "y")?))
}

/// Reads `period,x_km,y_km` or `timestamp_iso8601,x_km,y_km` rows, choosing
/// the shape from the header.
pub fn parse_events<R: Read>(reader: R, binning: &Binning) -> Result<EventTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(Error::Input(format!("cannot read event header: {e}"))),
    };
    let mut table = EventTable::default();
    if headers.is_empty() {
        table.warnings.push("empty event file".into());
        return Ok(table);
    }
    let kind = match headers.get(0) {
        Some("period") => TimeColumn::Period,
        Some("timestamp_iso8601") | Some("timestamp") => TimeColumn::Timestamp,
        other => return Err(Error::Input(format!("unrecognized event header {other:?}"))),
    };
    if headers.get(1) != Some("x_km") || headers.get(2) != Some("y_km") || headers.len() != 3 {
        return Err(Error::Input(format!("event header must end with x_km,y_km, found {headers:?}")));
    }
    if kind == TimeColumn::Timestamp {
        binning.validate()?;
    }
    let mut rows = 0u64;
    for rec in rdr.records() {
        rows += 1;
        let line = rows + 1;
        match rec {
            Ok(rec) => match parse_row(&rec, kind, binning) {
                Ok(e) => table.events.push(e),
                Err(reason) => table.rejected.push(RejectedRow { line: rec.position().map_or(line, |p| p.line()), reason }),
            },
            Err(e) => table.rejected.push(RejectedRow { line, reason: e.to_string() }),
        }
    }
    if rows == 0 {
        table.warnings.push("event file has no rows".into());
    }
    if table.rejected.len() as f64 > MAX_MALFORMED_FRACTION * rows as f64 {
        let list: Vec<String> = table.rejected.iter().take(20).map(|r| format!("line {}: {}", r.line, r.reason)).collect();
        return Err(Error::Input(format!(
            "{} of {rows} rows malformed (limit 1%): {}",
            table.rejected.len(),
            list.join("; ")
        )));
    }
    Ok(table)
}

pub fn read_events(path: &Path, binning: &Binning) -> Result<EventTable> {
    let f = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_events(f, binning)
}

/// Pre-binned event CSV.
pub fn events_csv(events: &[Event]) -> Vec<u8> {
    let mut out = b"period,x_km,y_km\n".to_vec();
    for e in events {
        writeln!(out, "{},{},{}", e.t, num(e.location.x), num(e.location.y)).unwrap();
    }
    out
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    write_atomic(path, &events_csv(events))
}

/// Vertices from an `x_km,y_km` CSV; the ring is closed implicitly.
pub fn parse_points<R: Read>(reader: R) -> Result<Vec<SpatialPoint<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("cannot read header: {e}")))?.clone();
    if headers.len() != 2 || &headers[0] != "x_km" || &headers[1] != "y_km" {
        return Err(Error::Input(format!("expected header x_km,y_km, found {headers:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        let parse = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Input(format!("line {}: invalid coordinate {:?}", i + 2, &rec[j]))
            })
        };
        out.push(SpatialPoint::new(parse(0)?, parse(1)?));
    }
    Ok(out)
}

pub fn read_points(path: &Path) -> Result<Vec<SpatialPoint<f64>>> {
    let f = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_points(f)
}

pub fn read_region(path: &Path, grid_resolution: f64) -> Result<StudyRegion<f64>> {
    StudyRegion::new(read_points(path)?, grid_resolution)
}

pub fn points_csv(points: &[SpatialPoint<f64>]) -> Vec<u8> {
    let mut out = b"x_km,y_km\n".to_vec();
    for p in points {
        writeln!(out, "{},{}", num(p.x), num(p.y)).unwrap();
    }
    out
}
