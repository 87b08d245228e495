use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use log::warn;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Native frame spacing of the recordings.
pub const FRAME_MS: i64 = 100;

/// Speeds above this magnitude (m/s) are flagged as implausible.
pub const MAX_PLAUSIBLE_SPEED: f64 = 60.0;

pub const TRACK_COLUMNS: [&str; 11] = [
    "track_id",
    "frame_id",
    "timestamp_ms",
    "agent_type",
    "x",
    "y",
    "vx",
    "vy",
    "psi_rad",
    "length",
    "width",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    Car,
    Truck,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TrackRecord {
    pub track_id: u64,
    pub frame_id: u64,
    pub timestamp_ms: i64,
    pub agent_type: AgentType,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub psi_rad: f64,
    pub length: f64,
    pub width: f64,
}

/// Validated records, sorted by track and then time, with load warnings.
#[derive(Debug, Clone, Default)]
pub struct TrackTable {
    pub records: Vec<TrackRecord>,
    pub warnings: Vec<String>,
}

impl TrackTable {
    /// Lookup of the record of a track at a timestamp.
    pub fn index(&self) -> HashMap<(u64, i64), &TrackRecord> {
        self.records
            .iter()
            .map(|r| ((r.track_id, r.timestamp_ms), r))
            .collect()
    }
}

pub fn load_tracks_file(path: impl AsRef<Path>) -> Result<TrackTable> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    load_tracks(f)
}

/// Reads a comma-separated track file with a header naming [`TRACK_COLUMNS`]
/// (any order, extra columns ignored). Malformed rows fail with their line
/// number; implausible speeds and inconsistent frame numbering are warnings.
pub fn load_tracks<R: Read>(reader: R) -> Result<TrackTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in TRACK_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Data(format!("track file is missing column '{col}'")));
        }
    }
    let mut table = TrackTable::default();
    for row in rdr.records() {
        let raw = row?;
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let rec: TrackRecord = raw
            .deserialize(Some(&headers))
            .map_err(|e| Error::Data(format!("track file line {line}: {e}")))?;
        let nums = [rec.x, rec.y, rec.vx, rec.vy, rec.psi_rad, rec.length, rec.width];
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("track file line {line}: non-finite value")));
        }
        if rec.timestamp_ms % FRAME_MS != 0 {
            return Err(Error::Data(format!(
                "track file line {line}: timestamp {} is not a multiple of {FRAME_MS} ms",
                rec.timestamp_ms
            )));
        }
        if rec.vx.hypot(rec.vy) > MAX_PLAUSIBLE_SPEED {
            table.warnings.push(format!(
                "line {line}: track {} speed {:.1} m/s exceeds {MAX_PLAUSIBLE_SPEED} m/s",
                rec.track_id,
                rec.vx.hypot(rec.vy)
            ));
        }
        table.records.push(rec);
    }
    table
        .records
        .sort_by_key(|a| (a.track_id, a.timestamp_ms));
    let mut kept: Vec<TrackRecord> = Vec::with_capacity(table.records.len());
    for r in table.records.drain(..) {
        if let Some(prev) = kept.last() {
            if prev.track_id == r.track_id {
                if prev.timestamp_ms == r.timestamp_ms {
                    table.warnings.push(format!(
                        "track {} has duplicate frames at {} ms; keeping the first",
                        r.track_id, r.timestamp_ms
                    ));
                    continue;
                }
                if r.frame_id <= prev.frame_id {
                    table.warnings.push(format!(
                        "track {} frame ids are not monotone in time at {} ms",
                        r.track_id, r.timestamp_ms
                    ));
                }
            }
        }
        kept.push(r);
    }
    table.records = kept;
    for w in &table.warnings {
        warn!("{w}");
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n";

    #[test]
    fn header_only_is_empty() {
        let t = load_tracks(HEADER.as_bytes()).unwrap();
        assert!(t.records.is_empty());
    }

    #[test]
    fn one_row_is_field_exact() {
        let text = format!("{HEADER}7,3,300,car,-12.5,4.25,-3.1,0.2,3.1,4.6,1.9\n");
        let t = load_tracks(text.as_bytes()).unwrap();
        assert_eq!(
            t.records,
            vec![TrackRecord {
                track_id: 7,
                frame_id: 3,
                timestamp_ms: 300,
                agent_type: AgentType::Car,
                x: -12.5,
                y: 4.25,
                vx: -3.1,
                vy: 0.2,
                psi_rad: 3.1,
                length: 4.6,
                width: 1.9,
            }]
        );
    }

    #[test]
    fn shuffled_rows_sort_per_track() {
        let rows = [
            "2,1,100,car,0,0,-1,0,0,4,2",
            "1,2,200,car,1,0,-1,0,0,4,2",
            "1,1,100,truck,2,0,-1,0,0,9,2.5",
            "2,2,200,car,3,0,-1,0,0,4,2",
        ];
        let ordered = format!("{HEADER}{}\n{}\n{}\n{}\n", rows[2], rows[1], rows[0], rows[3]);
        let shuffled = format!("{HEADER}{}\n", rows.join("\n"));
        let a = load_tracks(ordered.as_bytes()).unwrap();
        let b = load_tracks(shuffled.as_bytes()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records[0].agent_type, AgentType::Truck);
    }

    #[test]
    fn missing_column_is_an_error() {
        let text = "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length\n";
        let err = load_tracks(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{HEADER}1,1,100,car,0,0,-1,0,0,4,2\n1,2,200,car,zero,0,-1,0,0,4,2\n");
        let err = load_tracks(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = format!("{HEADER}1,1,150,car,0,0,-1,0,0,4,2\n");
        assert!(load_tracks(text.as_bytes()).is_err());
    }

    #[test]
    fn implausible_speed_warns() {
        let text = format!("{HEADER}1,1,100,car,0,0,-70,0,0,4,2\n");
        let t = load_tracks(text.as_bytes()).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.warnings.len(), 1);
    }
}
