use std::io::{Read, Write};
use std::path::Path;

use super::{ExtractionError, LaneChangeEvent};
use crate::ingest::{LaneId, VehicleId};

pub const EVENT_HEADER: [&str; 12] = [
    "recording_id",
    "vehicle_id",
    "vehicle_class",
    "direction",
    "start_frame",
    "end_frame",
    "duration",
    "speed",
    "thw",
    "dhw",
    "origin_lane",
    "target_lane",
];

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExtractionError + '_ {
    move |source| ExtractionError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_io(e: csv::Error) -> ExtractionError {
    ExtractionError::Io {
        path: "events".to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_events(w: impl Write, events: &[LaneChangeEvent]) -> Result<(), ExtractionError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(EVENT_HEADER).map_err(csv_io)?;
    for e in events {
        wtr.write_record([
            e.recording_id.clone(),
            e.vehicle_id.to_string(),
            e.vehicle_class.to_string(),
            e.direction.to_string(),
            e.start_frame.to_string(),
            e.end_frame.to_string(),
            e.duration.to_string(),
            e.speed_at_start.to_string(),
            opt(e.time_headway_at_start),
            opt(e.distance_headway_at_start),
            e.origin_lane.to_string(),
            e.target_lane.to_string(),
        ])
        .map_err(csv_io)?;
    }
    wtr.flush().map_err(|source| ExtractionError::Io {
        path: "events".to_string(),
        source,
    })
}

/// Columns are located by name, so extra columns and reordering are
/// tolerated; a missing column is a schema mismatch.
pub fn read_events(r: impl Read) -> Result<Vec<LaneChangeEvent>, ExtractionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| ExtractionError::SchemaMismatch(e.to_string()))?
        .clone();
    let mut idx = [0usize; 12];
    let mut missing = Vec::new();
    for (slot, name) in idx.iter_mut().zip(EVENT_HEADER) {
        match headers.iter().position(|h| h == name) {
            Some(i) => *slot = i,
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(ExtractionError::SchemaMismatch(format!(
            "missing column(s) {}",
            missing.join(", ")
        )));
    }

    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| ExtractionError::SchemaMismatch(e.to_string()))?;
        let row = i + 1;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let bad = |k: usize, reason: String| ExtractionError::MalformedRow {
            row,
            column: EVENT_HEADER[k].to_string(),
            reason,
        };
        fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| format!("{s:?}: {e}"))
        }
        let num = |k: usize| -> Result<f64, ExtractionError> {
            let v: f64 = parse(field(k)).map_err(|e| bad(k, e))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(k, "non-finite value".into()))
            }
        };
        let opt_num = |k: usize| -> Result<Option<f64>, ExtractionError> {
            if field(k).is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let event = LaneChangeEvent {
            recording_id: field(0).to_string(),
            vehicle_id: VehicleId(parse(field(1)).map_err(|e| bad(1, e))?),
            vehicle_class: field(2).parse().map_err(|e| bad(2, e))?,
            direction: field(3).parse().map_err(|e| bad(3, e))?,
            start_frame: parse(field(4)).map_err(|e| bad(4, e))?,
            end_frame: parse(field(5)).map_err(|e| bad(5, e))?,
            duration: num(6)?,
            speed_at_start: num(7)?,
            time_headway_at_start: opt_num(8)?,
            distance_headway_at_start: opt_num(9)?,
            origin_lane: LaneId(parse(field(10)).map_err(|e| bad(10, e))?),
            target_lane: LaneId(parse(field(11)).map_err(|e| bad(11, e))?),
        };
        if event.duration <= 0.0 {
            return Err(bad(
                6,
                format!("duration must be positive, got {}", event.duration),
            ));
        }
        out.push(event);
    }
    Ok(out)
}

pub fn export_events(events: &[LaneChangeEvent], path: &Path) -> Result<(), ExtractionError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_events(std::io::BufWriter::new(file), events)
}

pub fn import_events(path: &Path) -> Result<Vec<LaneChangeEvent>, ExtractionError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_events(std::io::BufReader::new(file))
}
