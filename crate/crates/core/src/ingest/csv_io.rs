use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{
    estimate_lane_boundaries, ColumnSpec, IngestError, LaneId, Recording, RecordingColumns,
    RecordingMeta, RecordingPaths, TrackColumns, TrackFrame, VehicleColumns, VehicleId,
    VehicleMeta,
};

/// One parsed track row before grouping. Unmapped kinematic columns are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrackRow {
    pub frame: i64,
    pub vehicle_id: VehicleId,
    pub longitudinal_position: f64,
    pub lateral_position: f64,
    pub longitudinal_velocity: Option<f64>,
    pub lateral_velocity: Option<f64>,
    pub longitudinal_acceleration: Option<f64>,
    pub lateral_acceleration: Option<f64>,
    pub lane_id: LaneId,
    pub preceding_vehicle_id: Option<VehicleId>,
    pub time_headway: Option<f64>,
    pub distance_headway: Option<f64>,
}

struct Table<'a> {
    file: &'a str,
    records: csv::StringRecordsIntoIter<Box<dyn Read + 'a>>,
    headers: csv::StringRecord,
}

struct Row<'a> {
    file: &'a str,
    index: usize,
    record: csv::StringRecord,
}

#[derive(Clone)]
struct Col {
    index: usize,
    name: String,
    scale: f64,
}

impl<'a> Table<'a> {
    fn open(reader: impl Read + 'a, file: &'a str) -> Result<Self, IngestError> {
        let reader: Box<dyn Read + 'a> = Box::new(reader);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
        Ok(Self {
            file,
            records: rdr.into_records(),
            headers,
        })
    }

    fn col(&self, spec: &ColumnSpec) -> Result<Col, IngestError> {
        self.headers
            .iter()
            .position(|h| h == spec.column)
            .map(|index| Col {
                index,
                name: spec.column.clone(),
                scale: spec.scale,
            })
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.file.to_string(),
                column: spec.column.clone(),
            })
    }

    fn opt_col(&self, spec: &Option<ColumnSpec>) -> Result<Option<Col>, IngestError> {
        spec.as_ref().map(|s| self.col(s)).transpose()
    }

    fn rows(self) -> impl Iterator<Item = Result<Row<'a>, IngestError>> {
        let file = self.file;
        self.records.enumerate().map(move |(i, r)| {
            r.map(|record| Row {
                file,
                index: i + 1,
                record,
            })
            .map_err(|e| csv_err(file, e))
        })
    }
}

fn csv_err(file: &str, e: csv::Error) -> IngestError {
    IngestError::Csv {
        file: file.to_string(),
        message: e.to_string(),
    }
}

impl Row<'_> {
    fn raw(&self, col: &Col) -> &str {
        self.record.get(col.index).unwrap_or("")
    }

    fn bad(&self, col: &Col, reason: impl Into<String>) -> IngestError {
        IngestError::MalformedRow {
            file: self.file.to_string(),
            row: self.index,
            column: col.name.clone(),
            reason: reason.into(),
        }
    }

    fn float(&self, col: &Col) -> Result<f64, IngestError> {
        let text = self.raw(col);
        let v: f64 = text
            .parse()
            .map_err(|_| self.bad(col, format!("expected a number, found {text:?}")))?;
        let v = v * col.scale;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(col, format!("non-finite value {text:?}")))
        }
    }

    fn positive(&self, col: &Col) -> Result<f64, IngestError> {
        let v = self.float(col)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(col, format!("expected a positive value, found {v}")))
        }
    }

    /// Integers may be written as `12` or `12.0`.
    fn integer(&self, col: &Col) -> Result<i64, IngestError> {
        let text = self.raw(col);
        if let Ok(v) = text.parse::<i64>() {
            return Ok(v);
        }
        match text.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
            _ => Err(self.bad(col, format!("expected an integer, found {text:?}"))),
        }
    }

    fn id(&self, col: &Col) -> Result<u64, IngestError> {
        let v = self.integer(col)?;
        u64::try_from(v).map_err(|_| self.bad(col, format!("negative identifier {v}")))
    }

    /// Headways of zero or below are the "no leader" sentinel.
    fn headway(&self, col: &Option<Col>) -> Result<Option<f64>, IngestError> {
        match col {
            None => Ok(None),
            Some(c) if self.raw(c).is_empty() => Ok(None),
            Some(c) => self.float(c).map(|v| (v > 0.0).then_some(v)),
        }
    }
}

pub fn parse_tracks(
    reader: impl Read,
    file: &str,
    cols: &TrackColumns,
) -> Result<Vec<RawTrackRow>, IngestError> {
    let table = Table::open(reader, file)?;
    let frame = table.col(&cols.frame)?;
    let id = table.col(&cols.vehicle_id)?;
    let x = table.col(&cols.longitudinal_position)?;
    let y = table.col(&cols.lateral_position)?;
    let vx = table.opt_col(&cols.longitudinal_velocity)?;
    let vy = table.opt_col(&cols.lateral_velocity)?;
    let ax = table.opt_col(&cols.longitudinal_acceleration)?;
    let ay = table.opt_col(&cols.lateral_acceleration)?;
    let lane = table.col(&cols.lane_id)?;
    let preceding = table.opt_col(&cols.preceding_vehicle_id)?;
    let thw = table.opt_col(&cols.time_headway)?;
    let dhw = table.opt_col(&cols.distance_headway)?;

    let mut out = Vec::new();
    for row in table.rows() {
        let row = row?;
        let opt = |c: &Option<Col>| c.as_ref().map(|c| row.float(c)).transpose();
        let preceding_vehicle_id = match &preceding {
            Some(c) if !row.raw(c).is_empty() => match row.id(c)? {
                0 => None,
                v => Some(VehicleId(v)),
            },
            _ => None,
        };
        out.push(RawTrackRow {
            frame: row.integer(&frame)?,
            vehicle_id: VehicleId(row.id(&id)?),
            longitudinal_position: row.float(&x)?,
            lateral_position: row.float(&y)?,
            longitudinal_velocity: opt(&vx)?,
            lateral_velocity: opt(&vy)?,
            longitudinal_acceleration: opt(&ax)?,
            lateral_acceleration: opt(&ay)?,
            lane_id: LaneId(row.id(&lane)?),
            preceding_vehicle_id,
            time_headway: row.headway(&thw)?,
            distance_headway: row.headway(&dhw)?,
        });
    }
    if out.is_empty() {
        return Err(IngestError::EmptyRecording {
            file: file.to_string(),
        });
    }
    Ok(out)
}

pub fn parse_vehicle_meta(
    reader: impl Read,
    file: &str,
    cols: &VehicleColumns,
) -> Result<Vec<VehicleMeta>, IngestError> {
    let table = Table::open(reader, file)?;
    let id = table.col(&cols.vehicle_id)?;
    let class = table.col(&cols.vehicle_class)?;
    let length = table.col(&cols.length)?;
    let width = table.col(&cols.width)?;
    let mut out = Vec::new();
    for row in table.rows() {
        let row = row?;
        let vehicle_class = row
            .raw(&class)
            .parse()
            .map_err(|e: String| row.bad(&class, e))?;
        out.push(VehicleMeta {
            vehicle_id: VehicleId(row.id(&id)?),
            vehicle_class,
            length: row.positive(&length)?,
            width: row.positive(&width)?,
        });
    }
    Ok(out)
}

/// Reads the first data row. Lane markings are `;`-separated lists; empty
/// lists are skipped.
pub fn parse_recording_meta(
    reader: impl Read,
    file: &str,
    cols: &RecordingColumns,
) -> Result<RecordingMeta, IngestError> {
    let table = Table::open(reader, file)?;
    let id = table.col(&cols.recording_id)?;
    let rate = table.col(&cols.frame_rate)?;
    let location = table.opt_col(&cols.location_id)?;
    let markings = cols
        .lane_markings
        .iter()
        .map(|s| table.col(s))
        .collect::<Result<Vec<_>, _>>()?;
    let row = table
        .rows()
        .next()
        .ok_or_else(|| IngestError::EmptyRecording {
            file: file.to_string(),
        })??;

    let mut lane_boundaries = Vec::new();
    for col in &markings {
        let mut list = Vec::new();
        for token in row
            .raw(col)
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            let v: f64 = token
                .parse()
                .map_err(|_| row.bad(col, format!("bad lane marking {token:?}")))?;
            let v = v * col.scale;
            if !v.is_finite() {
                return Err(row.bad(col, format!("non-finite lane marking {token:?}")));
            }
            list.push(v);
        }
        if !list.is_empty() {
            check_monotone(&list)?;
            lane_boundaries.push(list);
        }
    }
    Ok(RecordingMeta {
        recording_id: row.raw(&id).to_string(),
        frame_rate: row.positive(&rate)?,
        location_id: location
            .map(|c| row.raw(&c).to_string())
            .unwrap_or_default(),
        lane_boundaries,
    })
}

fn check_monotone(list: &[f64]) -> Result<(), IngestError> {
    let up = list.windows(2).all(|w| w[1] > w[0]);
    let down = list.windows(2).all(|w| w[1] < w[0]);
    if up || down {
        Ok(())
    } else {
        Err(IngestError::InvalidLaneBoundaries(format!(
            "{list:?} is not strictly monotone"
        )))
    }
}

/// Central differences in time; one-sided at the ends.
fn differentiate(frames: &[i64], values: &[f64], frame_rate: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (values[b] - values[a]) * frame_rate / (frames[b] - frames[a]) as f64
        })
        .collect()
}

/// Groups rows by vehicle, sorts by frame, fills unmapped kinematics and
/// lane boundaries, and checks cross-file consistency.
pub fn assemble_recording(
    mut meta: RecordingMeta,
    vehicle_meta: Vec<VehicleMeta>,
    rows: Vec<RawTrackRow>,
) -> Result<Recording, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::EmptyRecording {
            file: "tracks".to_string(),
        });
    }
    for list in &meta.lane_boundaries {
        check_monotone(list)?;
    }
    let mut vehicles = BTreeMap::new();
    for v in vehicle_meta {
        vehicles.insert(v.vehicle_id, v);
    }
    let mut grouped: BTreeMap<VehicleId, Vec<RawTrackRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.vehicle_id).or_default().push(row);
    }

    let fr = meta.frame_rate;
    let mut trajectories = BTreeMap::new();
    for (vehicle, mut rows) in grouped {
        if !vehicles.contains_key(&vehicle) {
            return Err(IngestError::MissingVehicleMeta { vehicle });
        }
        rows.sort_by_key(|r| r.frame);
        if let Some(w) = rows.windows(2).find(|w| w[0].frame == w[1].frame) {
            return Err(IngestError::InconsistentFrames {
                vehicle,
                frame: w[0].frame,
            });
        }
        let frames: Vec<i64> = rows.iter().map(|r| r.frame).collect();
        let fill = |given: Vec<Option<f64>>, fallback: &dyn Fn() -> Vec<f64>| -> Vec<f64> {
            if given.iter().all(Option::is_some) {
                given.into_iter().flatten().collect()
            } else {
                fallback()
            }
        };
        let xs: Vec<f64> = rows.iter().map(|r| r.longitudinal_position).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.lateral_position).collect();
        let vx = fill(
            rows.iter().map(|r| r.longitudinal_velocity).collect(),
            &|| differentiate(&frames, &xs, fr),
        );
        let vy = fill(rows.iter().map(|r| r.lateral_velocity).collect(), &|| {
            differentiate(&frames, &ys, fr)
        });
        let ax = fill(
            rows.iter().map(|r| r.longitudinal_acceleration).collect(),
            &|| differentiate(&frames, &vx, fr),
        );
        let ay = fill(
            rows.iter().map(|r| r.lateral_acceleration).collect(),
            &|| differentiate(&frames, &vy, fr),
        );
        let track = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| TrackFrame {
                frame: r.frame,
                vehicle_id: vehicle,
                longitudinal_position: r.longitudinal_position,
                lateral_position: r.lateral_position,
                longitudinal_velocity: vx[i],
                lateral_velocity: vy[i],
                longitudinal_acceleration: ax[i],
                lateral_acceleration: ay[i],
                lane_id: r.lane_id,
                preceding_vehicle_id: r.preceding_vehicle_id,
                time_headway: r.time_headway,
                distance_headway: r.distance_headway,
            })
            .collect();
        trajectories.insert(vehicle, track);
    }
    if meta.lane_boundaries.is_empty() {
        meta.lane_boundaries = estimate_lane_boundaries(&trajectories);
    }
    Ok(Recording {
        meta,
        vehicles,
        trajectories,
    })
}

/// Parses a recording from in-memory readers.
pub fn read_recording(
    tracks: impl Read,
    vehicle_meta: impl Read,
    recording_meta: impl Read,
    column_map: &super::ColumnMap,
) -> Result<Recording, IngestError> {
    let meta = parse_recording_meta(recording_meta, "recordingMeta", &column_map.recording)?;
    let vehicles = parse_vehicle_meta(vehicle_meta, "tracksMeta", &column_map.vehicles)?;
    let rows = parse_tracks(tracks, "tracks", &column_map.tracks)?;
    assemble_recording(meta, vehicles, rows)
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_string(),
        source,
    }
}

fn csv_write_err(e: csv::Error) -> IngestError {
    IngestError::Csv {
        file: "output".to_string(),
        message: e.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "0".to_string())
}

/// Writes tracks in the default (HighD) layout. Absent leaders and headways
/// are written as the `0` sentinel.
pub fn write_tracks(w: impl Write, rec: &Recording) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "frame",
        "id",
        "x",
        "y",
        "xVelocity",
        "yVelocity",
        "xAcceleration",
        "yAcceleration",
        "laneId",
        "precedingId",
        "thw",
        "dhw",
    ])
    .map_err(csv_write_err)?;
    for f in rec.trajectories.values().flatten() {
        wtr.write_record([
            f.frame.to_string(),
            f.vehicle_id.to_string(),
            f.longitudinal_position.to_string(),
            f.lateral_position.to_string(),
            f.longitudinal_velocity.to_string(),
            f.lateral_velocity.to_string(),
            f.longitudinal_acceleration.to_string(),
            f.lateral_acceleration.to_string(),
            f.lane_id.to_string(),
            f.preceding_vehicle_id.map_or(0, |v| v.0).to_string(),
            opt(f.time_headway),
            opt(f.distance_headway),
        ])
        .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(io_err("output"))
}

pub fn write_vehicle_meta(w: impl Write, rec: &Recording) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "width", "height", "class"])
        .map_err(csv_write_err)?;
    for v in rec.vehicles.values() {
        wtr.write_record([
            v.vehicle_id.to_string(),
            v.length.to_string(),
            v.width.to_string(),
            v.vehicle_class.to_string(),
        ])
        .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(io_err("output"))
}

/// At most two marking lists fit the default layout (upper, lower).
pub fn write_recording_meta(w: impl Write, meta: &RecordingMeta) -> Result<(), IngestError> {
    if meta.lane_boundaries.len() > 2 {
        return Err(IngestError::InvalidLaneBoundaries(format!(
            "{} marking lists; the default layout holds two",
            meta.lane_boundaries.len()
        )));
    }
    let join = |i: usize| {
        meta.lane_boundaries
            .get(i)
            .map(|l| l.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
            .unwrap_or_default()
    };
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "id",
        "frameRate",
        "locationId",
        "upperLaneMarkings",
        "lowerLaneMarkings",
    ])
    .map_err(csv_write_err)?;
    wtr.write_record([
        meta.recording_id.clone(),
        meta.frame_rate.to_string(),
        meta.location_id.clone(),
        join(0),
        join(1),
    ])
    .map_err(csv_write_err)?;
    wtr.flush().map_err(io_err("output"))
}

/// Writes the three files as `<dir>/<prefix>_{tracks,tracksMeta,recordingMeta}.csv`.
pub fn write_recording(
    rec: &Recording,
    dir: &Path,
    prefix: &str,
) -> Result<RecordingPaths, IngestError> {
    let paths = RecordingPaths::with_prefix(dir, prefix);
    let create = |p: &Path| {
        std::fs::File::create(p)
            .map(std::io::BufWriter::new)
            .map_err(io_err(&p.display().to_string()))
    };
    write_tracks(create(&paths.tracks)?, rec)?;
    write_vehicle_meta(create(&paths.vehicle_meta)?, rec)?;
    write_recording_meta(create(&paths.recording_meta)?, &rec.meta)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ColumnMap;

    const META: &str = "id,frameRate,locationId,upperLaneMarkings,lowerLaneMarkings\n\
                        7,25,2,1.0;4.75;8.5,\n";
    const VEHICLES: &str = "id,width,height,class\n1,4.5,1.8,Car\n2,15.0,2.5,Truck\n";

    #[test]
    fn reports_row_and_column_of_bad_values() {
        let tracks = "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId,precedingId,thw,dhw\n\
                      1,1,0,2,30,0,0,0,2,0,0,0\n\
                      2,1,abc,2,30,0,0,0,2,0,0,0\n";
        let err = read_recording(
            tracks.as_bytes(),
            VEHICLES.as_bytes(),
            META.as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap_err();
        match err {
            IngestError::MalformedRow { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn sentinels_become_absent() {
        let tracks = "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId,precedingId,thw,dhw\n\
                      1,1,0,2,30,0,0,0,2,0,0,0\n\
                      2,1,1,2,30,0,0,0,2,2,-1,12.5\n";
        let rec = read_recording(
            tracks.as_bytes(),
            VEHICLES.as_bytes(),
            META.as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap();
        let t = &rec.trajectories[&VehicleId(1)];
        assert_eq!(t[0].preceding_vehicle_id, None);
        assert_eq!(t[0].time_headway, None);
        assert_eq!(t[1].preceding_vehicle_id, Some(VehicleId(2)));
        assert_eq!(t[1].time_headway, None);
        assert_eq!(t[1].distance_headway, Some(12.5));
        assert_eq!(rec.meta.lane_boundaries, vec![vec![1.0, 4.75, 8.5]]);
    }

    #[test]
    fn duplicate_frames_and_missing_meta_are_errors() {
        let header = "frame,id,x,y,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId,precedingId,thw,dhw\n";
        let dup = format!("{header}1,1,0,2,30,0,0,0,2,0,0,0\n1,1,0,2,30,0,0,0,2,0,0,0\n");
        let err = read_recording(
            dup.as_bytes(),
            VEHICLES.as_bytes(),
            META.as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            IngestError::InconsistentFrames { frame: 1, .. }
        ));
        let orphan = format!("{header}1,9,0,2,30,0,0,0,2,0,0,0\n");
        let err = read_recording(
            orphan.as_bytes(),
            VEHICLES.as_bytes(),
            META.as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingVehicleMeta { .. }));
        let err = read_recording(
            header.as_bytes(),
            VEHICLES.as_bytes(),
            META.as_bytes(),
            &ColumnMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::EmptyRecording { .. }));
    }

    #[test]
    fn non_monotone_markings_rejected() {
        let meta = "id,frameRate,locationId,upperLaneMarkings,lowerLaneMarkings\n1,25,1,1;3;2,\n";
        let err =
            parse_recording_meta(meta.as_bytes(), "m", &RecordingColumns::default()).unwrap_err();
        assert!(matches!(err, IngestError::InvalidLaneBoundaries(_)));
    }

    #[test]
    fn differentiation_handles_ends_and_gaps() {
        let d = differentiate(&[0, 1, 2, 4], &[0.0, 1.0, 4.0, 8.0], 10.0);
        assert_eq!(d, vec![10.0, 20.0, 70.0 / 3.0, 20.0]);
        assert_eq!(differentiate(&[3], &[1.0], 25.0), vec![0.0]);
    }
}
