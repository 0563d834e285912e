//! Trajectory recordings: data model, CSV loading and validation.

mod columns;
mod csv_io;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use columns::{ColumnMap, ColumnSpec, RecordingColumns, TrackColumns, VehicleColumns};
pub use csv_io::{
    assemble_recording, parse_recording_meta, parse_tracks, parse_vehicle_meta, read_recording,
    write_recording, write_recording_meta, write_tracks, write_vehicle_meta, RawTrackRow,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: malformed row {row}, column {column:?}: {reason}")]
    MalformedRow {
        file: String,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("vehicle {vehicle}: duplicate frame {frame}")]
    InconsistentFrames { vehicle: VehicleId, frame: i64 },
    #[error("{file}: no data rows")]
    EmptyRecording { file: String },
    #[error("vehicle {vehicle} has trajectory rows but no metadata entry")]
    MissingVehicleMeta { vehicle: VehicleId },
    #[error("invalid lane boundaries: {0}")]
    InvalidLaneBoundaries(String),
    #[error("invalid column map: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Csv { file: String, message: String },
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.trim().parse().map($name)
            }
        }
    };
}

id_type!(VehicleId);
id_type!(LaneId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(rename = "Car")]
    PassengerCar,
    #[serde(rename = "Truck")]
    HeavyVehicle,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 2] = [VehicleClass::PassengerCar, VehicleClass::HeavyVehicle];

    pub fn label(self) -> &'static str {
        match self {
            VehicleClass::PassengerCar => "Car",
            VehicleClass::HeavyVehicle => "Truck",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VehicleClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" | "passengercar" | "passenger_car" | "vehicle" => Ok(VehicleClass::PassengerCar),
            "truck" | "heavyvehicle" | "heavy_vehicle" | "bus" => Ok(VehicleClass::HeavyVehicle),
            other => Err(format!("unknown vehicle class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: String,
    pub frame_rate: f64,
    pub location_id: String,
    /// Lateral lane-marking positions, one strictly increasing list per
    /// driving direction.
    pub lane_boundaries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMeta {
    pub vehicle_id: VehicleId,
    pub vehicle_class: VehicleClass,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame: i64,
    pub vehicle_id: VehicleId,
    pub longitudinal_position: f64,
    pub lateral_position: f64,
    pub longitudinal_velocity: f64,
    pub lateral_velocity: f64,
    pub longitudinal_acceleration: f64,
    pub lateral_acceleration: f64,
    pub lane_id: LaneId,
    pub preceding_vehicle_id: Option<VehicleId>,
    pub time_headway: Option<f64>,
    pub distance_headway: Option<f64>,
}

/// A loaded recording. Trajectories are sorted by frame with no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub vehicles: BTreeMap<VehicleId, VehicleMeta>,
    pub trajectories: BTreeMap<VehicleId, Vec<TrackFrame>>,
}

impl Recording {
    pub fn n_frames(&self) -> usize {
        self.trajectories.values().map(Vec::len).sum()
    }

    pub fn class_of(&self, vehicle: VehicleId) -> Option<VehicleClass> {
        self.vehicles.get(&vehicle).map(|m| m.vehicle_class)
    }

    /// Lateral extent covered by the lane markings, if any are known.
    pub fn boundary_range(&self) -> Option<(f64, f64)> {
        let all = self.meta.lane_boundaries.iter().flatten();
        let lo = all.clone().copied().reduce(f64::min)?;
        let hi = all.copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ValidationFinding {
    /// `frame` is the first missing frame after a gap.
    FrameGap {
        vehicle: VehicleId,
        frame: i64,
    },
    OrphanHeadway {
        vehicle: VehicleId,
        frame: i64,
    },
    MissingHeadway {
        vehicle: VehicleId,
        frame: i64,
    },
    OutsideLanes {
        vehicle: VehicleId,
        frame: i64,
        lateral_position: f64,
    },
    NoLaneBoundaries,
}

impl fmt::Display for ValidationFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFinding::FrameGap { vehicle, frame } => {
                write!(f, "FrameGap vehicle={vehicle} frame={frame}")
            }
            ValidationFinding::OrphanHeadway { vehicle, frame } => {
                write!(f, "OrphanHeadway vehicle={vehicle} frame={frame}")
            }
            ValidationFinding::MissingHeadway { vehicle, frame } => {
                write!(f, "MissingHeadway vehicle={vehicle} frame={frame}")
            }
            ValidationFinding::OutsideLanes {
                vehicle,
                frame,
                lateral_position,
            } => write!(
                f,
                "OutsideLanes vehicle={vehicle} frame={frame} y={lateral_position}"
            ),
            ValidationFinding::NoLaneBoundaries => f.write_str("NoLaneBoundaries"),
        }
    }
}

pub fn validate_recording(rec: &Recording) -> Vec<ValidationFinding> {
    let mut findings = Vec::new();
    let range = rec.boundary_range();
    if range.is_none() {
        findings.push(ValidationFinding::NoLaneBoundaries);
    }
    for (&vehicle, frames) in &rec.trajectories {
        for pair in frames.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                findings.push(ValidationFinding::FrameGap {
                    vehicle,
                    frame: pair[0].frame + 1,
                });
            }
        }
        for f in frames {
            let has_headway = f.time_headway.is_some() || f.distance_headway.is_some();
            let full_headway = f.time_headway.is_some() && f.distance_headway.is_some();
            match (f.preceding_vehicle_id.is_some(), has_headway) {
                (false, true) => findings.push(ValidationFinding::OrphanHeadway {
                    vehicle,
                    frame: f.frame,
                }),
                (true, _) if !full_headway => findings.push(ValidationFinding::MissingHeadway {
                    vehicle,
                    frame: f.frame,
                }),
                _ => {}
            }
            if let Some((lo, hi)) = range {
                if f.lateral_position < lo || f.lateral_position > hi {
                    findings.push(ValidationFinding::OutsideLanes {
                        vehicle,
                        frame: f.frame,
                        lateral_position: f.lateral_position,
                    });
                }
            }
        }
    }
    findings
}

/// The three files that make up one recording on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingPaths {
    pub tracks: PathBuf,
    pub vehicle_meta: PathBuf,
    pub recording_meta: PathBuf,
}

impl RecordingPaths {
    /// Paths following the HighD naming scheme `<prefix>_tracks.csv`,
    /// `<prefix>_tracksMeta.csv`, `<prefix>_recordingMeta.csv`.
    pub fn with_prefix(dir: &Path, prefix: &str) -> Self {
        Self {
            tracks: dir.join(format!("{prefix}_tracks.csv")),
            vehicle_meta: dir.join(format!("{prefix}_tracksMeta.csv")),
            recording_meta: dir.join(format!("{prefix}_recordingMeta.csv")),
        }
    }

    /// Every complete recording in `dir`, sorted by prefix.
    pub fn discover(dir: &Path) -> Result<Vec<Self>, IngestError> {
        let io = |source| IngestError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut prefixes: Vec<String> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix("_tracks.csv"))
                    .map(str::to_string)
            })
            .collect();
        prefixes.sort();
        Ok(prefixes
            .into_iter()
            .map(|p| Self::with_prefix(dir, &p))
            .filter(|p| p.vehicle_meta.is_file() && p.recording_meta.is_file())
            .collect())
    }
}

pub fn load_recording(
    track_path: &Path,
    vehicle_meta_path: &Path,
    recording_meta_path: &Path,
    column_map: &ColumnMap,
) -> Result<Recording, IngestError> {
    let open = |path: &Path| {
        std::fs::File::open(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    let name = |path: &Path| path.display().to_string();
    let meta = parse_recording_meta(
        open(recording_meta_path)?,
        &name(recording_meta_path),
        &column_map.recording,
    )?;
    let vehicles = parse_vehicle_meta(
        open(vehicle_meta_path)?,
        &name(vehicle_meta_path),
        &column_map.vehicles,
    )?;
    let rows = parse_tracks(open(track_path)?, &name(track_path), &column_map.tracks)?;
    assemble_recording(meta, vehicles, rows)
}

/// Loads several recordings in parallel; results keep the input order.
pub fn load_recordings(
    paths: &[RecordingPaths],
    column_map: &ColumnMap,
) -> Vec<Result<Recording, IngestError>> {
    paths
        .par_iter()
        .map(|p| load_recording(&p.tracks, &p.vehicle_meta, &p.recording_meta, column_map))
        .collect()
}

/// Midpoints between the per-lane median lateral positions, grouped by
/// driving direction (sign of the longitudinal velocity).
pub fn estimate_lane_boundaries(
    trajectories: &BTreeMap<VehicleId, Vec<TrackFrame>>,
) -> Vec<Vec<f64>> {
    let mut by_direction: [BTreeMap<LaneId, Vec<f64>>; 2] = Default::default();
    for f in trajectories.values().flatten() {
        let dir = usize::from(f.longitudinal_velocity >= 0.0);
        by_direction[dir]
            .entry(f.lane_id)
            .or_default()
            .push(f.lateral_position);
    }
    let mut out = Vec::new();
    for lanes in by_direction {
        let mut medians: Vec<f64> = lanes
            .into_values()
            .map(|mut ys| {
                ys.sort_by(f64::total_cmp);
                let m = ys.len() / 2;
                if ys.len() % 2 == 0 {
                    0.5 * (ys[m - 1] + ys[m])
                } else {
                    ys[m]
                }
            })
            .collect();
        medians.sort_by(f64::total_cmp);
        medians.dedup();
        if medians.len() >= 2 {
            let mids: Vec<f64> = medians.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            out.push(mids);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vehicle_class_parsing() {
        assert_eq!(
            "Car".parse::<VehicleClass>().unwrap(),
            VehicleClass::PassengerCar
        );
        assert_eq!(
            "Truck".parse::<VehicleClass>().unwrap(),
            VehicleClass::HeavyVehicle
        );
        assert!("bike".parse::<VehicleClass>().is_err());
        assert_eq!(VehicleClass::HeavyVehicle.to_string(), "Truck");
    }

    #[test]
    fn boundary_estimate_uses_lane_medians() {
        let mk = |id: u64, frame: i64, y: f64, lane: u64| TrackFrame {
            frame,
            vehicle_id: VehicleId(id),
            longitudinal_position: 0.0,
            lateral_position: y,
            longitudinal_velocity: 30.0,
            lateral_velocity: 0.0,
            longitudinal_acceleration: 0.0,
            lateral_acceleration: 0.0,
            lane_id: LaneId(lane),
            preceding_vehicle_id: None,
            time_headway: None,
            distance_headway: None,
        };
        let mut t = BTreeMap::new();
        t.insert(
            VehicleId(1),
            vec![mk(1, 0, 1.0, 2), mk(1, 1, 2.0, 2), mk(1, 2, 9.0, 2)],
        );
        t.insert(VehicleId(2), vec![mk(2, 0, 6.0, 3)]);
        assert_eq!(estimate_lane_boundaries(&t), vec![vec![4.0]]);
    }
}
