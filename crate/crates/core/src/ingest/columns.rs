//! Mapping from canonical fields to source CSV columns.
//!
//! The default map matches the public HighD column names. In the TOML form
//! each key is a canonical field; the value is either a column name or a
//! table `{ column = "...", scale = ... }`. Keys left out keep their default.
//! An empty column name unmaps an optional field: unmapped velocities and
//! accelerations are derived by central differences, unmapped headway
//! fields are treated as absent.
//!
//! ```toml
//! [tracks]
//! lateral_position = { column = "y_cm", scale = 0.01 }
//! lateral_velocity = ""
//! ```

use serde::{Deserialize, Deserializer, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSpec {
    pub column: String,
    /// Multiplier applied to every parsed value.
    pub scale: f64,
}

impl ColumnSpec {
    pub fn new(column: &str) -> Self {
        Self {
            column: column.to_string(),
            scale: 1.0,
        }
    }

    pub fn scaled(column: &str, scale: f64) -> Self {
        Self {
            column: column.to_string(),
            scale,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSpec {
    Name(String),
    Table {
        column: String,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl From<RawSpec> for Option<ColumnSpec> {
    fn from(raw: RawSpec) -> Self {
        let (column, scale) = match raw {
            RawSpec::Name(c) => (c, 1.0),
            RawSpec::Table { column, scale } => (column, scale),
        };
        if column.is_empty() {
            None
        } else {
            Some(ColumnSpec { column, scale })
        }
    }
}

fn required<'de, D: Deserializer<'de>>(d: D) -> Result<ColumnSpec, D::Error> {
    Option::<ColumnSpec>::from(RawSpec::deserialize(d)?)
        .ok_or_else(|| serde::de::Error::custom("required column cannot be unmapped"))
}

fn optional<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ColumnSpec>, D::Error> {
    Ok(RawSpec::deserialize(d)?.into())
}

fn list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ColumnSpec>, D::Error> {
    Ok(Vec::<RawSpec>::deserialize(d)?
        .into_iter()
        .filter_map(Option::<ColumnSpec>::from)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackColumns {
    #[serde(deserialize_with = "required")]
    pub frame: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub vehicle_id: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub longitudinal_position: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub lateral_position: ColumnSpec,
    #[serde(deserialize_with = "optional")]
    pub longitudinal_velocity: Option<ColumnSpec>,
    #[serde(deserialize_with = "optional")]
    pub lateral_velocity: Option<ColumnSpec>,
    #[serde(deserialize_with = "optional")]
    pub longitudinal_acceleration: Option<ColumnSpec>,
    #[serde(deserialize_with = "optional")]
    pub lateral_acceleration: Option<ColumnSpec>,
    #[serde(deserialize_with = "required")]
    pub lane_id: ColumnSpec,
    #[serde(deserialize_with = "optional")]
    pub preceding_vehicle_id: Option<ColumnSpec>,
    #[serde(deserialize_with = "optional")]
    pub time_headway: Option<ColumnSpec>,
    #[serde(deserialize_with = "optional")]
    pub distance_headway: Option<ColumnSpec>,
}

impl Default for TrackColumns {
    fn default() -> Self {
        Self {
            frame: ColumnSpec::new("frame"),
            vehicle_id: ColumnSpec::new("id"),
            longitudinal_position: ColumnSpec::new("x"),
            lateral_position: ColumnSpec::new("y"),
            longitudinal_velocity: Some(ColumnSpec::new("xVelocity")),
            lateral_velocity: Some(ColumnSpec::new("yVelocity")),
            longitudinal_acceleration: Some(ColumnSpec::new("xAcceleration")),
            lateral_acceleration: Some(ColumnSpec::new("yAcceleration")),
            lane_id: ColumnSpec::new("laneId"),
            preceding_vehicle_id: Some(ColumnSpec::new("precedingId")),
            time_headway: Some(ColumnSpec::new("thw")),
            distance_headway: Some(ColumnSpec::new("dhw")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleColumns {
    #[serde(deserialize_with = "required")]
    pub vehicle_id: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub vehicle_class: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub length: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub width: ColumnSpec,
}

impl Default for VehicleColumns {
    fn default() -> Self {
        // HighD stores the bounding box extent along x as "width" and
        // along y as "height"
        Self {
            vehicle_id: ColumnSpec::new("id"),
            vehicle_class: ColumnSpec::new("class"),
            length: ColumnSpec::new("width"),
            width: ColumnSpec::new("height"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordingColumns {
    #[serde(deserialize_with = "required")]
    pub recording_id: ColumnSpec,
    #[serde(deserialize_with = "required")]
    pub frame_rate: ColumnSpec,
    #[serde(deserialize_with = "optional")]
    pub location_id: Option<ColumnSpec>,
    /// One column per driving direction, each a `;`-separated list.
    #[serde(deserialize_with = "list")]
    pub lane_markings: Vec<ColumnSpec>,
}

impl Default for RecordingColumns {
    fn default() -> Self {
        Self {
            recording_id: ColumnSpec::new("id"),
            frame_rate: ColumnSpec::new("frameRate"),
            location_id: Some(ColumnSpec::new("locationId")),
            lane_markings: vec![
                ColumnSpec::new("upperLaneMarkings"),
                ColumnSpec::new("lowerLaneMarkings"),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub tracks: TrackColumns,
    pub vehicles: VehicleColumns,
    pub recording: RecordingColumns,
}

impl ColumnMap {
    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let map: ColumnMap =
            toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        map.check_scales()?;
        Ok(map)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn check_scales(&self) -> Result<(), IngestError> {
        let t = &self.tracks;
        let all = [
            Some(&t.frame),
            Some(&t.vehicle_id),
            Some(&t.longitudinal_position),
            Some(&t.lateral_position),
            t.longitudinal_velocity.as_ref(),
            t.lateral_velocity.as_ref(),
            t.longitudinal_acceleration.as_ref(),
            t.lateral_acceleration.as_ref(),
            Some(&t.lane_id),
            t.preceding_vehicle_id.as_ref(),
            t.time_headway.as_ref(),
            t.distance_headway.as_ref(),
            Some(&self.vehicles.length),
            Some(&self.vehicles.width),
            Some(&self.recording.frame_rate),
        ];
        let lanes = self.recording.lane_markings.iter().map(Some);
        for spec in all.into_iter().chain(lanes).flatten() {
            if !(spec.scale.is_finite() && spec.scale != 0.0) {
                return Err(IngestError::Config(format!(
                    "column {:?} has invalid scale {}",
                    spec.column, spec.scale
                )));
            }
        }
        Ok(())
    }
}
