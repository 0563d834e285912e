//! Replays the fuzz corpus seeds through the fuzzed entry points on stable.

use std::fs;
use std::path::PathBuf;

use lcd_cli::{AnalysisConfig, Grid};
use lcd_core::extraction::{detect_lane_changes, read_events, write_events, ExtractionParams};
use lcd_core::ingest::{
    parse_recording_meta, parse_tracks, parse_vehicle_meta, read_recording, ColumnMap,
    RecordingColumns, TrackColumns, VehicleColumns,
};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn tracks_seeds() {
    for (name, data) in seeds("tracks_csv") {
        let rows = parse_tracks(data.as_slice(), &name, &TrackColumns::default());
        let rows = match rows {
            Ok(r) => r,
            // the minimal seed lacks the velocity columns the default map requires
            Err(_) if name.starts_with("minimal") => {
                let map = ColumnMap::from_toml_str(
                    "[tracks]\nlongitudinal_velocity = \"\"\nlateral_velocity = \"\"\n\
                     longitudinal_acceleration = \"\"\nlateral_acceleration = \"\"\n\
                     preceding_vehicle_id = \"\"\ndistance_headway = \"\"\n",
                )
                .unwrap();
                let rows = parse_tracks(data.as_slice(), &name, &map.tracks).unwrap();
                assert!(rows.iter().all(|r| r.time_headway.is_none()), "{name}");
                rows
            }
            Err(e) => panic!("{name}: {e}"),
        };
        assert!(!rows.is_empty(), "{name}");
    }
}

#[test]
fn vehicle_meta_seeds() {
    for (name, data) in seeds("vehicle_meta_csv") {
        let v = parse_vehicle_meta(data.as_slice(), &name, &VehicleColumns::default()).unwrap();
        assert!(v.iter().all(|v| v.length > 0.0 && v.width > 0.0), "{name}");
    }
}

#[test]
fn recording_meta_seeds() {
    for (name, data) in seeds("recording_meta_csv") {
        let meta =
            parse_recording_meta(data.as_slice(), &name, &RecordingColumns::default()).unwrap();
        assert!(
            meta.frame_rate > 0.0 && !meta.lane_boundaries.is_empty(),
            "{name}"
        );
    }
}

#[test]
fn recording_file_seeds() {
    for (name, data) in seeds("recording_files") {
        let mut parts = data.splitn(3, |b| *b == 0);
        let (meta, vehicles, tracks) = (
            parts.next().unwrap(),
            parts.next().unwrap(),
            parts.next().unwrap(),
        );
        let rec = read_recording(tracks, vehicles, meta, &ColumnMap::default()).unwrap();
        let lanes: std::collections::BTreeSet<_> = rec
            .trajectories
            .values()
            .flatten()
            .map(|f| f.lane_id)
            .collect();
        // boundaries are estimated when the meta file has none and two lanes are seen
        assert_eq!(
            rec.meta.lane_boundaries.is_empty(),
            lanes.len() < 2,
            "{name}"
        );
        let detected = detect_lane_changes(&rec, &ExtractionParams::default());
        assert_eq!(detected.is_err(), lanes.len() < 2, "{name}");
    }
}

#[test]
fn column_map_seeds() {
    for (name, data) in seeds("column_map_toml") {
        ColumnMap::from_toml_str(std::str::from_utf8(&data).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn events_seeds_round_trip() {
    for (name, data) in seeds("events_csv") {
        let events = read_events(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut first = Vec::new();
        write_events(&mut first, &events).unwrap();
        let mut second = Vec::new();
        write_events(&mut second, &read_events(first.as_slice()).unwrap()).unwrap();
        assert_eq!(first, second, "{name}");
    }
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("analysis_config_toml") {
        let text = std::str::from_utf8(&data).unwrap();
        match name.as_str() {
            "grid.txt" => assert_eq!(text.parse::<Grid>().unwrap().points().len(), 161),
            n if n.starts_with("invalid") => assert!(AnalysisConfig::from_toml_str(text).is_err()),
            _ => {
                AnalysisConfig::from_toml_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
    }
}
