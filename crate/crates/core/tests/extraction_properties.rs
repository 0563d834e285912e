use std::collections::BTreeMap;

use lcd_core::extraction::{
    detect_lane_changes, detect_lane_changes_with_report, export_events, import_events,
    read_events, write_events, Direction, ExtractionError, ExtractionParams, LaneChangeEvent,
};
use lcd_core::ingest::{VehicleClass, VehicleId};
use lcd_core::synth::{
    generate, planted_events, render_recording, Carriageway, Maneuver, NoiseSpec, Road,
    SyntheticSpec, VehicleScript,
};
use proptest::prelude::*;

fn spec_with(cars: usize, car_lcs: usize, trucks: usize, truck_lcs: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default();
    spec.car.vehicles = cars;
    spec.car.lane_changes = car_lcs;
    spec.car.aborted = 0;
    spec.truck.vehicles = trucks;
    spec.truck.lane_changes = truck_lcs;
    spec.truck.aborted = 0;
    spec
}

fn ramp_script(start: i64, end: i64, lanes: i32) -> VehicleScript {
    let mut s = VehicleScript::straight(1, 0, end + 150, 0);
    s.maneuvers.push(Maneuver::LaneChange {
        start_frame: start,
        end_frame: end,
        lanes,
    });
    s
}

fn render(scripts: &[VehicleScript], noise: &NoiseSpec) -> lcd_core::ingest::Recording {
    render_recording("01", "test", 25.0, &Road::default(), scripts, noise, 3)
}

fn quiet() -> NoiseSpec {
    NoiseSpec {
        lateral_velocity: 0.01,
        lateral_position: 0.01,
        lateral_acceleration: 0.02,
    }
}

#[test]
fn single_ramp_duration_matches_planted_frames() {
    let rec = render(&[ramp_script(100, 238, 1)], &quiet());
    let events = detect_lane_changes(&rec, &ExtractionParams::default()).unwrap();
    assert_eq!(events.len(), 1);
    let e = &events[0];
    assert!((e.start_frame - 100).abs() <= 2, "{e:?}");
    assert!((e.end_frame - 238).abs() <= 2, "{e:?}");
    assert!((e.duration - 5.52).abs() <= 2.0 / 25.0 + 1e-12);
    assert_eq!(e.direction, Direction::Right);
    assert_ne!(e.origin_lane, e.target_lane);
}

#[test]
fn straight_driving_yields_nothing() {
    let rec = render(&[VehicleScript::straight(1, 0, 1000, 1)], &quiet());
    assert!(detect_lane_changes(&rec, &ExtractionParams::default())
        .unwrap()
        .is_empty());
}

#[test]
fn aborted_excursion_is_discarded() {
    let mut s = VehicleScript::straight(1, 0, 400, 1);
    s.maneuvers.push(Maneuver::Excursion {
        start_frame: 100,
        end_frame: 200,
        amplitude: 0.5 * 3.75 * 0.5,
    });
    let rec = render(&[s], &quiet());
    let report = detect_lane_changes_with_report(&rec, &ExtractionParams::default()).unwrap();
    assert!(report.events.is_empty());
    assert!(report.candidates > 0, "excursion should open a candidate");
}

#[test]
fn missing_boundaries_is_an_error() {
    let mut rec = render(&[ramp_script(100, 238, 1)], &quiet());
    rec.meta.lane_boundaries.clear();
    assert!(matches!(
        detect_lane_changes(&rec, &ExtractionParams::default()),
        Err(ExtractionError::NoLaneBoundaries { .. })
    ));
}

#[test]
fn two_stage_sweep_is_split_and_smooth_sweep_is_flagged() {
    let mut two = VehicleScript::straight(1, 0, 800, 0);
    two.maneuvers.push(Maneuver::LaneChange {
        start_frame: 100,
        end_frame: 240,
        lanes: 1,
    });
    two.maneuvers.push(Maneuver::LaneChange {
        start_frame: 240,
        end_frame: 380,
        lanes: 1,
    });
    let mut one = VehicleScript::straight(2, 0, 800, 0);
    one.maneuvers.push(Maneuver::LaneChange {
        start_frame: 100,
        end_frame: 300,
        lanes: 2,
    });
    let rec = render(&[two, one], &NoiseSpec::none());
    let report = detect_lane_changes_with_report(&rec, &ExtractionParams::default()).unwrap();
    let first: Vec<_> = report
        .events
        .iter()
        .filter(|e| e.vehicle_id == VehicleId(1))
        .collect();
    assert_eq!(first.len(), 2, "{first:?}");
    assert!((first[0].start_frame - 100).abs() <= 2);
    assert!((first[0].end_frame - 240).abs() <= 2);
    assert_eq!(first[0].end_frame, first[1].start_frame);
    assert!((first[1].end_frame - 380).abs() <= 2);
    let second: Vec<_> = report
        .events
        .iter()
        .filter(|e| e.vehicle_id == VehicleId(2))
        .collect();
    assert_eq!(second.len(), 1);
    assert_eq!(report.flagged_sweeps.len(), 1);
    assert_eq!(report.flagged_sweeps[0].vehicle_id, VehicleId(2));
    assert_eq!(report.flagged_sweeps[0].boundaries_crossed, 2);
}

#[test]
fn planted_events_are_recovered() {
    let synth = generate(&spec_with(320, 300, 220, 200), 77).unwrap();
    let found = detect_lane_changes(&synth.recording, &ExtractionParams::default()).unwrap();
    let mut by_vehicle: BTreeMap<VehicleId, Vec<&LaneChangeEvent>> = BTreeMap::new();
    for e in &found {
        by_vehicle.entry(e.vehicle_id).or_default().push(e);
    }
    let mut hits = 0;
    let mut worst = 0;
    for p in &synth.planted {
        if let Some(es) = by_vehicle.get(&p.vehicle_id) {
            if let [e] = es.as_slice() {
                let err = (e.start_frame - p.start_frame)
                    .abs()
                    .max((e.end_frame - p.end_frame).abs());
                worst = worst.max(err);
                if err <= 2
                    && e.origin_lane == p.origin_lane
                    && e.target_lane == p.target_lane
                    && e.direction == p.direction
                {
                    hits += 1;
                }
            }
        }
    }
    let planted_ids: std::collections::BTreeSet<_> =
        synth.planted.iter().map(|p| p.vehicle_id).collect();
    let false_events = found
        .iter()
        .filter(|e| !planted_ids.contains(&e.vehicle_id))
        .count();
    assert_eq!(false_events, 0);
    assert!(
        hits as f64 >= 0.99 * synth.planted.len() as f64,
        "{hits}/{} worst {worst}",
        synth.planted.len()
    );
}

#[test]
fn bundled_spec_event_count_matches_planted() {
    let synth = generate(&SyntheticSpec::default(), 1).unwrap();
    let found = detect_lane_changes(&synth.recording, &ExtractionParams::default()).unwrap();
    assert_eq!(found.len(), synth.planted.len());
}

#[test]
fn detection_is_deterministic_and_ordered() {
    let synth = generate(&SyntheticSpec::default(), 5).unwrap();
    let a = detect_lane_changes(&synth.recording, &ExtractionParams::default()).unwrap();
    let b = detect_lane_changes(&synth.recording, &ExtractionParams::default()).unwrap();
    assert_eq!(a, b);
    for w in a.windows(2) {
        let ka = (&w[0].recording_id, w[0].vehicle_id, w[0].start_frame);
        let kb = (&w[1].recording_id, w[1].vehicle_id, w[1].start_frame);
        assert!(ka < kb);
        if w[0].vehicle_id == w[1].vehicle_id {
            assert!(w[0].end_frame <= w[1].start_frame);
        }
    }
}

#[test]
fn event_invariants_hold() {
    let synth = generate(&SyntheticSpec::default(), 8).unwrap();
    let params = ExtractionParams::default();
    for e in detect_lane_changes(&synth.recording, &params).unwrap() {
        let d = (e.end_frame - e.start_frame) as f64 / 25.0;
        assert_eq!(e.duration, d);
        assert!(
            e.duration > 0.0
                && e.duration >= params.min_duration
                && e.duration <= params.max_duration
        );
        assert_ne!(e.origin_lane, e.target_lane);
        let start = synth.recording.trajectories[&e.vehicle_id]
            .iter()
            .find(|f| f.frame == e.start_frame)
            .unwrap();
        assert_eq!(e.speed_at_start, start.longitudinal_velocity.abs());
        assert_eq!(e.time_headway_at_start, start.time_headway);
        assert_eq!(e.distance_headway_at_start, start.distance_headway);
    }
}

#[test]
fn export_import_round_trip() {
    let synth = generate(&SyntheticSpec::default(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    export_events(&synth.planted, &path).unwrap();
    assert_eq!(import_events(&path).unwrap(), synth.planted);
    assert!(synth
        .planted
        .iter()
        .any(|e| e.time_headway_at_start.is_none()));
}

#[test]
fn planted_ground_truth_matches_generator_scripts() {
    let road = Road::default();
    let mut s = ramp_script(100, 238, -1);
    s.side = Carriageway::Upper;
    s.lane = 2;
    s.class = VehicleClass::HeavyVehicle;
    let p = planted_events("01", 25.0, &road, &[s]);
    assert_eq!(p.len(), 1);
    assert_eq!((p[0].origin_lane.0, p[0].target_lane.0), (4, 3));
    assert_eq!(p[0].direction, Direction::Right);
    assert!((p[0].duration - 5.52).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn raising_threshold_never_adds_events(seed in 0u64..1000, lo in 0.05f64..0.4, bump in 0.0f64..0.5) {
        let synth = generate(&spec_with(30, 20, 10, 6), seed).unwrap();
        let at = |t: f64| {
            let p = ExtractionParams { lateral_speed_threshold: t, ..Default::default() };
            detect_lane_changes(&synth.recording, &p).unwrap().len()
        };
        prop_assert!(at(lo + bump) <= at(lo));
    }

    #[test]
    fn event_csv_round_trips(seed in 0u64..10_000) {
        let synth = generate(&spec_with(12, 10, 6, 5), seed).unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, &synth.planted).unwrap();
        prop_assert_eq!(read_events(buf.as_slice()).unwrap(), synth.planted);
    }
}
