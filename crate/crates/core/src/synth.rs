//! Synthetic highway recordings with planted lane changes.
//!
//! Vehicles are described by [`VehicleScript`]s and rendered frame by frame.
//! A lane change is a cosine ramp of one lane width, so lateral velocity is
//! exactly zero at the planted start and end frames. [`generate`] draws
//! scripts from a [`SyntheticSpec`] and returns the recording together with
//! the planted events.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{direction_of, sort_events, LaneChangeEvent};
use crate::ingest::{
    LaneId, Recording, RecordingMeta, TrackFrame, VehicleClass, VehicleId, VehicleMeta,
};
use crate::survival::{draw_duration, DistributionParams};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Log-time effects of the start-time covariates, applied around the
/// class means: `D = D0 * exp(speed*(v - mean_v) + thw*(thw - mean_thw) + dhw*(dhw - mean_dhw))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateEffects {
    pub speed: f64,
    pub thw: f64,
    pub dhw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSpec {
    pub vehicles: usize,
    pub lane_changes: usize,
    /// Vehicles that drift toward a boundary and return without changing lane.
    pub aborted: usize,
    pub duration: DistributionParams,
    /// Normal law for longitudinal speed, m/s.
    pub speed_mean: f64,
    pub speed_sd: f64,
    /// Lognormal law for time headway: parameters of ln(thw).
    pub thw_log_mean: f64,
    pub thw_log_sd: f64,
    pub no_leader_fraction: f64,
    pub effects: CovariateEffects,
}

/// Partial class table; unset keys keep the class defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassPatch {
    vehicles: Option<usize>,
    lane_changes: Option<usize>,
    aborted: Option<usize>,
    duration: Option<DistributionParams>,
    speed_mean: Option<f64>,
    speed_sd: Option<f64>,
    thw_log_mean: Option<f64>,
    thw_log_sd: Option<f64>,
    no_leader_fraction: Option<f64>,
    effects: Option<CovariateEffects>,
}

impl ClassPatch {
    fn apply(self, mut base: ClassSpec) -> ClassSpec {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { base.$f = v; })* };
        }
        set!(
            vehicles,
            lane_changes,
            aborted,
            duration,
            speed_mean,
            speed_sd,
            thw_log_mean,
            thw_log_sd,
            no_leader_fraction,
            effects
        );
        base
    }
}

fn car_spec<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ClassSpec, D::Error> {
    Ok(ClassPatch::deserialize(d)?.apply(ClassSpec::car()))
}

fn truck_spec<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ClassSpec, D::Error> {
    Ok(ClassPatch::deserialize(d)?.apply(ClassSpec::truck()))
}

impl ClassSpec {
    pub fn car() -> Self {
        Self {
            vehicles: 120,
            lane_changes: 100,
            aborted: 5,
            duration: DistributionParams::Lognormal {
                mu: 5.5f64.ln(),
                sigma: 0.23,
            },
            speed_mean: 29.0,
            speed_sd: 4.0,
            thw_log_mean: 1.35f64.ln(),
            thw_log_sd: 0.45,
            no_leader_fraction: 0.1,
            effects: CovariateEffects::default(),
        }
    }

    pub fn truck() -> Self {
        Self {
            vehicles: 40,
            lane_changes: 30,
            aborted: 2,
            duration: DistributionParams::Lognormal {
                mu: 6.1f64.ln(),
                sigma: 0.19,
            },
            speed_mean: 25.0,
            speed_sd: 2.5,
            thw_log_mean: 2.5f64.ln(),
            thw_log_sd: 0.4,
            no_leader_fraction: 0.1,
            effects: CovariateEffects::default(),
        }
    }

    fn thw_mean(&self) -> f64 {
        (self.thw_log_mean + 0.5 * self.thw_log_sd * self.thw_log_sd).exp()
    }

    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(format!("{name}: {m}")));
        if self.lane_changes + self.aborted > self.vehicles {
            return bad(format!(
                "lane_changes + aborted ({}) exceeds vehicles ({})",
                self.lane_changes + self.aborted,
                self.vehicles
            ));
        }
        if let Err(e) = self.duration.validate() {
            return bad(e.to_string());
        }
        if !(self.speed_mean > 0.0 && self.speed_sd >= 0.0 && self.speed_mean.is_finite()) {
            return bad("speed law needs mean > 0 and sd >= 0".into());
        }
        if !(self.thw_log_sd >= 0.0 && self.thw_log_mean.is_finite() && self.thw_log_sd.is_finite())
        {
            return bad("thw law needs finite parameters and sd >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.no_leader_fraction) {
            return bad("no_leader_fraction must lie in [0, 1]".into());
        }
        let e = self.effects;
        if !(e.speed.is_finite() && e.thw.is_finite() && e.dhw.is_finite()) {
            return bad("effects must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub recording_id: String,
    pub location_id: String,
    pub frame_rate: f64,
    #[serde(deserialize_with = "car_spec")]
    pub car: ClassSpec,
    #[serde(deserialize_with = "truck_spec")]
    pub truck: ClassSpec,
    /// Standard deviations of the white measurement noise.
    pub lateral_velocity_noise: f64,
    pub lateral_position_noise: f64,
    pub lateral_acceleration_noise: f64,
    /// Peak lateral amplitude of the slow weave on straight-driving vehicles, m.
    pub weave_amplitude: f64,
    pub road: Road,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            recording_id: "01".to_string(),
            location_id: "synthetic".to_string(),
            frame_rate: 25.0,
            car: ClassSpec::car(),
            truck: ClassSpec::truck(),
            lateral_velocity_noise: 0.01,
            lateral_position_noise: 0.01,
            lateral_acceleration_noise: 0.02,
            weave_amplitude: 0.1,
            road: Road::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(SynthError::InvalidSpec(
                "frame_rate must be positive".into(),
            ));
        }
        for (name, v) in [
            ("lateral_velocity_noise", self.lateral_velocity_noise),
            ("lateral_position_noise", self.lateral_position_noise),
            (
                "lateral_acceleration_noise",
                self.lateral_acceleration_noise,
            ),
            ("weave_amplitude", self.weave_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidSpec(format!("{name} must be >= 0")));
            }
        }
        self.road.validate()?;
        self.car.validate("car")?;
        self.truck.validate("truck")
    }

    pub fn class(&self, class: VehicleClass) -> &ClassSpec {
        match class {
            VehicleClass::PassengerCar => &self.car,
            VehicleClass::HeavyVehicle => &self.truck,
        }
    }
}

/// Two carriageways of equal lane count separated by a median. Vehicles on
/// the upper carriageway travel toward negative x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Road {
    pub lane_width: f64,
    pub lanes_per_direction: usize,
    pub first_marking: f64,
    pub median_width: f64,
}

impl Default for Road {
    fn default() -> Self {
        Self {
            lane_width: 3.75,
            lanes_per_direction: 3,
            first_marking: 8.0,
            median_width: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Carriageway {
    Upper,
    Lower,
}

impl Carriageway {
    pub fn heading(self) -> f64 {
        match self {
            Carriageway::Upper => -1.0,
            Carriageway::Lower => 1.0,
        }
    }
}

impl Road {
    fn validate(&self) -> Result<(), SynthError> {
        if !(self.lane_width > 0.0 && self.lanes_per_direction >= 1 && self.median_width >= 0.0) {
            return Err(SynthError::InvalidSpec(
                "road needs lane_width > 0, at least one lane, median_width >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn markings(&self, side: Carriageway) -> Vec<f64> {
        let n = self.lanes_per_direction;
        let base = match side {
            Carriageway::Upper => self.first_marking,
            Carriageway::Lower => {
                self.first_marking + n as f64 * self.lane_width + self.median_width
            }
        };
        (0..=n).map(|i| base + i as f64 * self.lane_width).collect()
    }

    pub fn boundaries(&self) -> Vec<Vec<f64>> {
        vec![
            self.markings(Carriageway::Upper),
            self.markings(Carriageway::Lower),
        ]
    }

    /// Lane index 0 is the lane with the smallest lateral position.
    pub fn lane_center(&self, side: Carriageway, lane: usize) -> f64 {
        self.markings(side)[lane] + 0.5 * self.lane_width
    }

    /// Lane ids count the markings below the position, starting at 1.
    pub fn lane_id(&self, y: f64) -> LaneId {
        let below = self
            .boundaries()
            .iter()
            .flatten()
            .filter(|&&m| m < y)
            .count();
        LaneId(below as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Maneuver {
    /// Cosine ramp over `lanes` lane widths; positive moves toward larger y.
    LaneChange {
        start_frame: i64,
        end_frame: i64,
        lanes: i32,
    },
    /// Lateral drift of `amplitude` metres and back, no lane change.
    Excursion {
        start_frame: i64,
        end_frame: i64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leader {
    pub vehicle_id: VehicleId,
    pub time_headway: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weave {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleScript {
    pub vehicle_id: VehicleId,
    pub class: VehicleClass,
    pub length: f64,
    pub width: f64,
    pub first_frame: i64,
    pub last_frame: i64,
    pub side: Carriageway,
    pub lane: usize,
    pub speed: f64,
    pub leader: Option<Leader>,
    pub maneuvers: Vec<Maneuver>,
    pub weave: Option<Weave>,
}

impl VehicleScript {
    /// A car on the lower carriageway with no leader, weave or maneuvers.
    pub fn straight(vehicle_id: u64, first_frame: i64, last_frame: i64, lane: usize) -> Self {
        Self {
            vehicle_id: VehicleId(vehicle_id),
            class: VehicleClass::PassengerCar,
            length: 4.5,
            width: 1.8,
            first_frame,
            last_frame,
            side: Carriageway::Lower,
            lane,
            speed: 30.0,
            leader: None,
            maneuvers: Vec::new(),
            weave: None,
        }
    }

    /// True lateral offset from the lane center, its velocity and acceleration.
    fn lateral(&self, frame: i64, frame_rate: f64, lane_width: f64) -> (f64, f64, f64) {
        use std::f64::consts::PI;
        let (mut y, mut v, mut a) = (0.0, 0.0, 0.0);
        for m in &self.maneuvers {
            match *m {
                Maneuver::LaneChange {
                    start_frame,
                    end_frame,
                    lanes,
                } => {
                    let delta = lanes as f64 * lane_width;
                    if frame >= end_frame {
                        y += delta;
                    } else if frame > start_frame {
                        let t = (end_frame - start_frame) as f64 / frame_rate;
                        let s = (frame - start_frame) as f64 / (end_frame - start_frame) as f64;
                        y += delta * 0.5 * (1.0 - (PI * s).cos());
                        v += delta * PI / (2.0 * t) * (PI * s).sin();
                        a += delta * PI * PI / (2.0 * t * t) * (PI * s).cos();
                    }
                }
                Maneuver::Excursion {
                    start_frame,
                    end_frame,
                    amplitude,
                } => {
                    if frame > start_frame && frame < end_frame {
                        let t = (end_frame - start_frame) as f64 / frame_rate;
                        let s = (frame - start_frame) as f64 / (end_frame - start_frame) as f64;
                        y += amplitude * 0.5 * (1.0 - (2.0 * PI * s).cos());
                        v += amplitude * PI / t * (2.0 * PI * s).sin();
                        a += amplitude * 2.0 * PI * PI / (t * t) * (2.0 * PI * s).cos();
                    }
                }
            }
        }
        if let Some(w) = &self.weave {
            let omega = 2.0 * PI / w.period;
            let arg = omega * frame as f64 / frame_rate + w.phase;
            y += w.amplitude * arg.sin();
            v += w.amplitude * omega * arg.cos();
            a -= w.amplitude * omega * omega * arg.sin();
        }
        (y, v, a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub lateral_velocity: f64,
    pub lateral_position: f64,
    pub lateral_acceleration: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            lateral_velocity: 0.0,
            lateral_position: 0.0,
            lateral_acceleration: 0.0,
        }
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("noise sd validated non-negative")
}

/// Renders scripts into a recording. Lane ids follow the noiseless position.
pub fn render_recording(
    recording_id: &str,
    location_id: &str,
    frame_rate: f64,
    road: &Road,
    scripts: &[VehicleScript],
    noise: &NoiseSpec,
    seed: u64,
) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nv, ny, na) = (
        normal(noise.lateral_velocity),
        normal(noise.lateral_position),
        normal(noise.lateral_acceleration),
    );
    let mut vehicles = BTreeMap::new();
    let mut trajectories = BTreeMap::new();
    for s in scripts {
        vehicles.insert(
            s.vehicle_id,
            VehicleMeta {
                vehicle_id: s.vehicle_id,
                vehicle_class: s.class,
                length: s.length,
                width: s.width,
            },
        );
        let heading = s.side.heading();
        let center = road.lane_center(s.side, s.lane);
        let x0 = if heading > 0.0 { 0.0 } else { 420.0 };
        let frames = (s.first_frame..=s.last_frame)
            .map(|frame| {
                let (dy, vy, ay) = s.lateral(frame, frame_rate, road.lane_width);
                let y = center + dy;
                let elapsed = (frame - s.first_frame) as f64 / frame_rate;
                TrackFrame {
                    frame,
                    vehicle_id: s.vehicle_id,
                    longitudinal_position: x0 + heading * s.speed * elapsed,
                    lateral_position: y + ny.sample(&mut rng),
                    longitudinal_velocity: heading * s.speed,
                    lateral_velocity: vy + nv.sample(&mut rng),
                    longitudinal_acceleration: 0.0,
                    lateral_acceleration: ay + na.sample(&mut rng),
                    lane_id: road.lane_id(y),
                    preceding_vehicle_id: s.leader.as_ref().map(|l| l.vehicle_id),
                    time_headway: s.leader.as_ref().map(|l| l.time_headway),
                    distance_headway: s.leader.as_ref().map(|l| l.time_headway * s.speed),
                }
            })
            .collect();
        trajectories.insert(s.vehicle_id, frames);
    }
    Recording {
        meta: RecordingMeta {
            recording_id: recording_id.to_string(),
            frame_rate,
            location_id: location_id.to_string(),
            lane_boundaries: road.boundaries(),
        },
        vehicles,
        trajectories,
    }
}

/// Ground-truth events for the lane changes in the scripts.
pub fn planted_events(
    recording_id: &str,
    frame_rate: f64,
    road: &Road,
    scripts: &[VehicleScript],
) -> Vec<LaneChangeEvent> {
    let mut out = Vec::new();
    for s in scripts {
        let mut lane = s.lane as i64;
        for m in &s.maneuvers {
            if let Maneuver::LaneChange {
                start_frame,
                end_frame,
                lanes,
            } = *m
            {
                let origin = road.lane_id(road.lane_center(s.side, lane as usize));
                lane += lanes as i64;
                let target = road.lane_id(road.lane_center(s.side, lane.max(0) as usize));
                out.push(LaneChangeEvent {
                    recording_id: recording_id.to_string(),
                    vehicle_id: s.vehicle_id,
                    vehicle_class: s.class,
                    direction: direction_of(s.side.heading(), lanes as f64),
                    start_frame,
                    end_frame,
                    duration: (end_frame - start_frame) as f64 / frame_rate,
                    speed_at_start: s.speed,
                    time_headway_at_start: s.leader.as_ref().map(|l| l.time_headway),
                    distance_headway_at_start: s.leader.as_ref().map(|l| l.time_headway * s.speed),
                    origin_lane: origin,
                    target_lane: target,
                });
            }
        }
    }
    sort_events(&mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording: Recording,
    pub scripts: Vec<VehicleScript>,
    pub planted: Vec<LaneChangeEvent>,
}

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticRecording, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fr = spec.frame_rate;
    let secs = |s: f64| (s * fr).round() as i64;
    let total = spec.car.vehicles + spec.truck.vehicles;
    let lanes = spec.road.lanes_per_direction;
    let mut scripts = Vec::with_capacity(total);
    let mut next_id = 1u64;

    for class in VehicleClass::ALL {
        let cs = spec.class(class);
        let speed_law = normal(cs.speed_sd);
        let thw_law = LogNormal::new(cs.thw_log_mean, cs.thw_log_sd).expect("validated");
        let thw_center = cs.thw_mean();
        let dhw_center = thw_center * cs.speed_mean;
        for i in 0..cs.vehicles {
            let vehicle_id = VehicleId(next_id);
            next_id += 1;
            let side = if rng.random_bool(0.5) {
                Carriageway::Upper
            } else {
                Carriageway::Lower
            };
            let speed = (cs.speed_mean + speed_law.sample(&mut rng)).max(5.0);
            let leader = if total > 1 && !rng.random_bool(cs.no_leader_fraction) {
                let mut other = rng.random_range(1..=total as u64 - 1);
                if other >= vehicle_id.0 {
                    other += 1;
                }
                Some(Leader {
                    vehicle_id: VehicleId(other),
                    time_headway: thw_law.sample(&mut rng),
                })
            } else {
                None
            };
            let (length, width) = match class {
                VehicleClass::PassengerCar => {
                    (rng.random_range(4.0..5.2), rng.random_range(1.7..2.0))
                }
                VehicleClass::HeavyVehicle => {
                    (rng.random_range(11.0..18.0), rng.random_range(2.4..2.6))
                }
            };
            let first_frame = rng.random_range(0..secs(10.0).max(1));
            let lead_in = secs(rng.random_range(1.5..4.0));
            let lead_out = secs(rng.random_range(1.5..4.0));

            let mut script = VehicleScript {
                vehicle_id,
                class,
                length,
                width,
                first_frame,
                last_frame: first_frame,
                side,
                lane: rng.random_range(0..lanes),
                speed,
                leader,
                maneuvers: Vec::new(),
                weave: None,
            };
            if i < cs.lane_changes && lanes > 1 {
                let step: i32 = if script.lane == 0 {
                    1
                } else if script.lane + 1 == lanes {
                    -1
                } else if rng.random_bool(0.5) {
                    1
                } else {
                    -1
                };
                let (thw_dev, dhw_dev) = match &script.leader {
                    Some(l) => (
                        l.time_headway - thw_center,
                        l.time_headway * speed - dhw_center,
                    ),
                    None => (0.0, 0.0),
                };
                let e = cs.effects;
                let factor =
                    (e.speed * (speed - cs.speed_mean) + e.thw * thw_dev + e.dhw * dhw_dev).exp();
                let duration = draw_duration(&cs.duration, &mut rng) * factor;
                let n = ((duration * fr).round() as i64).max(1);
                let start_frame = first_frame + lead_in;
                script.maneuvers.push(Maneuver::LaneChange {
                    start_frame,
                    end_frame: start_frame + n,
                    lanes: step,
                });
                script.last_frame = start_frame + n + lead_out;
            } else if i < cs.lane_changes + cs.aborted {
                let toward = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let amplitude = toward * rng.random_range(0.4..0.6) * 0.5 * spec.road.lane_width;
                let n = secs(rng.random_range(2.5..5.0));
                let start_frame = first_frame + lead_in;
                script.maneuvers.push(Maneuver::Excursion {
                    start_frame,
                    end_frame: start_frame + n,
                    amplitude,
                });
                script.last_frame = start_frame + n + lead_out;
            } else {
                script.last_frame = first_frame + secs(rng.random_range(8.0..20.0));
                if spec.weave_amplitude > 0.0 {
                    script.weave = Some(Weave {
                        amplitude: spec.weave_amplitude * rng.random_range(0.5..1.0),
                        period: rng.random_range(6.0..12.0),
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                    });
                }
            }
            scripts.push(script);
        }
    }

    let noise = NoiseSpec {
        lateral_velocity: spec.lateral_velocity_noise,
        lateral_position: spec.lateral_position_noise,
        lateral_acceleration: spec.lateral_acceleration_noise,
    };
    let recording = render_recording(
        &spec.recording_id,
        &spec.location_id,
        fr,
        &spec.road,
        &scripts,
        &noise,
        rng.random(),
    );
    let planted = planted_events(&spec.recording_id, fr, &spec.road, &scripts);
    Ok(SyntheticRecording {
        recording,
        scripts,
        planted,
    })
}
