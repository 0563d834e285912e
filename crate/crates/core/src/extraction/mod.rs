//! Lane-change detection from lateral kinematics.
//!
//! A candidate opens where the smoothed lateral velocity exceeds the
//! threshold and stays open while it remains above the hysteresis level with
//! the same sign. Endpoints are then walked outward on the raw signal to the
//! first frame whose signed velocity falls to the noise floor, so the event
//! spans the whole lateral excursion.

mod events_io;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{LaneId, Recording, TrackFrame, VehicleClass, VehicleId};

pub use events_io::{export_events, import_events, read_events, write_events, EVENT_HEADER};
pub use stats::{percentile, summarize, DescriptiveStats, Variable};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("recording {recording}: no lane boundaries available")]
    NoLaneBoundaries { recording: String },
    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),
    #[error("no events with a {variable} value for {class}")]
    EmptySelection { variable: Variable, class: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event file schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("event file row {row}, column {column:?}: {reason}")]
    MalformedRow {
        row: usize,
        column: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionParams {
    /// m/s
    pub lateral_speed_threshold: f64,
    pub hysteresis_fraction: f64,
    /// Width of the centered moving average, seconds.
    pub smoothing_window: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub require_lane_id_change: bool,
    /// Endpoint floor in units of the estimated lateral-velocity noise.
    pub endpoint_noise_factor: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            lateral_speed_threshold: 0.20,
            hysteresis_fraction: 0.5,
            smoothing_window: 0.4,
            min_duration: 1.0,
            max_duration: 16.0,
            require_lane_id_change: true,
            endpoint_noise_factor: 1.5,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        let bad = |m: String| Err(ExtractionError::InvalidParams(m));
        if !(self.lateral_speed_threshold > 0.0 && self.lateral_speed_threshold.is_finite()) {
            return bad(format!(
                "lateral_speed_threshold must be positive, got {}",
                self.lateral_speed_threshold
            ));
        }
        if !(self.hysteresis_fraction > 0.0 && self.hysteresis_fraction <= 1.0) {
            return bad(format!(
                "hysteresis_fraction must lie in (0, 1], got {}",
                self.hysteresis_fraction
            ));
        }
        if !(self.smoothing_window >= 0.0 && self.smoothing_window.is_finite()) {
            return bad(format!(
                "smoothing_window must be non-negative, got {}",
                self.smoothing_window
            ));
        }
        if !(self.min_duration >= 0.0 && self.min_duration < self.max_duration) {
            return bad(format!(
                "need 0 <= min_duration < max_duration, got [{}, {}]",
                self.min_duration, self.max_duration
            ));
        }
        if !(self.endpoint_noise_factor >= 0.0 && self.endpoint_noise_factor.is_finite()) {
            return bad(format!(
                "endpoint_noise_factor must be non-negative, got {}",
                self.endpoint_noise_factor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Left => "Left",
            Direction::Right => "Right",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Image coordinates: lateral position grows to the right of a vehicle
/// moving toward negative x, and to its left when moving toward positive x.
pub fn direction_of(longitudinal_velocity: f64, lateral_displacement: f64) -> Direction {
    let sign = if longitudinal_velocity < 0.0 {
        -1.0
    } else {
        1.0
    };
    if sign * lateral_displacement < 0.0 {
        Direction::Left
    } else {
        Direction::Right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub recording_id: String,
    pub vehicle_id: VehicleId,
    pub vehicle_class: VehicleClass,
    pub direction: Direction,
    pub start_frame: i64,
    pub end_frame: i64,
    /// seconds
    pub duration: f64,
    pub speed_at_start: f64,
    pub time_headway_at_start: Option<f64>,
    pub distance_headway_at_start: Option<f64>,
    pub origin_lane: LaneId,
    pub target_lane: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropReason {
    NoBoundaryCrossing,
    NoLaneIdChange,
    DurationOutOfRange,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::NoBoundaryCrossing => "no_boundary_crossing",
            DropReason::NoLaneIdChange => "no_lane_id_change",
            DropReason::DurationOutOfRange => "duration_out_of_range",
        })
    }
}

/// A kept event that crossed more than one boundary without a velocity dip
/// to split on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepFlag {
    pub recording_id: String,
    pub vehicle_id: VehicleId,
    pub start_frame: i64,
    pub boundaries_crossed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub events: Vec<LaneChangeEvent>,
    pub candidates: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub flagged_sweeps: Vec<SweepFlag>,
}

impl ExtractionReport {
    pub fn count_by_class(&self) -> BTreeMap<VehicleClass, usize> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            *out.entry(e.vehicle_class).or_insert(0) += 1;
        }
        out
    }

    pub fn merge(&mut self, other: ExtractionReport) {
        self.events.extend(other.events);
        self.candidates += other.candidates;
        for (k, v) in other.dropped {
            *self.dropped.entry(k).or_insert(0) += v;
        }
        self.flagged_sweeps.extend(other.flagged_sweeps);
        sort_events(&mut self.events);
    }
}

pub fn sort_events(events: &mut [LaneChangeEvent]) {
    events.sort_by(|a, b| {
        (&a.recording_id, a.vehicle_id, a.start_frame).cmp(&(
            &b.recording_id,
            b.vehicle_id,
            b.start_frame,
        ))
    });
}

pub fn detect_lane_changes(
    rec: &Recording,
    params: &ExtractionParams,
) -> Result<Vec<LaneChangeEvent>, ExtractionError> {
    detect_lane_changes_with_report(rec, params).map(|r| r.events)
}

pub fn detect_lane_changes_with_report(
    rec: &Recording,
    params: &ExtractionParams,
) -> Result<ExtractionReport, ExtractionError> {
    params.validate()?;
    if rec.meta.lane_boundaries.iter().all(Vec::is_empty) {
        return Err(ExtractionError::NoLaneBoundaries {
            recording: rec.meta.recording_id.clone(),
        });
    }
    let boundaries: Vec<f64> = rec.meta.lane_boundaries.iter().flatten().copied().collect();
    let parts: Vec<ExtractionReport> = rec
        .trajectories
        .par_iter()
        .map(|(&vehicle, frames)| {
            let class = rec.class_of(vehicle).unwrap_or(VehicleClass::PassengerCar);
            let mut report = ExtractionReport::default();
            for segment in contiguous_segments(frames) {
                let ctx = VehicleContext {
                    recording_id: &rec.meta.recording_id,
                    frame_rate: rec.meta.frame_rate,
                    class,
                    boundaries: &boundaries,
                    params,
                };
                ctx.detect(segment, &mut report);
            }
            report
        })
        .collect();
    let mut report = ExtractionReport::default();
    for part in parts {
        report.merge(part);
    }
    Ok(report)
}

fn contiguous_segments(frames: &[TrackFrame]) -> Vec<&[TrackFrame]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i].frame != frames[i - 1].frame + 1 {
            if i > start {
                out.push(&frames[start..i]);
            }
            start = i;
        }
    }
    out
}

/// Centered moving average with `half` frames on each side, truncated at
/// the ends.
pub fn moving_average(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Robust noise scale from the residual of the moving average.
fn noise_scale(raw: &[f64], smooth: &[f64], half: usize) -> f64 {
    let mut dev: Vec<f64> = raw.iter().zip(smooth).map(|(r, s)| r - s).collect();
    if dev.is_empty() {
        return 0.0;
    }
    let med = median_in_place(&mut dev);
    for d in dev.iter_mut() {
        *d = (*d - med).abs();
    }
    let mad = median_in_place(&mut dev);
    let width = (2 * half + 1) as f64;
    let shrink = if half == 0 {
        1.0
    } else {
        (1.0 - 1.0 / width).sqrt()
    };
    1.4826 * mad / shrink
}

/// Half-width of the endpoint fit window, seconds.
const ENDPOINT_FIT_WINDOW: f64 = 0.6;

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Start,
    End,
}

/// Least-squares fit of a hinge `b * max(0, k - c)` (start side, mirrored
/// for the end side) to the signed raw velocity around `guess`; returns the
/// best hinge frame `c`. The window never reaches past `inner` into the
/// body of the maneuver.
fn hinge_endpoint(y: &[f64], guess: usize, half: usize, inner: usize, side: Side) -> usize {
    let n = y.len();
    let (lo, hi) = match side {
        Side::Start => (
            guess.saturating_sub(half),
            (guess + half).min(inner).min(n - 1),
        ),
        Side::End => (
            guess.saturating_sub(half).max(inner),
            (guess + half).min(n - 1),
        ),
    };
    if hi < lo + 3 {
        return guess;
    }
    let candidates = match side {
        Side::Start => lo..=hi - 2,
        Side::End => lo + 2..=hi,
    };
    let mut best = (f64::INFINITY, guess);
    for c in candidates {
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (k, &v) in y.iter().enumerate().take(hi + 1).skip(lo) {
            let x = match side {
                Side::Start => k.saturating_sub(c) as f64,
                Side::End => c.saturating_sub(k) as f64,
            };
            sxy += x * v;
            sxx += x * x;
            syy += v * v;
        }
        if sxx == 0.0 || sxy <= 0.0 {
            continue;
        }
        let sse = syy - sxy * sxy / sxx;
        if sse < best.0 {
            best = (sse, c);
        }
    }
    best.1
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    start: usize,
    end: usize,
    sign: f64,
}

struct VehicleContext<'a> {
    recording_id: &'a str,
    frame_rate: f64,
    class: VehicleClass,
    boundaries: &'a [f64],
    params: &'a ExtractionParams,
}

impl VehicleContext<'_> {
    fn detect(&self, frames: &[TrackFrame], report: &mut ExtractionReport) {
        let n = frames.len();
        if n < 3 {
            return;
        }
        let p = self.params;
        let raw: Vec<f64> = frames.iter().map(|f| f.lateral_velocity).collect();
        let half = (p.smoothing_window * self.frame_rate / 2.0).round() as usize;
        let smooth = moving_average(&raw, half);
        let floor = p.endpoint_noise_factor * noise_scale(&raw, &smooth, half);
        let threshold = p.lateral_speed_threshold;
        let keep_level = p.hysteresis_fraction * threshold;
        let fit_half = ((ENDPOINT_FIT_WINDOW * self.frame_rate).round() as usize).max(3);

        let mut intervals: Vec<Interval> = Vec::new();
        let mut i = 0;
        while i < n {
            if smooth[i].abs() <= threshold {
                i += 1;
                continue;
            }
            let sign = smooth[i].signum();
            let mut j = i;
            while j + 1 < n && sign * smooth[j + 1] > keep_level {
                j += 1;
            }
            let mut start = i;
            while start > 0 && sign * raw[start] > floor {
                start -= 1;
            }
            let mut end = j;
            while end + 1 < n && sign * raw[end] > floor {
                end += 1;
            }
            let signed: Vec<f64> = raw.iter().map(|v| sign * v).collect();
            let mid = (start + end) / 2;
            let start = hinge_endpoint(&signed, start, fit_half, mid, Side::Start);
            let end = hinge_endpoint(&signed, end, fit_half, mid, Side::End);
            let prev = intervals.last().copied();
            match prev {
                Some(last) if last.sign == sign && start <= last.end => {
                    intervals.last_mut().unwrap().end = last.end.max(end);
                }
                Some(last) if start < last.end => intervals.push(Interval {
                    start: last.end,
                    end: end.max(last.end),
                    sign,
                }),
                _ => intervals.push(Interval { start, end, sign }),
            }
            i = j + 1;
        }

        let ys: Vec<f64> = frames.iter().map(|f| f.lateral_position).collect();
        for iv in intervals {
            for (piece, flagged) in self.split_sweep(iv, &ys, &smooth) {
                report.candidates += 1;
                match self.accept(frames, piece) {
                    Ok(event) => {
                        if let Some(crossed) = flagged {
                            report.flagged_sweeps.push(SweepFlag {
                                recording_id: self.recording_id.to_string(),
                                vehicle_id: event.vehicle_id,
                                start_frame: event.start_frame,
                                boundaries_crossed: crossed,
                            });
                        }
                        report.events.push(event);
                    }
                    Err(reason) => *report.dropped.entry(reason).or_insert(0) += 1,
                }
            }
        }
    }

    fn crossed(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut out: Vec<f64> = self
            .boundaries
            .iter()
            .copied()
            .filter(|&m| lo < m && m < hi)
            .collect();
        out.sort_by(f64::total_cmp);
        if b < a {
            out.reverse();
        }
        out
    }

    /// Splits an interval that crosses several boundaries at the slowest
    /// point between successive crossings, when that point is a genuine
    /// interior minimum of the smoothed lateral speed.
    fn split_sweep(
        &self,
        iv: Interval,
        ys: &[f64],
        smooth: &[f64],
    ) -> Vec<(Interval, Option<usize>)> {
        let marks = self.crossed(ys[iv.start], ys[iv.end]);
        if marks.len() < 2 {
            return vec![(iv, None)];
        }
        let crossing_frames: Vec<usize> = marks
            .iter()
            .map(|&m| {
                (iv.start..=iv.end)
                    .find(|&k| (ys[k] - m) * (ys[iv.start] - m) < 0.0)
                    .unwrap_or(iv.end)
            })
            .collect();
        let mut cuts = Vec::new();
        for w in crossing_frames.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a + 1 {
                continue;
            }
            let speed = |k: usize| iv.sign * smooth[k];
            let m = (a + 1..b)
                .min_by(|&x, &y| speed(x).total_cmp(&speed(y)))
                .unwrap();
            if speed(m) < speed(a) && speed(m) < speed(b) {
                cuts.push(m);
            }
        }
        if cuts.len() + 1 < marks.len() {
            return vec![(iv, Some(marks.len()))];
        }
        let mut out = Vec::new();
        let mut start = iv.start;
        for c in cuts {
            out.push((
                Interval {
                    start,
                    end: c,
                    sign: iv.sign,
                },
                None,
            ));
            start = c;
        }
        out.push((
            Interval {
                start,
                end: iv.end,
                sign: iv.sign,
            },
            None,
        ));
        out
    }

    fn accept(&self, frames: &[TrackFrame], iv: Interval) -> Result<LaneChangeEvent, DropReason> {
        let first = &frames[iv.start];
        let last = &frames[iv.end];
        if self
            .crossed(first.lateral_position, last.lateral_position)
            .is_empty()
        {
            return Err(DropReason::NoBoundaryCrossing);
        }
        if self.params.require_lane_id_change && first.lane_id == last.lane_id {
            return Err(DropReason::NoLaneIdChange);
        }
        let duration = (last.frame - first.frame) as f64 / self.frame_rate;
        if !(duration > 0.0
            && duration >= self.params.min_duration
            && duration <= self.params.max_duration)
        {
            return Err(DropReason::DurationOutOfRange);
        }
        Ok(LaneChangeEvent {
            recording_id: self.recording_id.to_string(),
            vehicle_id: first.vehicle_id,
            vehicle_class: self.class,
            direction: direction_of(
                first.longitudinal_velocity,
                last.lateral_position - first.lateral_position,
            ),
            start_frame: first.frame,
            end_frame: last.frame,
            duration,
            speed_at_start: first.longitudinal_velocity.abs(),
            time_headway_at_start: first.time_headway,
            distance_headway_at_start: first.distance_headway,
            origin_lane: first.lane_id,
            target_lane: last.lane_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_truncates_at_edges() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(moving_average(&v, 1), vec![1.5, 2.0, 3.0, 4.0, 4.5]);
        assert_eq!(moving_average(&v, 0), v.to_vec());
    }

    #[test]
    fn params_validation() {
        assert!(ExtractionParams::default().validate().is_ok());
        let p = ExtractionParams {
            min_duration: 5.0,
            max_duration: 4.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(ExtractionError::InvalidParams(_))
        ));
        let p = ExtractionParams {
            hysteresis_fraction: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn direction_convention() {
        assert_eq!(direction_of(30.0, -3.75), Direction::Left);
        assert_eq!(direction_of(30.0, 3.75), Direction::Right);
        assert_eq!(direction_of(-30.0, 3.75), Direction::Left);
        assert_eq!(direction_of(-30.0, -3.75), Direction::Right);
    }

    #[test]
    fn noise_scale_of_white_noise() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let raw: Vec<f64> = (0..20_000).map(|_| normal.sample(&mut rng)).collect();
        let smooth = moving_average(&raw, 5);
        let s = noise_scale(&raw, &smooth, 5);
        assert!((s / 0.02 - 1.0).abs() < 0.03, "{s}");
    }
}
