use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExtractionError, LaneChangeEvent};
use crate::ingest::VehicleClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Duration,
    Speed,
    TimeHeadway,
    DistanceHeadway,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::Duration,
        Variable::Speed,
        Variable::TimeHeadway,
        Variable::DistanceHeadway,
    ];

    /// Column name in the event CSV, also used as the covariate name.
    pub fn column(self) -> &'static str {
        match self {
            Variable::Duration => "duration",
            Variable::Speed => "speed",
            Variable::TimeHeadway => "thw",
            Variable::DistanceHeadway => "dhw",
        }
    }

    pub fn value(self, event: &LaneChangeEvent) -> Option<f64> {
        match self {
            Variable::Duration => Some(event.duration),
            Variable::Speed => Some(event.speed_at_start),
            Variable::TimeHeadway => event.time_headway_at_start,
            Variable::DistanceHeadway => event.distance_headway_at_start,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "duration" | "lcd" => Ok(Variable::Duration),
            "speed" => Ok(Variable::Speed),
            "thw" | "time_headway" | "timeheadway" => Ok(Variable::TimeHeadway),
            "dhw" | "distance_headway" | "distanceheadway" => Ok(Variable::DistanceHeadway),
            other => Err(format!(
                "unknown variable {other:?} (expected duration, speed, thw or dhw)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub variable: Variable,
    pub class: Option<VehicleClass>,
    pub count: usize,
    /// Events in the class selection that lack this variable.
    pub excluded: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub std: f64,
    pub minimum: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub maximum: f64,
}

/// Linear interpolation between order statistics at rank `(n - 1) q`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(
    events: &[LaneChangeEvent],
    variable: Variable,
    class_filter: Option<VehicleClass>,
) -> Result<DescriptiveStats, ExtractionError> {
    let selected = events
        .iter()
        .filter(|e| class_filter.is_none_or(|c| e.vehicle_class == c));
    let mut excluded = 0;
    let mut values = Vec::new();
    for e in selected {
        match variable.value(e) {
            Some(v) => values.push(v),
            None => excluded += 1,
        }
    }
    if values.is_empty() {
        return Err(ExtractionError::EmptySelection {
            variable,
            class: class_filter.map_or("all vehicles".to_string(), |c| c.to_string()),
        });
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(DescriptiveStats {
        variable,
        class: class_filter,
        count: n,
        excluded,
        mean,
        std,
        minimum: values[0],
        p25: percentile(&values, 0.25),
        p50: percentile(&values, 0.5),
        p75: percentile(&values, 0.75),
        maximum: values[n - 1],
    })
}
