use serde::{Deserialize, Serialize};

use crate::survival::Sample;

/// Product-limit estimate of the survival function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    /// Distinct observed event times, ascending.
    pub times: Vec<f64>,
    /// `S(t)` just after each event time.
    pub survival: Vec<f64>,
    /// Number at risk just before each event time.
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KaplanMeierCurve {
    /// Right-continuous step function; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&e| e <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

pub fn kaplan_meier(sample: &Sample) -> KaplanMeierCurve {
    let mut rows: Vec<(f64, bool)> = sample.iter().collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = KaplanMeierCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut at_risk = rows.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let mut deaths = 0;
        let mut leaving = 0;
        while i < rows.len() && rows[i].0 == t {
            if rows[i].1 {
                deaths += 1;
            }
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(deaths);
        }
        at_risk -= leaving;
    }
    curve
}
