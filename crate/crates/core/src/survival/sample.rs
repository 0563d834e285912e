use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{DistributionParams, Result, SurvivalError};

/// Durations in seconds with right-censoring flags (`true` = event observed).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    durations: Vec<f64>,
    observed: Vec<bool>,
}

impl Sample {
    pub fn new(durations: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if durations.len() != observed.len() {
            return Err(SurvivalError::LengthMismatch {
                durations: durations.len(),
                observed: observed.len(),
            });
        }
        if durations.is_empty() {
            return Err(SurvivalError::EmptySample);
        }
        if let Some(&bad) = durations.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(SurvivalError::Domain {
                operation: "sample",
                value: bad,
            });
        }
        Ok(Self {
            durations,
            observed,
        })
    }

    /// A fully observed sample.
    pub fn observed_only(durations: Vec<f64>) -> Result<Self> {
        let observed = vec![true; durations.len()];
        Self::new(durations, observed)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.durations
            .iter()
            .copied()
            .zip(self.observed.iter().copied())
    }

    /// Every duration multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.durations.iter().map(|t| t * factor).collect(),
            self.observed.clone(),
        )
    }

    pub fn concat(&self, other: &Sample) -> Sample {
        let mut out = self.clone();
        out.durations.extend_from_slice(&other.durations);
        out.observed.extend_from_slice(&other.observed);
        out
    }
}

/// Draws one duration from `params`.
pub fn draw_duration<R: Rng + ?Sized>(params: &DistributionParams, rng: &mut R) -> f64 {
    loop {
        // open interval (0, 1)
        let u: f64 = rng.random();
        if u == 0.0 {
            continue;
        }
        let t = match *params {
            DistributionParams::Exponential { rate } => -u.ln() / rate,
            DistributionParams::Weibull { rate, shape } => (-u.ln()).powf(1.0 / shape) / rate,
            DistributionParams::Loglogistic { rate, shape } => {
                ((1.0 - u) / u).powf(1.0 / shape) / rate
            }
            DistributionParams::Lognormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp()
            }
            DistributionParams::GenGamma { rate, shape, k } => {
                let g = Gamma::new(k, 1.0).expect("k > 0").sample(rng);
                g.powf(1.0 / shape) / rate
            }
        };
        if t > 0.0 && t.is_finite() {
            return t;
        }
    }
}

/// `n` fully observed draws from `params`, deterministic in `seed`.
pub fn sample_durations(params: &DistributionParams, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(SurvivalError::EmptySample);
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let durations = (0..n).map(|_| draw_duration(params, &mut rng)).collect();
    Sample::observed_only(durations)
}
