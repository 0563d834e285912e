//! Parametric duration families.
//!
//! Five families are supported, all parameterized the way the duration
//! literature writes them:
//!
//! | family      | survival `S(t)`                         | parameters |
//! |-------------|-----------------------------------------|------------|
//! | Exponential | `exp(-λt)`                              | λ          |
//! | Weibull     | `exp(-(λt)^p)`                          | λ, p       |
//! | Lognormal   | `1 - Φ((ln t - μ) / σ)`                 | μ, σ       |
//! | Loglogistic | `1 / (1 + (λt)^p)`                      | λ, p       |
//! | GenGamma    | `Q(k, (λt)^p)` (upper regularized Γ)    | λ, p, k    |
//!
//! Every family except the generalized gamma is also a location-scale model
//! on the log-time axis, `ln T = α + σW`, with `α = -ln λ` and `σ = 1/p` for
//! Weibull and Loglogistic, and `α = μ` for Lognormal. See [`ErrorLaw`].
//!
//! The generalized gamma reduces to the Weibull when `k = 1` and to the
//! Exponential when `k = p = 1`.

mod locscale;
mod sample;
pub mod special;

pub use locscale::ErrorLaw;
pub use sample::{draw_duration, sample_durations, Sample};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurvivalError {
    #[error("argument {value} outside the domain of {operation}")]
    Domain { operation: &'static str, value: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("survival probability underflowed at t = {t}; hazard is effectively infinite")]
    Underflow { t: f64 },
    #[error("sample is empty")]
    EmptySample,
    #[error("durations and observed flags differ in length ({durations} vs {observed})")]
    LengthMismatch { durations: usize, observed: usize },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
}

pub type Result<T> = std::result::Result<T, SurvivalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Weibull,
    Lognormal,
    Loglogistic,
    #[serde(rename = "gengamma")]
    GenGamma,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Exponential,
        Family::Weibull,
        Family::Lognormal,
        Family::Loglogistic,
        Family::GenGamma,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Exponential => 1,
            Family::Weibull | Family::Lognormal | Family::Loglogistic => 2,
            Family::GenGamma => 3,
        }
    }

    /// Name as used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Weibull => "weibull",
            Family::Lognormal => "lognormal",
            Family::Loglogistic => "loglogistic",
            Family::GenGamma => "gengamma",
        }
    }

    /// The location-scale error law behind this family, if it has one.
    pub fn error_law(self) -> Option<ErrorLaw> {
        match self {
            Family::Weibull => Some(ErrorLaw::Weibull),
            Family::Lognormal => Some(ErrorLaw::Lognormal),
            Family::Loglogistic => Some(ErrorLaw::Loglogistic),
            Family::Exponential | Family::GenGamma => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SurvivalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(Family::Exponential),
            "weibull" => Ok(Family::Weibull),
            "lognormal" => Ok(Family::Lognormal),
            "loglogistic" => Ok(Family::Loglogistic),
            "gengamma" | "generalized_gamma" | "generalized-gamma" => Ok(Family::GenGamma),
            _ => Err(SurvivalError::UnknownFamily(s.to_string())),
        }
    }
}

/// Parameters of one duration family. Rates are in 1/seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DistributionParams {
    Exponential {
        rate: f64,
    },
    Weibull {
        rate: f64,
        shape: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Loglogistic {
        rate: f64,
        shape: f64,
    },
    #[serde(rename = "gengamma")]
    GenGamma {
        rate: f64,
        shape: f64,
        k: f64,
    },
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SurvivalError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl DistributionParams {
    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn weibull(rate: f64, shape: f64) -> Result<Self> {
        positive("rate", rate)?;
        positive("shape", shape)?;
        Ok(Self::Weibull { rate, shape })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(SurvivalError::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite",
            });
        }
        positive("sigma", sigma)?;
        Ok(Self::Lognormal { mu, sigma })
    }

    pub fn loglogistic(rate: f64, shape: f64) -> Result<Self> {
        positive("rate", rate)?;
        positive("shape", shape)?;
        Ok(Self::Loglogistic { rate, shape })
    }

    pub fn gengamma(rate: f64, shape: f64, k: f64) -> Result<Self> {
        positive("rate", rate)?;
        positive("shape", shape)?;
        positive("k", k)?;
        Ok(Self::GenGamma { rate, shape, k })
    }

    /// Re-checks the positivity constraints, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } => Self::exponential(rate).map(drop),
            Self::Weibull { rate, shape } => Self::weibull(rate, shape).map(drop),
            Self::Lognormal { mu, sigma } => Self::lognormal(mu, sigma).map(drop),
            Self::Loglogistic { rate, shape } => Self::loglogistic(rate, shape).map(drop),
            Self::GenGamma { rate, shape, k } => Self::gengamma(rate, shape, k).map(drop),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Exponential { .. } => Family::Exponential,
            Self::Weibull { .. } => Family::Weibull,
            Self::Lognormal { .. } => Family::Lognormal,
            Self::Loglogistic { .. } => Family::Loglogistic,
            Self::GenGamma { .. } => Family::GenGamma,
        }
    }

    /// Coordinates on the unconstrained scale used for fitting: the log of
    /// every positive parameter, μ as is.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        match *self {
            Self::Exponential { rate } => vec![rate.ln()],
            Self::Weibull { rate, shape } | Self::Loglogistic { rate, shape } => {
                vec![rate.ln(), shape.ln()]
            }
            Self::Lognormal { mu, sigma } => vec![mu, sigma.ln()],
            Self::GenGamma { rate, shape, k } => vec![rate.ln(), shape.ln(), k.ln()],
        }
    }

    pub fn from_unconstrained(family: Family, theta: &[f64]) -> Result<Self> {
        if theta.len() != family.n_params() {
            return Err(SurvivalError::InvalidParameter {
                name: "theta",
                value: theta.len() as f64,
                reason: "wrong number of coordinates for family",
            });
        }
        match family {
            Family::Exponential => Self::exponential(theta[0].exp()),
            Family::Weibull => Self::weibull(theta[0].exp(), theta[1].exp()),
            Family::Lognormal => Self::lognormal(theta[0], theta[1].exp()),
            Family::Loglogistic => Self::loglogistic(theta[0].exp(), theta[1].exp()),
            Family::GenGamma => Self::gengamma(theta[0].exp(), theta[1].exp(), theta[2].exp()),
        }
    }

    /// Natural parameter values in a fixed order, with names.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Self::Exponential { rate } => vec![("rate", rate)],
            Self::Weibull { rate, shape } | Self::Loglogistic { rate, shape } => {
                vec![("rate", rate), ("shape", shape)]
            }
            Self::Lognormal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            Self::GenGamma { rate, shape, k } => vec![("rate", rate), ("shape", shape), ("k", k)],
        }
    }

    /// Log density at `t > 0`.
    pub fn ln_pdf(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t <= 0.0 {
            return Err(SurvivalError::Domain {
                operation: "pdf",
                value: t,
            });
        }
        Ok(self.ln_pdf_unchecked(t))
    }

    pub(crate) fn ln_pdf_unchecked(&self, t: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => rate.ln() - rate * t,
            Self::Weibull { rate, shape } => {
                let u = (rate * t).ln();
                shape.ln() + rate.ln() + (shape - 1.0) * u - (shape * u).exp()
            }
            Self::Lognormal { mu, sigma } => {
                let z = (t.ln() - mu) / sigma;
                special::ln_norm_pdf(z) - sigma.ln() - t.ln()
            }
            Self::Loglogistic { rate, shape } => {
                let u = (rate * t).ln();
                rate.ln() + shape.ln() + (shape - 1.0) * u - 2.0 * special::softplus(shape * u)
            }
            Self::GenGamma { rate, shape, k } => {
                let u = (rate * t).ln();
                shape.ln() + rate.ln() + (shape * k - 1.0) * u
                    - (shape * u).exp()
                    - special::ln_gamma(k)
            }
        }
    }

    /// Log survival at `t ≥ 0`.
    pub fn ln_survival(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(SurvivalError::Domain {
                operation: "survival",
                value: t,
            });
        }
        Ok(self.ln_survival_unchecked(t))
    }

    pub(crate) fn ln_survival_unchecked(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        if t.is_infinite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Exponential { rate } => -rate * t,
            Self::Weibull { rate, shape } => -(shape * (rate * t).ln()).exp(),
            Self::Lognormal { mu, sigma } => special::ln_norm_sf((t.ln() - mu) / sigma),
            Self::Loglogistic { rate, shape } => -special::softplus(shape * (rate * t).ln()),
            Self::GenGamma { rate, shape, k } => {
                special::ln_gamma_q(k, (shape * (rate * t).ln()).exp())
            }
        }
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        self.ln_pdf(t).map(f64::exp)
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        self.ln_survival(t).map(f64::exp)
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        // 1 - S computed as -expm1(ln S) keeps precision in the lower tail
        self.ln_survival(t).map(|ls| -ls.exp_m1())
    }

    /// Hazard `h(t) = f(t) / S(t)`. Closed forms where they exist, the
    /// log-space ratio otherwise.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t <= 0.0 {
            return Err(SurvivalError::Domain {
                operation: "hazard",
                value: t,
            });
        }
        match *self {
            Self::Exponential { rate } => Ok(rate),
            Self::Weibull { rate, shape } => {
                Ok((shape.ln() + shape * rate.ln() + (shape - 1.0) * t.ln()).exp())
            }
            Self::Loglogistic { rate, shape } => {
                let u = (rate * t).ln();
                Ok(
                    (rate.ln() + shape.ln() + (shape - 1.0) * u - special::softplus(shape * u))
                        .exp(),
                )
            }
            Self::Lognormal { .. } | Self::GenGamma { .. } => {
                let ls = self.ln_survival_unchecked(t);
                if ls == f64::NEG_INFINITY {
                    return Err(SurvivalError::Underflow { t });
                }
                Ok((self.ln_pdf_unchecked(t) - ls).exp())
            }
        }
    }

    /// `H(t) = -ln S(t)`.
    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        self.ln_survival(t).map(|ls| 0.0 - ls)
    }

    /// Quantile of the duration distribution: the `t` with `F(t) = q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(SurvivalError::Domain {
                operation: "quantile",
                value: q,
            });
        }
        // -ln(1 - q), the cumulative hazard at the quantile
        let target_h = -(-q).ln_1p();
        Ok(match *self {
            Self::Exponential { rate } => target_h / rate,
            Self::Weibull { rate, shape } => target_h.powf(1.0 / shape) / rate,
            Self::Loglogistic { rate, shape } => (q / (1.0 - q)).powf(1.0 / shape) / rate,
            Self::Lognormal { mu, sigma } => (mu + sigma * special::norm_quantile(q)).exp(),
            Self::GenGamma { rate, shape, k } => {
                gamma_x_for_cumhaz(k, target_h).powf(1.0 / shape) / rate
            }
        })
    }

    /// Median survival time.
    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("0.5 is inside (0, 1)")
    }

    pub fn log_likelihood(&self, sample: &Sample) -> f64 {
        sample
            .iter()
            .map(|(t, observed)| {
                if observed {
                    self.ln_pdf_unchecked(t)
                } else {
                    self.ln_survival_unchecked(t)
                }
            })
            .sum()
    }
}

/// Solves `-ln Q(k, x) = h` for `x` by bisection with bracket expansion.
fn gamma_x_for_cumhaz(k: f64, h: f64) -> f64 {
    let cum = |x: f64| -special::ln_gamma_q(k, x);
    let mut lo = 0.0;
    let mut hi = k.max(1.0);
    while cum(hi) < h {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    if lo == 0.0 {
        // tighten the lower end geometrically so relative precision holds
        // for quantiles far below the mode
        let mut probe = hi;
        while probe > f64::MIN_POSITIVE && cum(probe) >= h {
            hi = probe;
            probe *= 0.5;
        }
        lo = probe;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cum(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Log-likelihood of `params` on `sample`: `ln f(t)` for observed rows,
/// `ln S(t)` for right-censored rows.
pub fn log_likelihood(params: &DistributionParams, sample: &Sample) -> f64 {
    params.log_likelihood(sample)
}
