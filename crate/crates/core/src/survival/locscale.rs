use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::special::{inverse_mills, ln_norm_pdf, ln_norm_sf, norm_quantile, sigmoid, softplus};
use super::{DistributionParams, SurvivalError};

/// Distribution of the standardized error `W` in `ln T = α + σW`.
///
/// `Weibull` is the minimum extreme-value law, `Lognormal` the standard
/// normal and `Loglogistic` the standard logistic. The names follow the
/// duration family each one induces on `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLaw {
    Weibull,
    Lognormal,
    Loglogistic,
}

impl ErrorLaw {
    pub const ALL: [ErrorLaw; 3] = [
        ErrorLaw::Weibull,
        ErrorLaw::Lognormal,
        ErrorLaw::Loglogistic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorLaw::Weibull => "weibull",
            ErrorLaw::Lognormal => "lognormal",
            ErrorLaw::Loglogistic => "loglogistic",
        }
    }

    /// Log density of `W` at `z`.
    pub fn ln_density(self, z: f64) -> f64 {
        match self {
            ErrorLaw::Weibull => z - z.exp(),
            ErrorLaw::Lognormal => ln_norm_pdf(z),
            ErrorLaw::Loglogistic => z - 2.0 * softplus(z),
        }
    }

    /// Log of `P(W > z)`.
    pub fn ln_survival(self, z: f64) -> f64 {
        match self {
            ErrorLaw::Weibull => -z.exp(),
            ErrorLaw::Lognormal => ln_norm_sf(z),
            ErrorLaw::Loglogistic => -softplus(z),
        }
    }

    /// Derivative of [`Self::ln_density`] in `z`.
    pub fn ln_density_slope(self, z: f64) -> f64 {
        match self {
            ErrorLaw::Weibull => 1.0 - z.exp(),
            ErrorLaw::Lognormal => -z,
            ErrorLaw::Loglogistic => 1.0 - 2.0 * sigmoid(z),
        }
    }

    /// Derivative of [`Self::ln_survival`] in `z`.
    pub fn ln_survival_slope(self, z: f64) -> f64 {
        match self {
            ErrorLaw::Weibull => -z.exp(),
            ErrorLaw::Lognormal => -inverse_mills(z),
            ErrorLaw::Loglogistic => -sigmoid(z),
        }
    }

    /// Quantile of `W`.
    pub fn quantile(self, q: f64) -> f64 {
        match self {
            ErrorLaw::Weibull => (-(-q).ln_1p()).ln(),
            ErrorLaw::Lognormal => norm_quantile(q),
            ErrorLaw::Loglogistic => (q / (1.0 - q)).ln(),
        }
    }

    pub fn median(self) -> f64 {
        self.quantile(0.5)
    }

    /// Duration family induced by location `α` and scale `σ` on the log-time axis.
    pub fn to_params(self, location: f64, scale: f64) -> Result<DistributionParams, SurvivalError> {
        match self {
            ErrorLaw::Weibull => DistributionParams::weibull((-location).exp(), 1.0 / scale),
            ErrorLaw::Lognormal => DistributionParams::lognormal(location, scale),
            ErrorLaw::Loglogistic => {
                DistributionParams::loglogistic((-location).exp(), 1.0 / scale)
            }
        }
    }

    /// Inverse of [`Self::to_params`]: `(law, α, σ)` for families that are
    /// location-scale on log time.
    pub fn from_params(params: &DistributionParams) -> Option<(ErrorLaw, f64, f64)> {
        match *params {
            DistributionParams::Weibull { rate, shape } => {
                Some((ErrorLaw::Weibull, -rate.ln(), 1.0 / shape))
            }
            DistributionParams::Lognormal { mu, sigma } => Some((ErrorLaw::Lognormal, mu, sigma)),
            DistributionParams::Loglogistic { rate, shape } => {
                Some((ErrorLaw::Loglogistic, -rate.ln(), 1.0 / shape))
            }
            DistributionParams::Exponential { .. } | DistributionParams::GenGamma { .. } => None,
        }
    }

    /// Log-likelihood contribution of one row with log duration `y`, linear
    /// predictor `eta` and log scale, plus its derivatives in `eta` and the
    /// log scale. Observed rows include the `-ln t` Jacobian so the value is
    /// a density of `T`, not of `ln T`.
    pub fn contribution(self, y: f64, eta: f64, log_scale: f64, observed: bool) -> (f64, f64, f64) {
        let scale = log_scale.exp();
        let z = (y - eta) / scale;
        if observed {
            let g = self.ln_density_slope(z);
            (self.ln_density(z) - log_scale - y, -g / scale, -g * z - 1.0)
        } else {
            let g = self.ln_survival_slope(z);
            (self.ln_survival(z), -g / scale, -g * z)
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorLaw {
    type Err = SurvivalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weibull" | "weibullaft" => Ok(ErrorLaw::Weibull),
            "lognormal" | "lognormalaft" => Ok(ErrorLaw::Lognormal),
            "loglogistic" | "loglogisticaft" => Ok(ErrorLaw::Loglogistic),
            _ => Err(SurvivalError::UnknownFamily(s.to_string())),
        }
    }
}
