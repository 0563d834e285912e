//! Maximum-likelihood fits of the duration families, model comparison,
//! Kaplan–Meier estimation and curve tables.

mod compare;
mod curves;
mod km;
pub mod optimize;

pub use compare::{compare_models, ComparisonRow, ComparisonTable, RowOutcome};
pub use curves::{emit_curve_comparison, emit_curves, CurveRow, CurveSource, CurveTable};
pub use km::{kaplan_meier, KaplanMeierCurve};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survival::special::{digamma, ln_gamma, ln_gamma_q};
use crate::survival::{DistributionParams, Family, Sample};
use optimize::{maximize, numerical_hessian, Objective, OptimizerSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{family}: durations have zero spread on the log scale; shape/scale not identifiable")]
    NonIdentifiable { family: Family },
    #[error("{family}: {events} observed events, need at least {needed}")]
    DegenerateSample {
        family: Family,
        events: usize,
        needed: usize,
    },
    #[error("{}: no convergence after {} iterations", .partial.params.family(), .partial.iterations)]
    NoConvergence { partial: Box<FitResult> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub optimizer: OptimizerSettings,
    /// Extra starts, perturbed around the moment-based one.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSettings::default(),
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DistributionParams,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Median survival time of the fitted law, seconds.
    pub mst: f64,
    pub n: usize,
    pub n_params: usize,
    /// Inverse observed information on the unconstrained scale
    /// (log of positive parameters, μ as is). `None` if the Hessian was not
    /// negative definite.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, n_params: usize, n: usize) -> f64 {
    n_params as f64 * (n as f64).ln() - 2.0 * loglik
}

impl FitResult {
    pub fn family(&self) -> Family {
        self.params.family()
    }

    /// Standard errors on the unconstrained scale.
    pub fn unconstrained_standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect())
    }

    /// Delta-method standard errors for the natural parameters, in the order
    /// of [`DistributionParams::named_values`].
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let se = self.unconstrained_standard_errors()?;
        Some(
            self.params
                .named_values()
                .iter()
                .zip(se)
                .map(|((name, value), s)| if *name == "mu" { s } else { value * s })
                .collect(),
        )
    }
}

/// Log-likelihood of one family on the unconstrained scale.
pub(crate) struct FamilyObjective<'a> {
    family: Family,
    sample: &'a Sample,
    log_t: Vec<f64>,
    total_time: f64,
    events: f64,
}

impl<'a> FamilyObjective<'a> {
    pub(crate) fn new(family: Family, sample: &'a Sample) -> Self {
        Self {
            family,
            sample,
            log_t: sample.durations().iter().map(|t| t.ln()).collect(),
            total_time: sample.durations().iter().sum(),
            events: sample.n_events() as f64,
        }
    }

    fn locscale_gradient(
        &self,
        law: crate::survival::ErrorLaw,
        eta: f64,
        log_scale: f64,
    ) -> (f64, f64) {
        let mut d_eta = 0.0;
        let mut d_scale = 0.0;
        for (y, observed) in self.log_t.iter().zip(self.sample.observed()) {
            let (_, de, ds) = law.contribution(*y, eta, log_scale, *observed);
            d_eta += de;
            d_scale += ds;
        }
        (d_eta, d_scale)
    }

    fn gengamma_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (a, b, c) = (theta[0], theta[1], theta[2]);
        let p = b.exp();
        let k = c.exp();
        let psi = digamma(k);
        let lgk = ln_gamma(k);
        let mut grad = [0.0; 3];
        for (y, observed) in self.log_t.iter().zip(self.sample.observed()) {
            let u = a + y;
            let ln_x = p * u;
            let x = ln_x.exp();
            if *observed {
                grad[0] += p * k - p * x;
                grad[1] += 1.0 + p * u * (k - x);
                grad[2] += k * (p * u - psi);
            } else {
                let lq = ln_gamma_q(k, x);
                // x · ∂ln Q/∂x
                let x_dlq = -(k * ln_x - x - lgk - lq).exp();
                grad[0] += p * x_dlq;
                grad[1] += p * u * x_dlq;
                let h = 1e-5;
                let up = ln_gamma_q((c + h).exp(), x);
                let down = ln_gamma_q((c - h).exp(), x);
                grad[2] += (up - down) / (2.0 * h);
            }
        }
        grad.to_vec()
    }
}

impl Objective for FamilyObjective<'_> {
    fn dim(&self) -> usize {
        self.family.n_params()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        match DistributionParams::from_unconstrained(self.family, theta) {
            Ok(params) => {
                let v = params.log_likelihood(self.sample);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        match self.family {
            Family::Exponential => {
                vec![self.events - theta[0].exp() * self.total_time]
            }
            Family::Weibull | Family::Loglogistic => {
                let law = self.family.error_law().expect("location-scale family");
                // α = -ln λ, ln σ = -ln p
                let (d_eta, d_scale) = self.locscale_gradient(law, -theta[0], -theta[1]);
                vec![-d_eta, -d_scale]
            }
            Family::Lognormal => {
                let (d_eta, d_scale) = self.locscale_gradient(
                    crate::survival::ErrorLaw::Lognormal,
                    theta[0],
                    theta[1],
                );
                vec![d_eta, d_scale]
            }
            Family::GenGamma => self.gengamma_gradient(theta),
        }
    }
}

/// Analytic gradient of the log-likelihood on the unconstrained scale.
pub fn log_likelihood_gradient(family: Family, sample: &Sample, theta: &[f64]) -> Vec<f64> {
    FamilyObjective::new(family, sample).gradient(theta)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
fn regress(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Starting point on the unconstrained scale from moments of log-durations
/// and the empirical cumulative hazard.
fn initial_theta(family: Family, sample: &Sample) -> Vec<f64> {
    let log_t: Vec<f64> = sample.durations().iter().map(|t| t.ln()).collect();
    let (m, sd) = mean_sd(&log_t);
    let sd = sd.max(1e-3);
    let km = kaplan_meier(sample);
    let km_points = |transform: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
        km.times
            .iter()
            .zip(&km.survival)
            .filter(|(_, s)| **s > 0.0 && **s < 1.0)
            .map(|(t, s)| (t.ln(), transform(*s)))
            .collect()
    };
    match family {
        Family::Exponential => {
            vec![(sample.n_events().max(1) as f64 / sample.durations().iter().sum::<f64>()).ln()]
        }
        Family::Lognormal => vec![m, sd.ln()],
        Family::Weibull => {
            // ln(-ln S) = p ln λ + p ln t
            let fallback_p = std::f64::consts::PI / (6f64.sqrt() * sd);
            match regress(&km_points(&|s: f64| (-s.ln()).ln())) {
                Some((p, c)) if p > 0.0 && p.is_finite() => vec![c / p, p.ln()],
                _ => vec![-(m + EULER_GAMMA / fallback_p), fallback_p.ln()],
            }
        }
        Family::Loglogistic => {
            // ln((1 - S) / S) = p ln λ + p ln t
            let fallback_p = std::f64::consts::PI / (3f64.sqrt() * sd);
            match regress(&km_points(&|s: f64| ((1.0 - s) / s).ln())) {
                Some((p, c)) if p > 0.0 && p.is_finite() => vec![c / p, p.ln()],
                _ => vec![-m, fallback_p.ln()],
            }
        }
        Family::GenGamma => {
            let w = initial_theta(Family::Weibull, sample);
            vec![w[0], w[1], 0.0]
        }
    }
}

fn perturbation(restart: usize, coordinate: usize) -> f64 {
    0.3 * ((restart * 7 + coordinate * 3) as f64 * 1.3).sin()
}

/// Maximum-likelihood fit of `family` to `sample`.
///
/// The optimizer runs on the unconstrained scale. The moment-based start is
/// followed by `options.restarts` perturbed starts and the best optimum is
/// kept. Non-convergence is reported as [`FitError::NoConvergence`] carrying
/// the best partial result.
pub fn fit_mle(
    family: Family,
    sample: &Sample,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let n_params = family.n_params();
    let events = sample.n_events();
    if events < n_params + 1 {
        return Err(FitError::DegenerateSample {
            family,
            events,
            needed: n_params + 1,
        });
    }
    if n_params > 1 {
        let first = sample.durations()[0];
        if sample.durations().iter().all(|t| *t == first) {
            return Err(FitError::NonIdentifiable { family });
        }
    }

    let objective = FamilyObjective::new(family, sample);
    let mut start = initial_theta(family, sample);
    if family == Family::GenGamma {
        // begin at the fitted Weibull reduction, k = 1
        if let Ok(w) = fit_mle(Family::Weibull, sample, options) {
            let w = w.params.to_unconstrained();
            start = vec![w[0], w[1], 0.0];
        }
    }

    let mut best = maximize(&objective, &start, &options.optimizer);
    let mut total_iterations = best.iterations;
    for restart in 1..=options.restarts {
        let perturbed: Vec<f64> = start
            .iter()
            .enumerate()
            .map(|(i, v)| v + perturbation(restart, i))
            .collect();
        let candidate = maximize(&objective, &perturbed, &options.optimizer);
        total_iterations += candidate.iterations;
        let better = match (candidate.converged, best.converged) {
            (true, false) => candidate.value.is_finite(),
            (false, true) => false,
            _ => candidate.value > best.value,
        };
        if better {
            best = candidate;
        }
    }

    let params = DistributionParams::from_unconstrained(family, &best.theta)
        .or_else(|_| DistributionParams::from_unconstrained(family, &start))
        .expect("start point is a valid parameter vector");
    let hessian = numerical_hessian(&objective, &best.theta);
    let covariance = (-hessian)
        .cholesky()
        .map(|c| c.inverse())
        .map(|m: DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        });
    let n = sample.len();
    let result = FitResult {
        params,
        loglik: best.value,
        aic: aic(best.value, n_params),
        bic: bic(best.value, n_params, n),
        mst: params.median(),
        n,
        n_params,
        covariance,
        converged: best.converged,
        iterations: total_iterations,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(FitError::NoConvergence {
            partial: Box::new(result),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::sample_durations;

    #[test]
    fn exponential_closed_form() {
        let s = Sample::observed_only(vec![1.0, 2.0, 3.0]).unwrap();
        let fit = fit_mle(Family::Exponential, &s, &FitOptions::default()).unwrap();
        match fit.params {
            DistributionParams::Exponential { rate } => assert!((rate - 0.5).abs() < 1e-10),
            _ => unreachable!(),
        }
        assert_eq!(fit.n_params, 1);
        assert!((fit.aic - (2.0 - 2.0 * fit.loglik)).abs() < 1e-12);
    }

    #[test]
    fn lognormal_closed_form() {
        let s =
            sample_durations(&DistributionParams::lognormal(1.7, 0.25).unwrap(), 500, 5).unwrap();
        let fit = fit_mle(Family::Lognormal, &s, &FitOptions::default()).unwrap();
        let logs: Vec<f64> = s.durations().iter().map(|t| t.ln()).collect();
        let (m, sd) = mean_sd(&logs);
        match fit.params {
            DistributionParams::Lognormal { mu, sigma } => {
                assert!((mu - m).abs() < 1e-8);
                assert!((sigma - sd).abs() < 1e-8);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn degenerate_and_non_identifiable() {
        let s = Sample::observed_only(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            fit_mle(Family::GenGamma, &s, &FitOptions::default()),
            Err(FitError::DegenerateSample { needed: 4, .. })
        ));
        let s = Sample::observed_only(vec![4.0; 10]).unwrap();
        assert!(matches!(
            fit_mle(Family::Weibull, &s, &FitOptions::default()),
            Err(FitError::NonIdentifiable { .. })
        ));
        // exponential has no shape, equal durations are fine
        assert!(fit_mle(Family::Exponential, &s, &FitOptions::default()).is_ok());
        let s = Sample::new(vec![1.0, 2.0, 3.0, 4.0], vec![true, false, false, false]).unwrap();
        assert!(matches!(
            fit_mle(Family::Weibull, &s, &FitOptions::default()),
            Err(FitError::DegenerateSample { events: 1, .. })
        ));
    }

    #[test]
    fn iteration_cap_returns_partial_result() {
        let s = sample_durations(&DistributionParams::weibull(0.2, 2.0).unwrap(), 200, 1).unwrap();
        let options = FitOptions {
            optimizer: OptimizerSettings {
                max_iterations: 1,
                newton_polish_steps: 0,
                ..Default::default()
            },
            restarts: 0,
        };
        match fit_mle(Family::Weibull, &s, &options) {
            Err(FitError::NoConvergence { partial }) => {
                assert!(!partial.converged);
                assert!(partial.loglik.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn censored_weibull_fit_converges() {
        let full =
            sample_durations(&DistributionParams::weibull(0.2, 2.0).unwrap(), 400, 77).unwrap();
        // administrative censoring at 7 s
        let durations: Vec<f64> = full.durations().iter().map(|t| t.min(7.0)).collect();
        let observed: Vec<bool> = full.durations().iter().map(|t| *t < 7.0).collect();
        let s = Sample::new(durations, observed).unwrap();
        for family in Family::ALL {
            let fit = fit_mle(family, &s, &FitOptions::default()).unwrap();
            assert!(fit.converged, "{family}");
        }
    }
}
