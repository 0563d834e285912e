//! Accelerated failure time regression: `ln T = α + xᵀβ + σW` with `W`
//! extreme-value (Weibull), normal (lognormal) or logistic (loglogistic).
//!
//! Coefficients are reported per raw covariate unit. Internally the fit runs
//! on centered and scaled covariates and the estimates and covariance are
//! mapped back.

mod report;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{LaneChangeEvent, Variable};
use crate::fitting::optimize::{maximize, numerical_hessian, Objective};
use crate::fitting::{aic, emit_curves, CurveSource, CurveTable, FitOptions};
use crate::ingest::VehicleClass;
use crate::survival::{DistributionParams, ErrorLaw, SurvivalError};

pub use report::{
    partial_effects, partial_effects_at, regression_report, LawEntry, LawOutcome,
    PartialEffectCurve, PartialEffects, RegressionReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AftError {
    #[error("{}: no convergence after {} iterations", .partial.error_law, .partial.iterations)]
    NoConvergence { partial: Box<AftFit> },
    #[error("collinear covariates: {0}")]
    CollinearCovariates(String),
    #[error("{rows} usable rows, need more than {min}")]
    DegenerateSample { rows: usize, min: usize },
    #[error("unknown covariate {name:?}; available: {}", .available.join(", "))]
    UnknownCovariate {
        name: String,
        available: Vec<String>,
    },
    #[error("covariate vector has {got} entries, fit has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid regression data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Domain(#[from] SurvivalError),
}

/// Durations, censoring flags and a named covariate matrix (row major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    durations: Vec<f64>,
    observed: Vec<bool>,
    covariate_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    classes: Vec<Option<VehicleClass>>,
    dropped_rows: usize,
}

impl RegressionData {
    pub fn new(
        durations: Vec<f64>,
        observed: Vec<bool>,
        covariate_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, AftError> {
        let n = durations.len();
        if observed.len() != n || rows.len() != n {
            return Err(AftError::InvalidData(format!(
                "{n} durations, {} flags, {} covariate rows",
                observed.len(),
                rows.len()
            )));
        }
        if let Some(t) = durations.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(AftError::InvalidData(format!(
                "duration {t} is not positive"
            )));
        }
        let m = covariate_names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != m) {
            return Err(AftError::InvalidData(format!(
                "row has {} covariates, expected {m}",
                r.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AftError::InvalidData("non-finite covariate value".into()));
        }
        for (i, name) in covariate_names.iter().enumerate() {
            if covariate_names[..i].contains(name) {
                return Err(AftError::InvalidData(format!(
                    "duplicate covariate {name:?}"
                )));
            }
        }
        Ok(Self {
            durations,
            observed,
            covariate_names,
            rows,
            classes: vec![None; n],
            dropped_rows: 0,
        })
    }

    /// Builds the design from events. Rows lacking any requested covariate
    /// are dropped and counted. Names are `speed`, `thw` and `dhw`.
    pub fn from_events(events: &[LaneChangeEvent], covariates: &[&str]) -> Result<Self, AftError> {
        let available = || {
            [
                Variable::Speed,
                Variable::TimeHeadway,
                Variable::DistanceHeadway,
            ]
            .iter()
            .map(|v| v.column().to_string())
            .collect::<Vec<_>>()
        };
        let vars = covariates
            .iter()
            .map(|name| match name.parse::<Variable>() {
                Ok(v) if v != Variable::Duration => Ok(v),
                _ => Err(AftError::UnknownCovariate {
                    name: name.to_string(),
                    available: available(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut durations = Vec::new();
        let mut rows = Vec::new();
        let mut classes = Vec::new();
        let mut dropped = 0;
        for e in events {
            let row: Option<Vec<f64>> = vars.iter().map(|v| v.value(e)).collect();
            match row {
                Some(r) => {
                    durations.push(e.duration);
                    rows.push(r);
                    classes.push(Some(e.vehicle_class));
                }
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::info!(
                "dropped {dropped} of {} events with missing covariates",
                events.len()
            );
        }
        let n = durations.len();
        let names = vars.iter().map(|v| v.column().to_string()).collect();
        let mut data = Self::new(durations, vec![true; n], names, rows)?;
        data.classes = classes;
        data.dropped_rows = dropped;
        Ok(data)
    }

    /// Rows of one class; rows without a class label are excluded.
    pub fn filter_class(&self, class: VehicleClass) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.classes[i] == Some(class))
            .collect();
        Self {
            durations: keep.iter().map(|&i| self.durations[i]).collect(),
            observed: keep.iter().map(|&i| self.observed[i]).collect(),
            covariate_names: self.covariate_names.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            classes: keep.iter().map(|&i| self.classes[i]).collect(),
            dropped_rows: self.dropped_rows,
        }
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn classes(&self) -> &[Option<VehicleClass>] {
        &self.classes
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn n_events(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub exp_coef: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftFit {
    pub error_law: ErrorLaw,
    pub intercept: f64,
    pub intercept_se: Option<f64>,
    pub coefficients: Vec<CoefficientRow>,
    pub scale: f64,
    pub log_scale_se: Option<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub n: usize,
    pub n_params: usize,
    pub covariate_means: Vec<f64>,
    /// Observed (min, max) of each covariate.
    pub covariate_ranges: Vec<(f64, f64)>,
    pub mst_at_means: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Inverse observed information over (α, β..., ln σ); `None` if the
    /// Hessian was not negative definite.
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl AftFit {
    pub fn covariate_names(&self) -> Vec<&str> {
        self.coefficients.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.coef).collect()
    }

    /// Parameter vector (α, β..., ln σ) as used by [`aft_log_likelihood`].
    pub fn theta(&self) -> Vec<f64> {
        let mut t = vec![self.intercept];
        t.extend(self.beta());
        t.push(self.scale.ln());
        t
    }

    pub fn index_of(&self, covariate: &str) -> Result<usize, AftError> {
        self.coefficients
            .iter()
            .position(|c| c.name == covariate)
            .ok_or_else(|| AftError::UnknownCovariate {
                name: covariate.to_string(),
                available: self.coefficients.iter().map(|c| c.name.clone()).collect(),
            })
    }

    pub fn coefficient(&self, covariate: &str) -> Result<&CoefficientRow, AftError> {
        self.index_of(covariate).map(|i| &self.coefficients[i])
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64, AftError> {
        if x.len() != self.coefficients.len() {
            return Err(AftError::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .map(|(v, c)| v * c.coef)
                .sum::<f64>())
    }

    /// Duration law implied at covariate vector `x`.
    pub fn params_at(&self, x: &[f64]) -> Result<DistributionParams, AftError> {
        Ok(self
            .error_law
            .to_params(self.linear_predictor(x)?, self.scale)?)
    }

    pub fn median_at(&self, x: &[f64]) -> Result<f64, AftError> {
        let eta = self.linear_predictor(x)?;
        Ok((eta + self.scale * self.error_law.median()).exp())
    }
}

pub fn acceleration_factor(fit: &AftFit, covariate: &str, delta: f64) -> Result<f64, AftError> {
    Ok((delta * fit.coefficient(covariate)?.coef).exp())
}

/// Survival curve at covariate vector `x`.
pub fn predict_survival(fit: &AftFit, x: &[f64], t_grid: &[f64]) -> Result<CurveTable, AftError> {
    let params = fit.params_at(x)?;
    Ok(emit_curves(&CurveSource::Parametric(params), t_grid)?)
}

/// Two-sided normal tail probability of a Wald statistic.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

struct AftObjective<'a> {
    law: ErrorLaw,
    log_t: Vec<f64>,
    observed: &'a [bool],
    /// Design rows without the intercept column.
    x: Vec<Vec<f64>>,
}

impl AftObjective<'_> {
    fn eval(&self, theta: &[f64], want_gradient: bool) -> (f64, Vec<f64>) {
        let m = self.x.first().map_or(theta.len() - 2, Vec::len);
        let ls = theta[m + 1];
        let mut ll = 0.0;
        let mut grad = vec![0.0; if want_gradient { m + 2 } else { 0 }];
        for ((y, obs), row) in self.log_t.iter().zip(self.observed).zip(&self.x) {
            let eta = theta[0]
                + row
                    .iter()
                    .zip(&theta[1..=m])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            let (l, d_eta, d_ls) = self.law.contribution(*y, eta, ls, *obs);
            ll += l;
            if want_gradient {
                grad[0] += d_eta;
                for (g, v) in grad[1..=m].iter_mut().zip(row) {
                    *g += d_eta * v;
                }
                grad[m + 1] += d_ls;
            }
        }
        (ll, grad)
    }
}

impl Objective for AftObjective<'_> {
    fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len) + 2
    }

    fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).0
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.eval(theta, true).1
    }
}

fn raw_objective<'a>(law: ErrorLaw, data: &'a RegressionData) -> AftObjective<'a> {
    AftObjective {
        law,
        log_t: data.durations.iter().map(|t| t.ln()).collect(),
        observed: &data.observed,
        x: data.rows.clone(),
    }
}

/// Log-likelihood at raw-scale parameters `(α, β..., ln σ)`.
pub fn aft_log_likelihood(law: ErrorLaw, data: &RegressionData, theta: &[f64]) -> f64 {
    raw_objective(law, data).value(theta)
}

pub fn aft_log_likelihood_gradient(
    law: ErrorLaw,
    data: &RegressionData,
    theta: &[f64],
) -> Vec<f64> {
    raw_objective(law, data).gradient(theta)
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn mean_and_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_collinearity(data: &RegressionData, means: &[f64]) -> Result<(), AftError> {
    let m = means.len();
    if m == 0 {
        return Ok(());
    }
    for j in 0..m {
        let first = data.rows[0][j];
        if data.rows.iter().all(|r| r[j] == first) {
            return Err(AftError::CollinearCovariates(format!(
                "covariate {:?} has zero variance",
                data.covariate_names[j]
            )));
        }
    }
    let mut cross = DMatrix::<f64>::zeros(m, m);
    for r in &data.rows {
        let c = DVector::from_iterator(m, r.iter().zip(means).map(|(v, mu)| v - mu));
        cross += &c * c.transpose();
    }
    let eig = SymmetricEigen::new(cross).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || max / min > 1e10 {
        return Err(AftError::CollinearCovariates(format!(
            "condition number of the centered cross-product is {:.3e}",
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    Ok(())
}

/// Least squares of `y` on `[1, z]`; returns coefficients and residual sd.
fn ols(y: &[f64], z: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let p = z.first().map_or(0, Vec::len) + 1;
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { z[i][j - 1] });
    let target = DVector::from_column_slice(y);
    let gram = design.transpose() * &design;
    let coef = gram.cholesky()?.solve(&(design.transpose() * &target));
    let resid = target - &design * &coef;
    let sd = (resid.norm_squared() / n as f64).sqrt();
    Some((coef.iter().copied().collect(), sd))
}

/// Standard deviation of W under each law.
fn error_sd(law: ErrorLaw) -> f64 {
    use std::f64::consts::PI;
    match law {
        ErrorLaw::Weibull => PI / 6f64.sqrt(),
        ErrorLaw::Lognormal => 1.0,
        ErrorLaw::Loglogistic => PI / 3f64.sqrt(),
    }
}

fn perturbation(restart: usize, coordinate: usize) -> f64 {
    0.2 * ((restart * 5 + coordinate * 3) as f64 * 1.7).sin()
}

pub fn fit_aft(data: &RegressionData, law: ErrorLaw) -> Result<AftFit, AftError> {
    fit_aft_with(data, law, &FitOptions::default())
}

pub fn fit_aft_with(
    data: &RegressionData,
    law: ErrorLaw,
    options: &FitOptions,
) -> Result<AftFit, AftError> {
    let m = data.covariate_names.len();
    let n_params = m + 2;
    let n = data.len();
    if n <= n_params + 2 || data.n_events() == 0 {
        return Err(AftError::DegenerateSample {
            rows: n,
            min: n_params + 2,
        });
    }
    let stats: Vec<(f64, f64)> = (0..m).map(|j| mean_and_sd(&data.column(j))).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    check_collinearity(data, &means)?;
    let ranges: Vec<(f64, f64)> = (0..m)
        .map(|j| {
            let col = data.column(j);
            (
                col.iter().copied().fold(f64::INFINITY, f64::min),
                col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();

    let z: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&stats)
                .map(|(v, (mu, sd))| (v - mu) / sd)
                .collect()
        })
        .collect();
    let log_t: Vec<f64> = data.durations.iter().map(|t| t.ln()).collect();
    let (coef, resid_sd) = ols(&log_t, &z)
        .ok_or_else(|| AftError::CollinearCovariates("standardized design is singular".into()))?;
    let scale0 = (resid_sd / error_sd(law)).max(1e-3);
    let shift = match law {
        ErrorLaw::Weibull => EULER_GAMMA * scale0,
        _ => 0.0,
    };
    let mut start = vec![coef[0] + shift];
    start.extend_from_slice(&coef[1..]);
    start.push(scale0.ln());

    let objective = AftObjective {
        law,
        log_t,
        observed: &data.observed,
        x: z,
    };
    let mut best = maximize(&objective, &start, &options.optimizer);
    let mut iterations = best.iterations;
    for restart in 1..=options.restarts {
        if best.converged {
            break;
        }
        let perturbed: Vec<f64> = start
            .iter()
            .enumerate()
            .map(|(i, v)| v + perturbation(restart, i))
            .collect();
        let candidate = maximize(&objective, &perturbed, &options.optimizer);
        iterations += candidate.iterations;
        if (candidate.converged && !best.converged) || candidate.value > best.value {
            best = candidate;
        }
    }

    // θ_raw = A θ_std
    let mut a = DMatrix::<f64>::identity(n_params, n_params);
    for j in 0..m {
        let (mu, sd) = stats[j];
        a[(0, j + 1)] = -mu / sd;
        a[(j + 1, j + 1)] = 1.0 / sd;
    }
    let theta_std = DVector::from_column_slice(&best.theta);
    let theta = &a * theta_std;
    let hessian = numerical_hessian(&objective, &best.theta);
    let covariance = (-hessian)
        .cholesky()
        .map(|c| &a * c.inverse() * a.transpose());
    let se = |i: usize| covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt());

    let coefficients = (0..m)
        .map(|j| {
            let coef = theta[j + 1];
            let s = se(j + 1);
            let z = s.filter(|s| *s > 0.0).map(|s| coef / s);
            CoefficientRow {
                name: data.covariate_names[j].clone(),
                coef,
                exp_coef: coef.exp(),
                se: s,
                z,
                p_value: z.map(two_sided_p),
            }
        })
        .collect();
    let intercept = theta[0];
    let scale = theta[m + 1].exp();
    let eta_bar = intercept + (0..m).map(|j| theta[j + 1] * means[j]).sum::<f64>();
    let fit = AftFit {
        error_law: law,
        intercept,
        intercept_se: se(0),
        coefficients,
        scale,
        log_scale_se: se(m + 1),
        loglik: best.value,
        aic: aic(best.value, n_params),
        n,
        n_params,
        covariate_means: means,
        covariate_ranges: ranges,
        mst_at_means: (eta_bar + scale * law.median()).exp(),
        converged: best.converged,
        iterations,
        covariance: covariance.map(|c| {
            (0..n_params)
                .map(|i| (0..n_params).map(|j| c[(i, j)]).collect())
                .collect()
        }),
    };
    if fit.converged {
        Ok(fit)
    } else {
        Err(AftError::NoConvergence {
            partial: Box::new(fit),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: Vec<Vec<f64>>, durations: Vec<f64>) -> RegressionData {
        let n = durations.len();
        let m = rows.first().map_or(0, Vec::len);
        let names = (0..m).map(|j| format!("x{j}")).collect();
        RegressionData::new(durations, vec![true; n], names, rows).unwrap()
    }

    #[test]
    fn zero_variance_column_is_collinear() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![0.0, i as f64]).collect();
        let durations: Vec<f64> = (0..20).map(|i| 3.0 + 0.1 * i as f64).collect();
        let err = fit_aft(&data(rows, durations), ErrorLaw::Weibull).unwrap_err();
        assert!(matches!(err, AftError::CollinearCovariates(_)), "{err}");
    }

    #[test]
    fn duplicated_column_is_collinear() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let durations: Vec<f64> = (0..20).map(|i| 3.0 + 0.1 * i as f64).collect();
        let err = fit_aft(&data(rows, durations), ErrorLaw::Lognormal).unwrap_err();
        assert!(matches!(err, AftError::CollinearCovariates(_)));
    }

    #[test]
    fn too_few_rows_is_degenerate() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let err =
            fit_aft(&data(rows, vec![1.0, 2.0, 3.0, 4.0]), ErrorLaw::Loglogistic).unwrap_err();
        assert!(matches!(err, AftError::DegenerateSample { .. }));
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(1.959963984540054) - 0.05).abs() < 1e-12);
        assert_eq!(two_sided_p(0.0), 1.0);
        assert_eq!(two_sided_p(-1.0), two_sided_p(1.0));
    }

    #[test]
    fn data_validation() {
        let bad = RegressionData::new(vec![1.0, -1.0], vec![true; 2], vec![], vec![vec![], vec![]]);
        assert!(bad.is_err());
        let bad = RegressionData::new(
            vec![1.0],
            vec![true],
            vec!["a".into(), "a".into()],
            vec![vec![1.0, 2.0]],
        );
        assert!(bad.is_err());
    }
}
