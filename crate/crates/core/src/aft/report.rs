use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_aft_with, predict_survival, AftError, AftFit, RegressionData};
use crate::fitting::{CurveTable, FitOptions};
use crate::survival::ErrorLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEffectCurve {
    pub value: f64,
    /// The value lies outside the observed covariate range.
    pub extrapolated: bool,
    pub table: CurveTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEffects {
    pub covariate: String,
    /// Covariate vector the other covariates are pinned at.
    pub reference: Vec<f64>,
    /// Curve at `reference`.
    pub baseline: CurveTable,
    pub curves: Vec<PartialEffectCurve>,
}

impl PartialEffects {
    pub fn baseline_value(&self, fit: &AftFit) -> f64 {
        fit.index_of(&self.covariate)
            .map(|j| self.reference[j])
            .unwrap_or(f64::NAN)
    }

    /// CSV `covariate_value,t,survival`; baseline rows first, labelled with
    /// the reference value of the covariate.
    pub fn write_csv(&self, fit: &AftFit, w: impl Write) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["covariate_value", "t", "survival"])?;
        let base = self.baseline_value(fit);
        let blocks = std::iter::once((base, &self.baseline))
            .chain(self.curves.iter().map(|c| (c.value, &c.table)));
        for (value, table) in blocks {
            for row in &table.rows {
                wtr.write_record([
                    value.to_string(),
                    row.t.to_string(),
                    row.survival.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One curve per value of `covariate`, other covariates at their means.
pub fn partial_effects(
    fit: &AftFit,
    covariate: &str,
    values: &[f64],
    t_grid: &[f64],
) -> Result<PartialEffects, AftError> {
    partial_effects_at(fit, covariate, values, t_grid, &fit.covariate_means)
}

/// As [`partial_effects`] with the other covariates pinned at `reference`.
pub fn partial_effects_at(
    fit: &AftFit,
    covariate: &str,
    values: &[f64],
    t_grid: &[f64],
    reference: &[f64],
) -> Result<PartialEffects, AftError> {
    let j = fit.index_of(covariate)?;
    let baseline = predict_survival(fit, reference, t_grid)?;
    let (lo, hi) = fit.covariate_ranges[j];
    let curves = values
        .iter()
        .map(|&value| {
            let mut x = reference.to_vec();
            x[j] = value;
            Ok(PartialEffectCurve {
                value,
                extrapolated: value < lo || value > hi,
                table: predict_survival(fit, &x, t_grid)?,
            })
        })
        .collect::<Result<Vec<_>, AftError>>()?;
    Ok(PartialEffects {
        covariate: covariate.to_string(),
        reference: reference.to_vec(),
        baseline,
        curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LawOutcome {
    Fitted(Box<AftFit>),
    Failed {
        error: String,
        partial: Option<Box<AftFit>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawEntry {
    pub law: ErrorLaw,
    pub outcome: LawOutcome,
}

impl LawEntry {
    pub fn fit(&self) -> Option<&AftFit> {
        match &self.outcome {
            LawOutcome::Fitted(f) => Some(f),
            LawOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub dropped_rows: usize,
    pub covariates: Vec<String>,
    pub entries: Vec<LawEntry>,
    pub best_by_aic: Option<ErrorLaw>,
    /// Laws requested more than once; fitted once.
    pub duplicate_laws: Vec<ErrorLaw>,
}

impl RegressionReport {
    pub fn entry(&self, law: ErrorLaw) -> Option<&LawEntry> {
        self.entries.iter().find(|e| e.law == law)
    }

    pub fn best(&self) -> Option<&AftFit> {
        self.best_by_aic
            .and_then(|l| self.entry(l))
            .and_then(LawEntry::fit)
    }

    pub fn write_json(&self, w: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    /// One row per law and term (intercept, covariates, log scale).
    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "law",
            "status",
            "best_aic",
            "aic",
            "loglik",
            "mst_at_means",
            "term",
            "coef",
            "exp_coef",
            "se",
            "z",
            "p_value",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for entry in &self.entries {
            let best = (Some(entry.law) == self.best_by_aic).to_string();
            match &entry.outcome {
                LawOutcome::Fitted(fit) => {
                    let head = [
                        entry.law.to_string(),
                        "fitted".to_string(),
                        best,
                        fit.aic.to_string(),
                        fit.loglik.to_string(),
                        fit.mst_at_means.to_string(),
                    ];
                    let mut terms = vec![[
                        "(intercept)".to_string(),
                        fit.intercept.to_string(),
                        fit.intercept.exp().to_string(),
                        opt(fit.intercept_se),
                        String::new(),
                        String::new(),
                    ]];
                    for c in &fit.coefficients {
                        terms.push([
                            c.name.clone(),
                            c.coef.to_string(),
                            c.exp_coef.to_string(),
                            opt(c.se),
                            opt(c.z),
                            opt(c.p_value),
                        ]);
                    }
                    terms.push([
                        "log(scale)".to_string(),
                        fit.scale.ln().to_string(),
                        fit.scale.to_string(),
                        opt(fit.log_scale_se),
                        String::new(),
                        String::new(),
                    ]);
                    for t in terms {
                        wtr.write_record(head.iter().chain(t.iter()))?;
                    }
                }
                LawOutcome::Failed { error, .. } => {
                    let mut rec = vec![entry.law.to_string(), "failed".to_string(), best];
                    rec.extend(std::iter::repeat_n(String::new(), 3));
                    rec.push(error.clone());
                    rec.extend(std::iter::repeat_n(String::new(), 5));
                    wtr.write_record(&rec)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Fits every requested law (duplicates once, in first-seen order) and
/// marks the lowest AIC among the fitted ones.
pub fn regression_report(
    data: &RegressionData,
    laws: &[ErrorLaw],
    options: &FitOptions,
) -> Result<RegressionReport, AftError> {
    if laws.is_empty() {
        return Err(AftError::InvalidData("no error laws requested".into()));
    }
    let mut unique = Vec::new();
    let mut duplicates = Vec::new();
    for &law in laws {
        if unique.contains(&law) {
            if !duplicates.contains(&law) {
                duplicates.push(law);
            }
        } else {
            unique.push(law);
        }
    }
    let entries: Vec<LawEntry> = unique
        .par_iter()
        .map(|&law| {
            let outcome = match fit_aft_with(data, law, options) {
                Ok(fit) => LawOutcome::Fitted(Box::new(fit)),
                Err(AftError::NoConvergence { partial }) => LawOutcome::Failed {
                    error: format!("no convergence after {} iterations", partial.iterations),
                    partial: Some(partial),
                },
                Err(e) => LawOutcome::Failed {
                    error: e.to_string(),
                    partial: None,
                },
            };
            LawEntry { law, outcome }
        })
        .collect();
    let best_by_aic = entries
        .iter()
        .filter_map(|e| e.fit().map(|f| (e.law, f.aic)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(law, _)| law);
    Ok(RegressionReport {
        n: data.len(),
        dropped_rows: data.dropped_rows(),
        covariates: data.covariate_names().to_vec(),
        entries,
        best_by_aic,
        duplicate_laws: duplicates,
    })
}
