use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_mle, FitError, FitOptions, FitResult};
use crate::survival::{DistributionParams, Family, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowOutcome {
    Fitted(FitResult),
    /// Excluded from ranking. `partial` is set when the optimizer ran out of
    /// iterations.
    Excluded {
        note: String,
        partial: Option<FitResult>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: Family,
    #[serde(flatten)]
    pub outcome: RowOutcome,
}

impl ComparisonRow {
    pub fn fit(&self) -> Option<&FitResult> {
        match &self.outcome {
            RowOutcome::Fitted(f) => Some(f),
            RowOutcome::Excluded { .. } => None,
        }
    }
}

/// Fitted families ranked by AIC (ties: BIC, then fewer parameters),
/// followed by excluded families in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub best_by_aic: Option<Family>,
    pub best_by_bic: Option<Family>,
}

/// Above this k a stalled GenGamma fit is read as heading for its
/// lognormal limit, which no finite parameter vector attains.
const LOGNORMAL_LIMIT_K: f64 = 100.0;

fn non_convergence_note(partial: &FitResult) -> String {
    let mut note = format!("not converged after {} iterations", partial.iterations);
    if let DistributionParams::GenGamma { k, .. } = partial.params {
        if k > LOGNORMAL_LIMIT_K {
            note.push_str(&format!(
                "; k = {k:.0}, drifting toward the lognormal limit"
            ));
        }
    }
    note
}

fn rank(a: &FitResult, b: &FitResult) -> Ordering {
    a.aic
        .total_cmp(&b.aic)
        .then(a.bic.total_cmp(&b.bic))
        .then(a.n_params.cmp(&b.n_params))
}

/// Fits every family in `families` (duplicates ignored) and ranks them.
pub fn compare_models(
    sample: &Sample,
    families: &[Family],
    options: &FitOptions,
) -> ComparisonTable {
    let mut unique: Vec<Family> = Vec::new();
    for f in families {
        if !unique.contains(f) {
            unique.push(*f);
        }
    }
    let outcomes: Vec<ComparisonRow> = unique
        .par_iter()
        .map(|&family| {
            let outcome = match fit_mle(family, sample, options) {
                Ok(fit) => RowOutcome::Fitted(fit),
                Err(FitError::NoConvergence { partial }) => RowOutcome::Excluded {
                    note: non_convergence_note(&partial),
                    partial: Some(*partial),
                },
                Err(e) => RowOutcome::Excluded {
                    note: e.to_string(),
                    partial: None,
                },
            };
            ComparisonRow { family, outcome }
        })
        .collect();

    let (mut fitted, excluded): (Vec<_>, Vec<_>) =
        outcomes.into_iter().partition(|r| r.fit().is_some());
    fitted.sort_by(|a, b| rank(a.fit().unwrap(), b.fit().unwrap()));
    let best_by_aic = fitted.first().map(|r| r.family);
    let best_by_bic = fitted
        .iter()
        .min_by(|a, b| {
            let (a, b) = (a.fit().unwrap(), b.fit().unwrap());
            a.bic.total_cmp(&b.bic).then(a.n_params.cmp(&b.n_params))
        })
        .map(|r| r.family);
    fitted.extend(excluded);
    ComparisonTable {
        rows: fitted,
        best_by_aic,
        best_by_bic,
    }
}

impl ComparisonTable {
    pub fn row(&self, family: Family) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.family == family)
    }

    /// 1-based AIC rank among fitted rows.
    pub fn aic_rank(&self, family: Family) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.fit().is_some())
            .position(|r| r.family == family)
            .map(|p| p + 1)
    }

    pub fn n_fitted(&self) -> usize {
        self.rows.iter().filter(|r| r.fit().is_some()).count()
    }

    /// `family,status,n,n_params,loglik,aic,bic,mst,params,note`
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "family", "status", "n", "n_params", "loglik", "aic", "bic", "mst", "params", "note",
        ])?;
        for row in &self.rows {
            let params = |f: &FitResult| {
                f.params
                    .named_values()
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let record = match &row.outcome {
                RowOutcome::Fitted(f) => vec![
                    row.family.to_string(),
                    "fitted".into(),
                    f.n.to_string(),
                    f.n_params.to_string(),
                    f.loglik.to_string(),
                    f.aic.to_string(),
                    f.bic.to_string(),
                    f.mst.to_string(),
                    params(f),
                    String::new(),
                ],
                RowOutcome::Excluded { note, partial } => {
                    let mut rec = vec![row.family.to_string(), "excluded".into()];
                    match partial {
                        Some(f) => rec.extend([
                            f.n.to_string(),
                            f.n_params.to_string(),
                            f.loglik.to_string(),
                            f.aic.to_string(),
                            f.bic.to_string(),
                            f.mst.to_string(),
                            params(f),
                        ]),
                        None => rec.extend(std::iter::repeat_n(String::new(), 7)),
                    }
                    rec.push(note.clone());
                    rec
                }
            };
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
