use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FitResult, KaplanMeierCurve};
use crate::survival::{DistributionParams, SurvivalError};

/// Anything that can be evaluated as a survival curve.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSource {
    Parametric(DistributionParams),
    KaplanMeier(KaplanMeierCurve),
}

impl From<&FitResult> for CurveSource {
    fn from(fit: &FitResult) -> Self {
        CurveSource::Parametric(fit.params)
    }
}

impl From<DistributionParams> for CurveSource {
    fn from(params: DistributionParams) -> Self {
        CurveSource::Parametric(params)
    }
}

impl From<KaplanMeierCurve> for CurveSource {
    fn from(km: KaplanMeierCurve) -> Self {
        CurveSource::KaplanMeier(km)
    }
}

impl CurveSource {
    pub fn survival_at(&self, t: f64) -> Result<f64, SurvivalError> {
        match self {
            CurveSource::Parametric(p) => p.survival(t),
            CurveSource::KaplanMeier(km) => {
                if t < 0.0 {
                    return Err(SurvivalError::Domain {
                        operation: "survival",
                        value: t,
                    });
                }
                Ok(km.survival_at(t))
            }
        }
    }

    pub fn cumulative_hazard_at(&self, t: f64) -> Result<f64, SurvivalError> {
        match self {
            CurveSource::Parametric(p) => p.cumulative_hazard(t),
            CurveSource::KaplanMeier(_) => self.survival_at(t).map(|s| 0.0 - s.ln()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub survival: f64,
    pub cum_hazard: f64,
    /// `S_a(t) - S_b(t)` when two curves are compared.
    pub surv_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    pub fn has_difference(&self) -> bool {
        self.rows.iter().any(|r| r.surv_diff.is_some())
    }

    /// Writes `t,survival,cum_hazard[,surv_diff]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let diff = self.has_difference();
        if diff {
            w.write_record(["t", "survival", "cum_hazard", "surv_diff"])?;
        } else {
            w.write_record(["t", "survival", "cum_hazard"])?;
        }
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                r.survival.to_string(),
                r.cum_hazard.to_string(),
            ];
            if diff {
                rec.push(r.surv_diff.map(|d| d.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(t_grid: &[f64]) -> Result<(), SurvivalError> {
    if let Some(bad) = t_grid.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(SurvivalError::Domain {
            operation: "curve grid",
            value: *bad,
        });
    }
    if let Some(w) = t_grid.windows(2).find(|w| w[1] < w[0]) {
        return Err(SurvivalError::Domain {
            operation: "curve grid (unsorted)",
            value: w[1],
        });
    }
    Ok(())
}

/// Survival and cumulative hazard of `source` on a sorted, nonnegative grid.
pub fn emit_curves(source: &CurveSource, t_grid: &[f64]) -> Result<CurveTable, SurvivalError> {
    check_grid(t_grid)?;
    let rows = t_grid
        .iter()
        .map(|&t| {
            Ok(CurveRow {
                t,
                survival: source.survival_at(t)?,
                cum_hazard: source.cumulative_hazard_at(t)?,
                surv_diff: None,
            })
        })
        .collect::<Result<_, SurvivalError>>()?;
    Ok(CurveTable { rows })
}

/// Curve of `first` with an extra `S_first - S_second` column.
pub fn emit_curve_comparison(
    first: &CurveSource,
    second: &CurveSource,
    t_grid: &[f64],
) -> Result<CurveTable, SurvivalError> {
    let mut table = emit_curves(first, t_grid)?;
    for row in &mut table.rows {
        row.surv_diff = Some(row.survival - second.survival_at(row.t)?);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::kaplan_meier;
    use crate::survival::Sample;

    #[test]
    fn exponential_rows() {
        let src = CurveSource::from(DistributionParams::exponential(0.5).unwrap());
        let table = emit_curves(&src, &[0.0, 2.0]).unwrap();
        assert_eq!(table.rows[0].survival, 1.0);
        assert_eq!(table.rows[0].cum_hazard, 0.0);
        assert!((table.rows[1].survival - 0.367_879_441_171_442_3).abs() < 1e-12);
        assert!((table.rows[1].cum_hazard - 1.0).abs() < 1e-15);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,survival,cum_hazard\n0,1,0\n2,"));
    }

    #[test]
    fn identical_curves_have_zero_difference() {
        let src = CurveSource::from(DistributionParams::weibull(0.2, 2.5).unwrap());
        let table = emit_curve_comparison(&src, &src.clone(), &[0.0, 1.0, 5.0, 9.0]).unwrap();
        assert!(table.rows.iter().all(|r| r.surv_diff == Some(0.0)));
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,survival,cum_hazard,surv_diff\n"));
    }

    #[test]
    fn km_emission_at_event_times_is_exact() {
        let km = kaplan_meier(&Sample::observed_only(vec![1.2, 2.5, 2.5, 4.0, 7.5]).unwrap());
        let table = emit_curves(&CurveSource::KaplanMeier(km.clone()), &km.times).unwrap();
        for (row, s) in table.rows.iter().zip(&km.survival) {
            assert_eq!(row.survival, *s);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let src = CurveSource::from(DistributionParams::exponential(0.5).unwrap());
        assert!(emit_curves(&src, &[1.0, 0.5]).is_err());
        assert!(emit_curves(&src, &[-1.0]).is_err());
    }
}
