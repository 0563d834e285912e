//! Plain-text renderings of the reports. The JSON files carry the same
//! numbers at full precision.

use std::fmt::Write;

use lcd_core::aft::{LawOutcome, RegressionReport};
use lcd_core::extraction::{DescriptiveStats, ExtractionReport, Variable};
use lcd_core::fitting::{ComparisonTable, RowOutcome};
use lcd_core::ingest::VehicleClass;

use crate::Group;

fn opt(v: Option<f64>, width: usize, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.prec$}"),
        None => format!("{:>width$}", "n/a"),
    }
}

pub struct RecordingSummary {
    pub recording_id: String,
    pub vehicles: [usize; 2],
}

pub fn extraction_log(recordings: &[RecordingSummary], report: &ExtractionReport) -> String {
    let mut s = String::new();
    let class_counts = |f: &dyn Fn(VehicleClass) -> usize| {
        VehicleClass::ALL
            .iter()
            .map(|&c| format!("{} {}", Group::Class(c).title(), f(c)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let ids: Vec<&str> = recordings.iter().map(|r| r.recording_id.as_str()).collect();
    writeln!(s, "recordings: {} ({})", recordings.len(), ids.join(", ")).unwrap();
    writeln!(
        s,
        "vehicles: {}",
        class_counts(&|c| recordings.iter().map(|r| r.vehicles[c as usize]).sum())
    )
    .unwrap();
    let mut with_lc = std::collections::BTreeSet::new();
    for e in &report.events {
        with_lc.insert((e.recording_id.clone(), e.vehicle_id, e.vehicle_class));
    }
    writeln!(
        s,
        "vehicles with lane changes: {}",
        class_counts(&|c| with_lc.iter().filter(|k| k.2 == c).count())
    )
    .unwrap();
    writeln!(s, "candidate intervals: {}", report.candidates).unwrap();
    let dropped: Vec<String> = report
        .dropped
        .iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect();
    writeln!(
        s,
        "dropped: {}",
        if dropped.is_empty() {
            "none".to_string()
        } else {
            dropped.join(", ")
        }
    )
    .unwrap();
    writeln!(
        s,
        "flagged multi-lane sweeps: {}",
        report.flagged_sweeps.len()
    )
    .unwrap();
    for f in &report.flagged_sweeps {
        writeln!(
            s,
            "  recording {} vehicle {} frame {}: {} boundaries",
            f.recording_id, f.vehicle_id, f.start_frame, f.boundaries_crossed
        )
        .unwrap();
    }
    let counts = report.count_by_class();
    writeln!(
        s,
        "events: {} (total {})",
        class_counts(&|c| counts.get(&c).copied().unwrap_or(0)),
        report.events.len()
    )
    .unwrap();
    s
}

pub fn describe(blocks: &[(Group, Vec<Result<DescriptiveStats, Variable>>)]) -> String {
    let mut s = String::new();
    for (group, rows) in blocks {
        writeln!(s, "== {} ==", group.title()).unwrap();
        writeln!(
            s,
            "{:<10}{:>7}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "variable", "count", "mean", "std", "min", "25%", "50%", "75%", "max"
        )
        .unwrap();
        for row in rows {
            match row {
                Ok(d) => {
                    write!(
                        s,
                        "{:<10}{:>7}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>10.2}",
                        d.variable.column(),
                        d.count,
                        d.mean,
                        d.std,
                        d.minimum,
                        d.p25,
                        d.p50,
                        d.p75,
                        d.maximum
                    )
                    .unwrap();
                    if d.excluded > 0 {
                        write!(s, "  ({} missing)", d.excluded).unwrap();
                    }
                    s.push('\n');
                }
                Err(v) => writeln!(s, "{:<10}{:>7}  no values", v.column(), 0).unwrap(),
            }
        }
        s.push('\n');
    }
    s
}

pub fn fit(blocks: &[(Group, usize, ComparisonTable)]) -> String {
    let mut s = String::new();
    for (group, n, table) in blocks {
        writeln!(s, "== {} (n = {n}) ==", group.title()).unwrap();
        writeln!(
            s,
            "{:<13}{:>3}{:>13}{:>12}{:>12}{:>9}  parameters",
            "family", "k", "loglik", "AIC", "BIC", "MST"
        )
        .unwrap();
        for row in &table.rows {
            match &row.outcome {
                RowOutcome::Fitted(f) => {
                    let params: Vec<String> = f
                        .params
                        .named_values()
                        .iter()
                        .map(|(k, v)| format!("{k}={v:.4}"))
                        .collect();
                    writeln!(
                        s,
                        "{:<13}{:>3}{:>13.3}{:>12.3}{:>12.3}{:>9.3}  {}",
                        row.family.name(),
                        f.n_params,
                        f.loglik,
                        f.aic,
                        f.bic,
                        f.mst,
                        params.join(" ")
                    )
                    .unwrap();
                }
                RowOutcome::Excluded { note, .. } => {
                    writeln!(s, "{:<13}excluded: {note}", row.family.name()).unwrap()
                }
            }
        }
        let name = |f: Option<lcd_core::survival::Family>| f.map_or("none", |f| f.name());
        writeln!(
            s,
            "best by AIC: {}; best by BIC: {}\n",
            name(table.best_by_aic),
            name(table.best_by_bic)
        )
        .unwrap();
    }
    s
}

pub fn aft(blocks: &[(Group, RegressionReport)]) -> String {
    let mut s = String::new();
    for (group, report) in blocks {
        writeln!(
            s,
            "== {} (n = {}, covariates: {}) ==",
            group.title(),
            report.n,
            report.covariates.join(", ")
        )
        .unwrap();
        for entry in &report.entries {
            let best = if Some(entry.law) == report.best_by_aic {
                "  [best AIC]"
            } else {
                ""
            };
            match &entry.outcome {
                LawOutcome::Fitted(fit) => {
                    writeln!(
                        s,
                        "-- {} AFT: loglik {:.3}, AIC {:.3}, MST at means {:.3} s, scale {:.4}{best}",
                        entry.law, fit.loglik, fit.aic, fit.mst_at_means, fit.scale
                    )
                    .unwrap();
                    writeln!(
                        s,
                        "{:<13}{:>12}{:>12}{:>12}{:>9}{:>11}",
                        "term", "coef", "exp(coef)", "se", "z", "p"
                    )
                    .unwrap();
                    writeln!(
                        s,
                        "{:<13}{:>12.5}{:>12.5}{}",
                        "(intercept)",
                        fit.intercept,
                        fit.intercept.exp(),
                        opt(fit.intercept_se, 12, 5)
                    )
                    .unwrap();
                    for c in &fit.coefficients {
                        let p = match c.p_value {
                            Some(p) => format!("{p:>11.3e}"),
                            None => format!("{:>11}", "n/a"),
                        };
                        writeln!(
                            s,
                            "{:<13}{:>12.5}{:>12.5}{}{}{p}",
                            c.name,
                            c.coef,
                            c.exp_coef,
                            opt(c.se, 12, 5),
                            opt(c.z, 9, 3)
                        )
                        .unwrap();
                    }
                    writeln!(
                        s,
                        "{:<13}{:>12.5}{:>12.5}{}",
                        "log(scale)",
                        fit.scale.ln(),
                        fit.scale,
                        opt(fit.log_scale_se, 12, 5)
                    )
                    .unwrap();
                }
                LawOutcome::Failed { error, .. } => {
                    writeln!(s, "-- {} AFT: failed: {error}", entry.law).unwrap()
                }
            }
        }
        s.push('\n');
    }
    s
}
