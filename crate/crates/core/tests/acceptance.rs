//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any mandatory criterion fails. Criterion 10 runs only when
//! `LCD_HIGHD_DIR` points at a directory of HighD recordings.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use lcd_core::aft::{
    acceleration_factor, aft_log_likelihood, aft_log_likelihood_gradient, fit_aft,
    predict_survival, regression_report, RegressionData,
};
use lcd_core::extraction::{detect_lane_changes, ExtractionParams, LaneChangeEvent};
use lcd_core::fitting::{compare_models, fit_mle, log_likelihood_gradient, FitOptions, RowOutcome};
use lcd_core::ingest::{load_recordings, ColumnMap, RecordingPaths, VehicleClass, VehicleId};
use lcd_core::survival::{sample_durations, DistributionParams, ErrorLaw, Family, Sample};
use lcd_core::synth::{generate, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn family_of(law: ErrorLaw) -> Family {
    match law {
        ErrorLaw::Weibull => Family::Weibull,
        ErrorLaw::Lognormal => Family::Lognormal,
        ErrorLaw::Loglogistic => Family::Loglogistic,
    }
}

fn reduction_identities() -> Outcome {
    let grid: Vec<f64> = (1..=200).map(|i| i as f64 * 0.1).collect();
    let mut worst: f64 = 0.0;
    let mut compare = |a: &DistributionParams, b: &DistributionParams| -> Result<(), String> {
        for &t in &grid {
            let pairs = [
                (a.pdf(t), b.pdf(t)),
                (a.survival(t), b.survival(t)),
                (a.hazard(t), b.hazard(t)),
            ];
            for (x, y) in pairs {
                let (x, y) = (x.map_err(|e| e.to_string())?, y.map_err(|e| e.to_string())?);
                let r = rel_err(x, y);
                worst = worst.max(r);
                ensure(r < 1e-10, || format!("{a:?} vs {b:?} at t={t}: {x} vs {y}"))?;
            }
        }
        Ok(())
    };
    for (rate, shape) in [(0.2, 2.0), (0.18, 4.5), (0.05, 0.7), (1.3, 3.5)] {
        compare(
            &DistributionParams::gengamma(rate, shape, 1.0).unwrap(),
            &DistributionParams::weibull(rate, shape).unwrap(),
        )?;
    }
    for rate in [0.02, 0.18, 0.5, 1.7] {
        compare(
            &DistributionParams::gengamma(rate, 1.0, 1.0).unwrap(),
            &DistributionParams::exponential(rate).unwrap(),
        )?;
    }
    Ok(format!(
        "8 parameter sets x 200 points x 3 functions, max rel err {worst:.1e}"
    ))
}

fn closed_form_medians() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let mut cases = Vec::new();
    for rate in [0.05, 0.18, 0.5, 2.0] {
        cases.push((DistributionParams::exponential(rate).unwrap(), ln2 / rate));
        for shape in [0.6, 1.0, 2.5, 6.0] {
            cases.push((
                DistributionParams::weibull(rate, shape).unwrap(),
                ln2.powf(1.0 / shape) / rate,
            ));
            cases.push((
                DistributionParams::loglogistic(rate, shape).unwrap(),
                1.0 / rate,
            ));
        }
    }
    for mu in [-0.5, 0.0, 1.7, 2.3] {
        for sigma in [0.1, 0.25, 1.0] {
            cases.push((
                DistributionParams::lognormal(mu, sigma).unwrap(),
                f64::exp(mu),
            ));
        }
    }
    let mut worst: f64 = 0.0;
    for (d, expected) in &cases {
        let q = d.quantile(0.5).map_err(|e| e.to_string())?;
        let r = rel_err(q, *expected);
        worst = worst.max(r);
        ensure(r < 1e-10, || {
            format!("{d:?}: quantile(0.5) = {q}, closed form {expected}")
        })?;
    }
    Ok(format!("{} cases, max rel err {worst:.1e}", cases.len()))
}

fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], j: usize) -> f64 {
    let h = 1e-6;
    let mut up = theta.to_vec();
    let mut down = theta.to_vec();
    up[j] += h;
    down[j] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

fn draw_w(law: ErrorLaw, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
    match law {
        ErrorLaw::Weibull => (-u.ln()).ln(),
        ErrorLaw::Loglogistic => (u / (1.0 - u)).ln(),
        ErrorLaw::Lognormal => StandardNormal.sample(rng),
    }
}

/// ln T = alpha + beta . x + sigma W with x1 ~ N(0, 1), x2 ~ N(40, 15).
fn simulate_aft(
    law: ErrorLaw,
    n: usize,
    alpha: f64,
    beta: [f64; 2],
    sigma: f64,
    seed: u64,
) -> RegressionData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut durations = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let (x1, x2) = (z1, 40.0 + 15.0 * z2);
        let w = draw_w(law, &mut rng);
        durations.push((alpha + beta[0] * x1 + beta[1] * x2 + sigma * w).exp());
        rows.push(vec![x1, x2]);
    }
    RegressionData::new(
        durations,
        vec![true; n],
        vec!["x1".into(), "x2".into()],
        rows,
    )
    .unwrap()
}

fn gradient_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let mut check = |analytic: f64, fd: f64, what: &dyn Fn() -> String| -> Result<(), String> {
        let r = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0);
        worst = worst.max(r);
        ensure(r < 1e-6, || {
            format!("{}: analytic {analytic} vs fd {fd}", what())
        })
    };
    for family in Family::ALL {
        for _ in 0..100 {
            let theta: Vec<f64> = match family {
                Family::Lognormal => vec![rng.random_range(0.5..2.5), rng.random_range(-2.0..0.0)],
                _ => (0..family.n_params())
                    .map(|i| {
                        if i == 0 {
                            rng.random_range(-2.5..-0.5)
                        } else {
                            rng.random_range(-0.7..1.5)
                        }
                    })
                    .collect(),
            };
            let n = rng.random_range(5..30);
            let durations: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..12.0)).collect();
            let observed: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
            let sample = Sample::new(durations, observed).unwrap();
            let loglik = |th: &[f64]| {
                DistributionParams::from_unconstrained(family, th)
                    .unwrap()
                    .log_likelihood(&sample)
            };
            let g = log_likelihood_gradient(family, &sample, &theta);
            for (j, &gj) in g.iter().enumerate() {
                check(gj, central_difference(loglik, &theta, j), &|| {
                    format!("{family} {theta:?} j={j}")
                })?;
            }
            points += 1;
        }
    }
    for law in ErrorLaw::ALL {
        for point in 0..100 {
            let n = rng.random_range(5..25);
            let base = simulate_aft(law, n, 1.6, [0.1, -0.01], 0.2, 1000 + point);
            let observed: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
            let data = RegressionData::new(
                base.durations().to_vec(),
                observed,
                base.covariate_names().to_vec(),
                base.rows().to_vec(),
            )
            .unwrap();
            let theta = vec![
                rng.random_range(1.0..2.5),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.03..0.03),
                rng.random_range(-2.5..-0.5),
            ];
            let g = aft_log_likelihood_gradient(law, &data, &theta);
            for (j, &gj) in g.iter().enumerate() {
                let fd = central_difference(|th| aft_log_likelihood(law, &data, th), &theta, j);
                check(gj, fd, &|| format!("{law} AFT {theta:?} j={j}"))?;
            }
            points += 1;
        }
    }
    Ok(format!(
        "{points} points (5 families, 3 AFT laws), max rel err {worst:.1e}"
    ))
}

fn parameter_recovery() -> Outcome {
    let truths = [
        DistributionParams::exponential(0.18).unwrap(),
        DistributionParams::weibull(0.18, 4.5).unwrap(),
        DistributionParams::lognormal(1.7, 0.25).unwrap(),
        DistributionParams::loglogistic(0.18, 6.0).unwrap(),
        DistributionParams::gengamma(0.3, 1.5, 2.0).unwrap(),
    ];
    let mut worst_z: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for (i, truth) in truths.iter().enumerate() {
        let family = truth.family();
        let sample = sample_durations(truth, 10_000, 900 + i as u64).unwrap();
        let fit = fit_mle(family, &sample, &FitOptions::default())
            .map_err(|e| format!("{family}: {e}"))?;
        let se = fit
            .standard_errors()
            .ok_or_else(|| format!("{family}: no standard errors"))?;
        for (((name, est), (_, t)), s) in fit
            .params
            .named_values()
            .iter()
            .zip(truth.named_values())
            .zip(se)
        {
            let z = (est - t).abs() / s;
            worst_z = worst_z.max(z);
            ensure(z < 3.0, || format!("{family} {name}: {est} vs {t}, se {s}"))?;
        }
        let ln_t: Vec<f64> = sample.durations().iter().map(|t| t.ln()).collect();
        let n = ln_t.len() as f64;
        match fit.params {
            DistributionParams::Exponential { rate } => {
                let mle = n / sample.durations().iter().sum::<f64>();
                closed = closed.max((rate - mle).abs());
                ensure((rate - mle).abs() < 1e-8, || {
                    format!("exponential rate {rate} vs closed form {mle}")
                })?;
            }
            DistributionParams::Lognormal { mu, sigma } => {
                let m = ln_t.iter().sum::<f64>() / n;
                let s = (ln_t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
                closed = closed.max((mu - m).abs()).max((sigma - s).abs());
                ensure((mu - m).abs() < 1e-8 && (sigma - s).abs() < 1e-8, || {
                    format!("lognormal ({mu}, {sigma}) vs closed form ({m}, {s})")
                })?;
            }
            _ => {}
        }
    }
    Ok(format!(
        "5 families at n=10000, max |est-truth|/se {worst_z:.2}, closed-form diff {closed:.1e}"
    ))
}

fn model_selection() -> Outcome {
    let truth = DistributionParams::lognormal(1.7, 0.23).unwrap();
    let mut ranks = Vec::new();
    let mut gg_excluded = 0;
    for seed in 0..10 {
        let sample = sample_durations(&truth, 2000, 300 + seed).unwrap();
        let table = compare_models(&sample, &Family::ALL, &FitOptions::default());
        let fitted: Vec<Family> = table
            .rows
            .iter()
            .filter(|r| r.fit().is_some())
            .map(|r| r.family)
            .collect();
        ensure(fitted.last() == Some(&Family::Exponential), || {
            format!("seed {seed}: AIC order {fitted:?}")
        })?;
        let rank = table.aic_rank(Family::Lognormal).unwrap();
        ensure(rank <= 2, || {
            format!("seed {seed}: lognormal ranked {rank}, order {fitted:?}")
        })?;
        ranks.push(rank);
        // the GenGamma optimum lies at its lognormal limit (k -> infinity), which a
        // finite fit cannot reach; such rows must be excluded with that diagnosis
        for row in &table.rows {
            if let RowOutcome::Excluded { note, .. } = &row.outcome {
                ensure(
                    row.family == Family::GenGamma && note.contains("lognormal limit"),
                    || format!("seed {seed}: {} excluded: {note}", row.family),
                )?;
                gg_excluded += 1;
            }
        }
    }
    Ok(format!(
        "10 seeds at n=2000, exponential last in all, lognormal ranks {ranks:?}; \
         gengamma excluded at the lognormal limit in {gg_excluded}/10"
    ))
}

fn aft_recovery() -> Outcome {
    let beta = [0.15, -0.01];
    let mut worst_z: f64 = 0.0;
    for (i, law) in ErrorLaw::ALL.into_iter().enumerate() {
        let data = simulate_aft(law, 8000, 1.7, beta, 0.2, 70 + i as u64);
        let fit = fit_aft(&data, law).map_err(|e| format!("{law}: {e}"))?;
        for (c, t) in fit.coefficients.iter().zip(beta) {
            let se =
                c.se.ok_or_else(|| format!("{law} {}: no standard error", c.name))?;
            let z = (c.coef - t).abs() / se;
            worst_z = worst_z.max(z);
            ensure(z < 3.0, || {
                format!("{law} {}: {} vs {t}, se {se}", c.name, c.coef)
            })?;
            ensure(c.exp_coef == c.coef.exp(), || {
                format!("{law} {}: exp(coef) mismatch", c.name)
            })?;
        }
    }

    let data = simulate_aft(ErrorLaw::Weibull, 600, 1.7, [0.2, -0.01], 0.3, 5);
    let grid: Vec<f64> = (1..=40).map(|i| 0.5 * i as f64).collect();
    let mut worst_rescale: f64 = 0.0;
    for law in ErrorLaw::ALL {
        let fit = fit_aft(&data, law).map_err(|e| format!("{law}: {e}"))?;
        let (x0, x) = ([0.3, 35.0], [-1.1, 52.0]);
        let b = fit.beta();
        let shift = ((x0[0] - x[0]) * b[0] + (x0[1] - x[1]) * b[1]).exp();
        let at_x = predict_survival(&fit, &x, &grid).map_err(|e| e.to_string())?;
        let rescaled: Vec<f64> = grid.iter().map(|t| t * shift).collect();
        let at_x0 = predict_survival(&fit, &x0, &rescaled).map_err(|e| e.to_string())?;
        for (a, c) in at_x.rows.iter().zip(&at_x0.rows) {
            let d = (a.survival - c.survival).abs();
            worst_rescale = worst_rescale.max(d);
            ensure(d < 1e-10, || {
                format!(
                    "{law} rescaling at t={}: {} vs {}",
                    a.t, a.survival, c.survival
                )
            })?;
        }
    }

    let data = simulate_aft(ErrorLaw::Lognormal, 1500, 1.7, [0.0, 0.0], 0.25, 9);
    let n = data.len();
    let bare = RegressionData::new(
        data.durations().to_vec(),
        vec![true; n],
        vec![],
        vec![vec![]; n],
    )
    .unwrap();
    let sample = Sample::observed_only(data.durations().to_vec()).unwrap();
    let mut worst_ll: f64 = 0.0;
    for law in ErrorLaw::ALL {
        let aft = fit_aft(&bare, law).map_err(|e| format!("{law}: {e}"))?;
        let uni =
            fit_mle(family_of(law), &sample, &FitOptions::default()).map_err(|e| e.to_string())?;
        let d = (aft.loglik - uni.loglik).abs();
        worst_ll = worst_ll.max(d);
        ensure(d < 1e-6, || {
            format!(
                "{law}: AFT loglik {} vs univariate {}",
                aft.loglik, uni.loglik
            )
        })?;
    }
    Ok(format!(
        "3 laws at n=8000, max |coef-truth|/se {worst_z:.2}; rescaling diff {worst_rescale:.1e}; \
         zero-covariate loglik diff {worst_ll:.1e}"
    ))
}

fn acceleration_factors() -> Outcome {
    let rounded = |x: f64| format!("{x:.3}");
    ensure(rounded(0.160f64.exp()) == "1.174", || {
        format!("exp(0.160) = {}", 0.160f64.exp())
    })?;
    ensure(rounded((-0.016f64).exp()) == "0.984", || {
        format!("exp(-0.016) = {}", (-0.016f64).exp())
    })?;
    // the same arithmetic through a fitted model's exp(coef) and acceleration factor
    let data = simulate_aft(ErrorLaw::Loglogistic, 400, 1.7, [0.16, -0.016], 0.1, 3);
    let fit = fit_aft(&data, ErrorLaw::Loglogistic).map_err(|e| e.to_string())?;
    for c in &fit.coefficients {
        let af = acceleration_factor(&fit, &c.name, 1.0).map_err(|e| e.to_string())?;
        ensure(af == c.exp_coef && af == c.coef.exp(), || {
            format!("{}: {af} vs {}", c.name, c.exp_coef)
        })?;
    }
    Ok(format!(
        "exp(0.160) = {} (+17.4%), exp(-0.016) = {} (-1.6%)",
        rounded(0.160f64.exp()),
        rounded((-0.016f64).exp())
    ))
}

fn mixed_spec(cars: usize, car_lcs: usize, trucks: usize, truck_lcs: usize) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default();
    spec.car.vehicles = cars;
    spec.car.lane_changes = car_lcs;
    spec.truck.vehicles = trucks;
    spec.truck.lane_changes = truck_lcs;
    spec
}

fn extraction_fidelity() -> Outcome {
    let synth = generate(&mixed_spec(480, 350, 200, 150), 77).map_err(|e| e.to_string())?;
    ensure(synth.planted.len() == 500, || {
        format!("{} planted", synth.planted.len())
    })?;
    let found = detect_lane_changes(&synth.recording, &ExtractionParams::default())
        .map_err(|e| e.to_string())?;
    let mut by_vehicle: BTreeMap<VehicleId, Vec<&LaneChangeEvent>> = BTreeMap::new();
    for e in &found {
        by_vehicle.entry(e.vehicle_id).or_default().push(e);
    }
    let mut hits = 0;
    for p in &synth.planted {
        if let Some([e]) = by_vehicle.get(&p.vehicle_id).map(Vec::as_slice) {
            let err = (e.start_frame - p.start_frame)
                .abs()
                .max((e.end_frame - p.end_frame).abs());
            if err <= 2 && e.origin_lane == p.origin_lane && e.target_lane == p.target_lane {
                hits += 1;
            }
        }
    }
    let planted: std::collections::BTreeSet<_> =
        synth.planted.iter().map(|p| p.vehicle_id).collect();
    let false_events = found
        .iter()
        .filter(|e| !planted.contains(&e.vehicle_id))
        .count();
    let straight = synth.recording.trajectories.len() - planted.len();
    ensure(false_events == 0, || {
        format!("{false_events} events on {straight} non-changing vehicles")
    })?;
    ensure(hits * 100 >= 99 * synth.planted.len(), || {
        format!("{hits}/500 within 2 frames")
    })?;
    Ok(format!(
        "{hits}/500 within 2 frames, 0 false events on {straight} non-changing vehicles"
    ))
}

fn end_to_end() -> Outcome {
    let synth = generate(&mixed_spec(1600, 1500, 900, 800), 2024).map_err(|e| e.to_string())?;
    let events = detect_lane_changes(&synth.recording, &ExtractionParams::default())
        .map_err(|e| e.to_string())?;
    let mut mst = BTreeMap::new();
    let mut detail = Vec::new();
    for (class, target) in [
        (VehicleClass::PassengerCar, 5.5),
        (VehicleClass::HeavyVehicle, 6.1),
    ] {
        let durations: Vec<f64> = events
            .iter()
            .filter(|e| e.vehicle_class == class)
            .map(|e| e.duration)
            .collect();
        let n = durations.len();
        let sample = Sample::observed_only(durations).map_err(|e| e.to_string())?;
        let table = compare_models(&sample, &Family::ALL, &FitOptions::default());
        for family in [
            Family::Lognormal,
            table.best_by_aic.ok_or("nothing fitted")?,
        ] {
            let fit = table
                .rows
                .iter()
                .find(|r| r.family == family)
                .and_then(|r| r.fit())
                .unwrap();
            ensure((fit.mst - target).abs() <= 0.15, || {
                format!("{class:?} {family} MST {:.3} vs {target} (n={n})", fit.mst)
            })?;
        }
        let lognormal = table
            .rows
            .iter()
            .find(|r| r.family == Family::Lognormal)
            .and_then(|r| r.fit())
            .unwrap();
        mst.insert(class, lognormal.mst);
        detail.push(format!(
            "{class:?} n={n} MST {:.3} (best {})",
            lognormal.mst,
            table.best_by_aic.unwrap()
        ));
    }
    ensure(
        mst[&VehicleClass::HeavyVehicle] > mst[&VehicleClass::PassengerCar],
        || format!("{mst:?}"),
    )?;
    Ok(format!(
        "{}; gap {:.3} s",
        detail.join(", "),
        mst[&VehicleClass::HeavyVehicle] - mst[&VehicleClass::PassengerCar]
    ))
}

fn highd(dir: PathBuf) -> Outcome {
    let paths = RecordingPaths::discover(&dir).map_err(|e| e.to_string())?;
    let mut events = Vec::new();
    for rec in load_recordings(&paths, &ColumnMap::default()) {
        let rec = rec.map_err(|e| e.to_string())?;
        events.extend(
            detect_lane_changes(&rec, &ExtractionParams::default()).map_err(|e| e.to_string())?,
        );
    }
    let mut detail = Vec::new();
    let expectations = [
        (VehicleClass::PassengerCar, 5.70, 5.51),
        (VehicleClass::HeavyVehicle, 6.20, 6.08),
    ];
    for (class, mean_target, mst_target) in expectations {
        let class_events: Vec<LaneChangeEvent> = events
            .iter()
            .filter(|e| e.vehicle_class == class)
            .cloned()
            .collect();
        let durations: Vec<f64> = class_events.iter().map(|e| e.duration).collect();
        let mean = durations.iter().sum::<f64>() / durations.len() as f64;
        ensure((mean - mean_target).abs() <= 0.3, || {
            format!("{class:?} mean LCD {mean:.3}")
        })?;
        let sample = Sample::observed_only(durations).map_err(|e| e.to_string())?;
        let table = compare_models(&sample, &Family::ALL, &FitOptions::default());
        ensure(table.best_by_aic == Some(Family::GenGamma), || {
            format!("{class:?} best by AIC {:?}", table.best_by_aic)
        })?;
        let gg = table
            .rows
            .iter()
            .find(|r| r.family == Family::GenGamma)
            .and_then(|r| r.fit())
            .unwrap();
        ensure((gg.mst - mst_target).abs() <= 0.2, || {
            format!("{class:?} gengamma MST {:.3}", gg.mst)
        })?;
        let data = RegressionData::from_events(&class_events, &["speed", "dhw", "thw"])
            .map_err(|e| e.to_string())?;
        let report = regression_report(&data, &[ErrorLaw::Loglogistic], &FitOptions::default())
            .map_err(|e| e.to_string())?;
        let fit = report.best().ok_or("loglogistic AFT failed")?;
        let coef = |name: &str| fit.coefficients.iter().find(|c| c.name == name).unwrap();
        match class {
            VehicleClass::PassengerCar => {
                let signs: Vec<f64> = ["speed", "dhw", "thw"]
                    .iter()
                    .map(|n| coef(n).coef.signum())
                    .collect();
                ensure(signs == [-1.0, -1.0, 1.0], || {
                    format!("car coefficient signs {signs:?}")
                })?;
            }
            VehicleClass::HeavyVehicle => {
                for name in ["dhw", "thw"] {
                    let p = coef(name).p_value.unwrap_or(0.0);
                    ensure(p > 0.05, || format!("truck {name} p = {p:.3}"))?;
                }
            }
        }
        detail.push(format!(
            "{class:?} n={} mean {mean:.2} GG MST {:.2}",
            class_events.len(),
            gg.mst
        ));
    }
    Ok(detail.join(", "))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: Box<dyn FnOnce() -> Outcome>,
}

fn main() {
    let criteria = vec![
        Criterion {
            id: 1,
            name: "reduction identities",
            limit: Duration::from_secs(1),
            run: Box::new(reduction_identities),
        },
        Criterion {
            id: 2,
            name: "closed-form medians",
            limit: Duration::from_secs(1),
            run: Box::new(closed_form_medians),
        },
        Criterion {
            id: 3,
            name: "gradient suites",
            limit: Duration::from_secs(30),
            run: Box::new(gradient_suites),
        },
        Criterion {
            id: 4,
            name: "parameter recovery",
            limit: Duration::from_secs(60),
            run: Box::new(parameter_recovery),
        },
        Criterion {
            id: 5,
            name: "model-selection sanity",
            limit: Duration::from_secs(120),
            run: Box::new(model_selection),
        },
        Criterion {
            id: 6,
            name: "AFT recovery and identities",
            limit: Duration::from_secs(120),
            run: Box::new(aft_recovery),
        },
        Criterion {
            id: 7,
            name: "acceleration factors",
            limit: Duration::from_secs(1),
            run: Box::new(acceleration_factors),
        },
        Criterion {
            id: 8,
            name: "extraction fidelity",
            limit: Duration::from_secs(60),
            run: Box::new(extraction_fidelity),
        },
        Criterion {
            id: 9,
            name: "end-to-end closure",
            limit: Duration::from_secs(120),
            run: Box::new(end_to_end),
        },
    ];
    let mut failed = 0;
    for c in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if elapsed <= c.limit {
                Ok(d)
            } else {
                Err(format!("took {elapsed:.2?}, limit {:?}; {d}", c.limit))
            }
        });
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS {} ({elapsed:.2?}): {d}", c.id, c.name),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL {} ({elapsed:.2?}): {e}", c.id, c.name);
            }
        }
    }
    match std::env::var_os("LCD_HIGHD_DIR") {
        None => println!("criterion 10 SKIP HighD reproduction: LCD_HIGHD_DIR not set"),
        Some(dir) => {
            let start = Instant::now();
            match highd(PathBuf::from(dir)) {
                Ok(d) => println!(
                    "criterion 10 PASS HighD reproduction ({:.2?}): {d}",
                    start.elapsed()
                ),
                Err(e) => println!(
                    "criterion 10 FAIL HighD reproduction ({:.2?}): {e}",
                    start.elapsed()
                ),
            }
        }
    }
    if failed > 0 {
        println!("{failed} mandatory criteria failed");
        std::process::exit(1);
    }
}
