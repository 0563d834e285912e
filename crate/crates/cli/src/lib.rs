//! The `lcd` command-line tool: lane-change extraction from trajectory
//! recordings, descriptive statistics, duration-family fits and AFT
//! regression, plus a synthetic recording generator.
//!
//! Every command writes its outputs into `--out` and prints the text report
//! to stdout. Errors end the process with exit code 2 (configuration),
//! 3 (data) or 4 (numerical failure) after a single
//! `lcd-error code=<n> kind=<Variant> message="..."` line on stderr.

pub mod config;
pub mod error;
mod render;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lcd_core::aft::{
    partial_effects_at, regression_report, LawOutcome, RegressionData, RegressionReport,
};
use lcd_core::extraction::{
    detect_lane_changes_with_report, export_events, import_events, percentile, summarize,
    ExtractionError, ExtractionReport, LaneChangeEvent, Variable,
};
use lcd_core::fitting::{
    compare_models, emit_curve_comparison, emit_curves, kaplan_meier, ComparisonTable, CurveSource,
    RowOutcome,
};
use lcd_core::ingest::{
    load_recordings, write_recording, ColumnMap, IngestError, RecordingPaths, VehicleClass,
};
use lcd_core::survival::{ErrorLaw, Family, Sample};
use lcd_core::synth::{generate, SyntheticSpec};
use serde::Serialize;

pub use config::{AnalysisConfig, Grid};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lcd", version, about = "Lane-change duration analysis")]
pub struct Cli {
    /// Analysis configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the synthetic generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Report passenger cars and heavy vehicles separately (default true).
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    pub split_by_class: Option<bool>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect lane changes and write `events.csv`.
    Extract {
        /// Recording directories or `*_tracks.csv` files.
        inputs: Vec<PathBuf>,
        /// Column map (TOML).
        #[arg(long, value_name = "PATH")]
        columns: Option<PathBuf>,
    },
    /// Descriptive statistics of duration, speed and headways.
    Describe {
        /// Events CSV (default: config, then `<out>/events.csv`).
        events: Option<PathBuf>,
    },
    /// Fit duration families and rank them by AIC.
    Fit {
        /// Events CSV (default: config, then `<out>/events.csv`).
        events: Option<PathBuf>,
        /// Comma-separated subset of exponential, weibull, lognormal, loglogistic, gengamma.
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
    },
    /// Accelerated failure time regression.
    Aft {
        /// Events CSV (default: config, then `<out>/events.csv`).
        events: Option<PathBuf>,
        /// Comma-separated subset of weibull, lognormal, loglogistic.
        #[arg(long, value_delimiter = ',')]
        laws: Vec<ErrorLaw>,
        /// Comma-separated subset of speed, thw, dhw.
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
    },
    /// Survival and cumulative hazard curves of fitted families and the
    /// Kaplan–Meier estimate.
    Curves {
        /// Events CSV (default: config, then `<out>/events.csv`).
        events: Option<PathBuf>,
        /// Comma-separated subset of the five families.
        #[arg(long, value_delimiter = ',')]
        families: Vec<Family>,
        /// `start:stop:step` in seconds.
        #[arg(long)]
        grid: Option<Grid>,
    },
    /// Generate a synthetic recording and its planted events.
    Synth {
        /// Synthetic recording spec (TOML); overrides the `[synth]` table.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
    },
}

/// A reporting block: everything, or one vehicle class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    All,
    Class(VehicleClass),
}

impl Group {
    /// File-name label.
    pub fn label(self) -> &'static str {
        match self {
            Group::All => "all",
            Group::Class(VehicleClass::PassengerCar) => "car",
            Group::Class(VehicleClass::HeavyVehicle) => "truck",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Group::All => "All vehicles",
            Group::Class(VehicleClass::PassengerCar) => "Passenger cars",
            Group::Class(VehicleClass::HeavyVehicle) => "Heavy vehicles",
        }
    }

    fn class(self) -> Option<VehicleClass> {
        match self {
            Group::All => None,
            Group::Class(c) => Some(c),
        }
    }

    fn contains(self, e: &LaneChangeEvent) -> bool {
        self.class().is_none_or(|c| e.vehicle_class == c)
    }
}

impl Serialize for Group {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// Settings after merging the config file with the command-line flags.
pub struct Context {
    pub config: AnalysisConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub split: bool,
}

impl Context {
    pub fn new(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => AnalysisConfig::from_path(path)?,
            None => AnalysisConfig::default(),
        };
        Ok(Self {
            out: cli.out.clone().unwrap_or_else(|| config.output_dir.clone()),
            seed: cli.seed.unwrap_or(config.seed),
            split: cli.split_by_class.unwrap_or(config.split_by_class),
            config,
        })
    }

    fn groups(&self) -> Vec<Group> {
        if self.split {
            VehicleClass::ALL.iter().map(|&c| Group::Class(c)).collect()
        } else {
            vec![Group::All]
        }
    }

    fn events_path(&self, arg: &Option<PathBuf>) -> PathBuf {
        arg.clone()
            .or_else(|| self.config.input.events.clone())
            .unwrap_or_else(|| self.out.join("events.csv"))
    }

    fn output(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let err = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Output { path, source }
        };
        std::fs::create_dir_all(&self.out).map_err(err(&self.out))?;
        let path = self.out.join(name);
        File::create(&path).map(BufWriter::new).map_err(err(&path))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.output(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|source| CliError::Output {
                path: name.to_string(),
                source,
            })
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write_text(name, &text)
    }

    fn write_csv(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), Box<dyn std::error::Error + Send + Sync>>,
    ) -> Result<(), CliError> {
        let mut w = self.output(name)?;
        f(&mut w).map_err(|e| CliError::Output {
            path: name.to_string(),
            source: std::io::Error::other(e),
        })
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli)?;
    let text = match &cli.command {
        Command::Extract { inputs, columns } => cmd_extract(&ctx, inputs, columns.as_deref())?,
        Command::Describe { events } => cmd_describe(&ctx, &ctx.events_path(events))?,
        Command::Fit { events, families } => cmd_fit(&ctx, &ctx.events_path(events), families)?,
        Command::Aft {
            events,
            laws,
            covariates,
        } => cmd_aft(&ctx, &ctx.events_path(events), laws, covariates)?,
        Command::Curves {
            events,
            families,
            grid,
        } => cmd_curves(&ctx, &ctx.events_path(events), families, *grid)?,
        Command::Synth { spec } => cmd_synth(&ctx, spec.as_deref())?,
    };
    print!("{text}");
    Ok(())
}

fn resolve_inputs(paths: &[PathBuf]) -> Result<Vec<RecordingPaths>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Config(
            "no recordings given; pass paths or set input.recordings".into(),
        ));
    }
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let found = RecordingPaths::discover(p)?;
            if found.is_empty() {
                return Err(IngestError::EmptyRecording {
                    file: format!("{} (no *_tracks.csv recordings)", p.display()),
                }
                .into());
            }
            out.extend(found);
        } else if let Some(prefix) = p
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix("_tracks.csv"))
        {
            if !p.is_file() {
                return Err(CliError::Config(format!("{}: no such file", p.display())));
            }
            out.push(RecordingPaths::with_prefix(
                p.parent().unwrap_or(Path::new("")),
                prefix,
            ));
        } else {
            return Err(CliError::Config(format!(
                "{}: expected a directory or a *_tracks.csv file",
                p.display()
            )));
        }
    }
    Ok(out)
}

pub fn cmd_extract(
    ctx: &Context,
    inputs: &[PathBuf],
    columns: Option<&Path>,
) -> Result<String, CliError> {
    let inputs = if inputs.is_empty() {
        &ctx.config.input.recordings
    } else {
        inputs
    };
    let paths = resolve_inputs(inputs)?;
    let map = match columns.or(ctx.config.input.column_map.as_deref()) {
        Some(p) => ColumnMap::from_path(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => ColumnMap::default(),
    };
    let mut report = ExtractionReport::default();
    let mut summaries = Vec::new();
    for recording in load_recordings(&paths, &map) {
        let recording = recording?;
        let mut vehicles = [0; 2];
        for id in recording.trajectories.keys() {
            if let Some(c) = recording.class_of(*id) {
                vehicles[c as usize] += 1;
            }
        }
        summaries.push(render::RecordingSummary {
            recording_id: recording.meta.recording_id.clone(),
            vehicles,
        });
        report.merge(detect_lane_changes_with_report(
            &recording,
            &ctx.config.extraction,
        )?);
    }
    let events_path = ctx.out.join("events.csv");
    std::fs::create_dir_all(&ctx.out).map_err(|source| CliError::Output {
        path: ctx.out.display().to_string(),
        source,
    })?;
    export_events(&report.events, &events_path)?;
    let log = render::extraction_log(&summaries, &report);
    ctx.write_text("extraction_log.txt", &log)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        candidates: usize,
        events_by_class: std::collections::BTreeMap<VehicleClass, usize>,
        dropped: &'a std::collections::BTreeMap<lcd_core::extraction::DropReason, usize>,
        flagged_sweeps: &'a [lcd_core::extraction::SweepFlag],
    }
    ctx.write_json(
        "extraction.json",
        &Summary {
            candidates: report.candidates,
            events_by_class: report.count_by_class(),
            dropped: &report.dropped,
            flagged_sweeps: &report.flagged_sweeps,
        },
    )?;
    Ok(log)
}

fn load_events(path: &Path) -> Result<Vec<LaneChangeEvent>, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{}: events file not found",
            path.display()
        )));
    }
    Ok(import_events(path)?)
}

fn empty_selection(group: Group) -> CliError {
    ExtractionError::EmptySelection {
        variable: Variable::Duration,
        class: group
            .class()
            .map_or("all vehicles".into(), |c| c.to_string()),
    }
    .into()
}

/// Groups with at least one event; an error if there are none at all.
fn populated_groups(ctx: &Context, events: &[LaneChangeEvent]) -> Result<Vec<Group>, CliError> {
    let groups: Vec<Group> = ctx
        .groups()
        .into_iter()
        .filter(|g| events.iter().any(|e| g.contains(e)))
        .collect();
    if groups.is_empty() {
        return Err(empty_selection(Group::All));
    }
    for g in ctx.groups() {
        if !groups.contains(&g) {
            log::warn!("no events for {}; block skipped", g.title());
        }
    }
    Ok(groups)
}

pub fn cmd_describe(ctx: &Context, events_path: &Path) -> Result<String, CliError> {
    let events = load_events(events_path)?;
    let mut blocks = Vec::new();
    #[derive(Serialize)]
    struct Block {
        group: Group,
        stats: Vec<lcd_core::extraction::DescriptiveStats>,
    }
    let mut json = Vec::new();
    for group in populated_groups(ctx, &events)? {
        let mut rows = Vec::new();
        let mut stats = Vec::new();
        for v in Variable::ALL {
            match summarize(&events, v, group.class()) {
                Ok(d) => {
                    stats.push(d.clone());
                    rows.push(Ok(d));
                }
                Err(ExtractionError::EmptySelection { .. }) if v != Variable::Duration => {
                    rows.push(Err(v))
                }
                Err(e) => return Err(e.into()),
            }
        }
        json.push(Block { group, stats });
        blocks.push((group, rows));
    }
    let text = render::describe(&blocks);
    ctx.write_text("describe.txt", &text)?;
    ctx.write_json("describe.json", &json)?;
    Ok(text)
}

fn group_sample(events: &[LaneChangeEvent], group: Group) -> Result<Sample, CliError> {
    let durations = events
        .iter()
        .filter(|e| group.contains(e))
        .map(|e| e.duration)
        .collect();
    Ok(Sample::observed_only(durations)?)
}

fn fit_groups(
    ctx: &Context,
    events: &[LaneChangeEvent],
    families: &[Family],
) -> Result<Vec<(Group, Sample, ComparisonTable)>, CliError> {
    let families = if families.is_empty() {
        &ctx.config.fit.families
    } else {
        families
    };
    let options = ctx.config.fit.options();
    let mut blocks = Vec::new();
    for group in populated_groups(ctx, events)? {
        let sample = group_sample(events, group)?;
        let table = compare_models(&sample, families, &options);
        blocks.push((group, sample, table));
    }
    if blocks.iter().all(|b| b.2.n_fitted() == 0) {
        let numerical = blocks.iter().flat_map(|b| &b.2.rows).any(|r| {
            matches!(
                &r.outcome,
                RowOutcome::Excluded {
                    partial: Some(_),
                    ..
                }
            )
        });
        return Err(CliError::NothingFitted {
            message: "no family could be fitted in any block".into(),
            numerical,
        });
    }
    Ok(blocks)
}

fn write_curves(
    ctx: &Context,
    blocks: &[(Group, Sample, ComparisonTable)],
    grid: &[f64],
) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    for (group, sample, table) in blocks {
        let km = CurveSource::from(kaplan_meier(sample));
        let name = format!("km_{}.csv", group.label());
        let km_table = emit_curves(&km, grid)?;
        ctx.write_csv(&name, |w| Ok(km_table.write_csv(w)?))?;
        written.push(name);
        for row in &table.rows {
            if let Some(fit) = row.fit() {
                let curve = emit_curve_comparison(&CurveSource::from(fit), &km, grid)?;
                let name = format!("curves_{}_{}.csv", group.label(), row.family.name());
                ctx.write_csv(&name, |w| Ok(curve.write_csv(w)?))?;
                written.push(name);
            }
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct FitBlock<'a> {
    group: Group,
    n: usize,
    table: &'a ComparisonTable,
}

pub fn cmd_fit(ctx: &Context, events_path: &Path, families: &[Family]) -> Result<String, CliError> {
    let events = load_events(events_path)?;
    let blocks = fit_groups(ctx, &events, families)?;
    for (group, _, table) in &blocks {
        ctx.write_csv(&format!("fit_{}.csv", group.label()), |w| {
            Ok(table.write_csv(w)?)
        })?;
    }
    write_curves(ctx, &blocks, &ctx.config.fit.grid.points())?;
    let json: Vec<FitBlock> = blocks
        .iter()
        .map(|(group, sample, table)| FitBlock {
            group: *group,
            n: sample.len(),
            table,
        })
        .collect();
    ctx.write_json("fit.json", &json)?;
    let rendered: Vec<_> = blocks
        .iter()
        .map(|(g, s, t)| (*g, s.len(), t.clone()))
        .collect();
    let text = render::fit(&rendered);
    ctx.write_text("fit.txt", &text)?;
    Ok(text)
}

pub fn cmd_curves(
    ctx: &Context,
    events_path: &Path,
    families: &[Family],
    grid: Option<Grid>,
) -> Result<String, CliError> {
    let events = load_events(events_path)?;
    let blocks = fit_groups(ctx, &events, families)?;
    let grid = grid.unwrap_or(ctx.config.fit.grid);
    let written = write_curves(ctx, &blocks, &grid.points())?;
    Ok(written.iter().map(|n| format!("wrote {n}\n")).collect())
}

pub fn cmd_aft(
    ctx: &Context,
    events_path: &Path,
    laws: &[ErrorLaw],
    covariates: &[String],
) -> Result<String, CliError> {
    let laws = if laws.is_empty() {
        &ctx.config.aft.laws
    } else {
        laws
    };
    let covariates = if covariates.is_empty() {
        &ctx.config.aft.covariates
    } else {
        covariates
    };
    for (i, law) in laws.iter().enumerate() {
        if laws[..i].contains(law) && !laws[i + 1..].contains(law) {
            log::warn!("error law {law} requested more than once; fitted once");
        }
    }
    let events = load_events(events_path)?;
    let names: Vec<&str> = covariates.iter().map(String::as_str).collect();
    let all = RegressionData::from_events(&events, &names)?;
    if all.dropped_rows() > 0 {
        log::warn!(
            "{} of {} events lack a requested covariate and were dropped",
            all.dropped_rows(),
            events.len()
        );
    }
    for key in ctx
        .config
        .aft
        .partial_effects
        .keys()
        .chain(ctx.config.aft.reference.keys())
    {
        if !covariates.contains(key) {
            return Err(CliError::Config(format!(
                "aft: {key:?} is not among the covariates ({})",
                covariates.join(", ")
            )));
        }
    }
    let options = ctx.config.fit.options();
    let grid = ctx.config.fit.grid.points();
    let mut blocks = Vec::new();
    for group in ctx.groups() {
        let data = match group.class() {
            Some(c) => all.filter_class(c),
            None => all.clone(),
        };
        if data.is_empty() {
            log::warn!("no usable events for {}; block skipped", group.title());
            continue;
        }
        let report = regression_report(&data, laws, &options)?;
        ctx.write_csv(&format!("aft_{}.csv", group.label()), |w| {
            Ok(report.write_csv(w)?)
        })?;
        if let Some(fit) = report.best() {
            let mut reference = fit.covariate_means.clone();
            for (name, value) in &ctx.config.aft.reference {
                reference[fit.index_of(name)?] = *value;
            }
            for (j, name) in fit.covariate_names().iter().enumerate() {
                let values = match ctx.config.aft.partial_effects.get(*name) {
                    Some(v) => v.clone(),
                    None => {
                        let mut column = data.column(j);
                        column.sort_by(f64::total_cmp);
                        [0.25, 0.5, 0.75]
                            .iter()
                            .map(|&q| percentile(&column, q))
                            .collect()
                    }
                };
                let pe = partial_effects_at(fit, name, &values, &grid, &reference)?;
                ctx.write_csv(&format!("partial_{}_{name}.csv", group.label()), |w| {
                    Ok(pe.write_csv(fit, w)?)
                })?;
            }
        }
        blocks.push((group, report));
    }
    if blocks.is_empty() {
        return Err(empty_selection(Group::All));
    }
    let fitted = |r: &RegressionReport| r.entries.iter().any(|e| e.fit().is_some());
    if !blocks.iter().any(|(_, r)| fitted(r)) {
        let numerical = blocks.iter().flat_map(|(_, r)| &r.entries).any(|e| {
            matches!(
                &e.outcome,
                LawOutcome::Failed {
                    partial: Some(_),
                    ..
                }
            )
        });
        return Err(CliError::NothingFitted {
            message: "no error law could be fitted in any block".into(),
            numerical,
        });
    }
    #[derive(Serialize)]
    struct Block<'a> {
        group: Group,
        report: &'a RegressionReport,
    }
    let json: Vec<Block> = blocks
        .iter()
        .map(|(group, report)| Block {
            group: *group,
            report,
        })
        .collect();
    ctx.write_json("aft.json", &json)?;
    let text = render::aft(&blocks);
    ctx.write_text("aft.txt", &text)?;
    Ok(text)
}

pub fn cmd_synth(ctx: &Context, spec_path: Option<&Path>) -> Result<String, CliError> {
    let spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => ctx.config.synth.clone(),
    };
    let synth = generate(&spec, ctx.seed)?;
    std::fs::create_dir_all(&ctx.out).map_err(|source| CliError::Output {
        path: ctx.out.display().to_string(),
        source,
    })?;
    let paths = write_recording(&synth.recording, &ctx.out, &spec.recording_id)?;
    let truth = ctx
        .out
        .join(format!("{}_planted_events.csv", spec.recording_id));
    export_events(&synth.planted, &truth)?;
    let mut text = String::new();
    for p in [
        &paths.tracks,
        &paths.vehicle_meta,
        &paths.recording_meta,
        &truth,
    ] {
        text.push_str(&format!("wrote {}\n", p.display()));
    }
    for class in VehicleClass::ALL {
        let vehicles = synth.scripts.iter().filter(|s| s.class == class).count();
        let planted = synth
            .planted
            .iter()
            .filter(|e| e.vehicle_class == class)
            .count();
        text.push_str(&format!(
            "{}: {vehicles} vehicles, {planted} planted lane changes\n",
            Group::Class(class).title()
        ));
    }
    Ok(text)
}
