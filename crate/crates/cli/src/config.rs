//! The TOML analysis configuration. Every key is optional; relative paths
//! are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lcd_core::extraction::ExtractionParams;
use lcd_core::fitting::optimize::OptimizerSettings;
use lcd_core::fitting::FitOptions;
use lcd_core::survival::{ErrorLaw, Family};
use lcd_core::synth::SyntheticSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub split_by_class: bool,
    pub input: InputConfig,
    pub extraction: ExtractionParams,
    pub fit: FitConfig,
    pub aft: AftConfig,
    pub synth: SyntheticSpec,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("lcd-out"),
            split_by_class: true,
            input: InputConfig::default(),
            extraction: ExtractionParams::default(),
            fit: FitConfig::default(),
            aft: AftConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Directories holding `<id>_tracks.csv` triples, or `*_tracks.csv` files.
    pub recordings: Vec<PathBuf>,
    /// Column map TOML; the HighD layout when absent.
    pub column_map: Option<PathBuf>,
    /// Events CSV for `describe`, `fit`, `aft` and `curves`; defaults to
    /// `<output_dir>/events.csv`.
    pub events: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub families: Vec<Family>,
    pub restarts: usize,
    pub max_iterations: usize,
    pub grid: Grid,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            restarts: FitOptions::default().restarts,
            max_iterations: FitOptions::default().optimizer.max_iterations,
            grid: Grid::default(),
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        let defaults = FitOptions::default();
        FitOptions {
            restarts: self.restarts,
            optimizer: OptimizerSettings {
                max_iterations: self.max_iterations,
                ..defaults.optimizer
            },
        }
    }
}

/// Evenly spaced time grid in seconds, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 16.0,
            step: 0.1,
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.start >= 0.0
            && self.stop > self.start
            && self.step > 0.0
            && self.stop.is_finite()
            && (self.stop - self.start) / self.step <= 1e6;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "grid needs 0 <= start < stop and a positive step, got {}:{}:{}",
                self.start, self.stop, self.step
            ))
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    /// `start:stop:step`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        let grid = Grid {
            start: num(a)?,
            stop: num(b)?,
            step: num(c)?,
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AftConfig {
    pub laws: Vec<ErrorLaw>,
    pub covariates: Vec<String>,
    /// Covariate values at which partial-effect curves are drawn. Covariates
    /// without an entry use their sample quartiles.
    pub partial_effects: BTreeMap<String, Vec<f64>>,
    /// Overrides of the reference point (default: sample means) at which
    /// the other covariates are pinned.
    pub reference: BTreeMap<String, f64>,
}

impl Default for AftConfig {
    fn default() -> Self {
        Self {
            laws: ErrorLaw::ALL.to_vec(),
            covariates: vec!["speed".into(), "thw".into(), "dhw".into()],
            partial_effects: BTreeMap::new(),
            reference: BTreeMap::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        self.input.recordings.iter_mut().for_each(join);
        self.input.column_map.iter_mut().for_each(join);
        self.input.events.iter_mut().for_each(join);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Err(e) = self.extraction.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.fit.grid.validate() {
            return bad(format!("fit.{e}"));
        }
        if self.fit.families.is_empty() {
            return bad("fit.families is empty".into());
        }
        if self.fit.max_iterations == 0 {
            return bad("fit.max_iterations must be positive".into());
        }
        if self.aft.laws.is_empty() {
            return bad("aft.laws is empty".into());
        }
        if let Err(e) = self.synth.validate() {
            return bad(e.to_string());
        }
        Ok(())
    }
}
