use std::fmt::Debug;

use lcd_core::aft::AftError;
use lcd_core::extraction::ExtractionError;
use lcd_core::ingest::IngestError;
use lcd_core::survival::SurvivalError;
use lcd_core::synth::SynthError;
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Aft(#[from] AftError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    /// No model in the request could be fitted.
    #[error("{message}")]
    NothingFitted { message: String, numerical: bool },
    #[error("{path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn variant_name(e: &impl Debug) -> String {
    format!("{e:?}")
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect()
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Synth(_) => EXIT_CONFIG,
            CliError::Extraction(ExtractionError::InvalidParams(_)) => EXIT_CONFIG,
            CliError::Ingest(IngestError::Config(_)) => EXIT_CONFIG,
            CliError::Aft(AftError::UnknownCovariate { .. }) => EXIT_CONFIG,
            CliError::Aft(AftError::NoConvergence { .. }) => EXIT_NUMERICAL,
            CliError::NothingFitted {
                numerical: true, ..
            } => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }

    /// Name of the underlying error variant, e.g. `MissingColumn`.
    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "Config".into(),
            CliError::Ingest(e) => variant_name(e),
            CliError::Extraction(e) => variant_name(e),
            CliError::Aft(e) => variant_name(e),
            CliError::Survival(e) => variant_name(e),
            CliError::Synth(e) => variant_name(e),
            CliError::NothingFitted { .. } => "NothingFitted".into(),
            CliError::Output { .. } => "Output".into(),
        }
    }

    /// Single line `lcd-error code=<n> kind=<Variant> message="<text>"`.
    pub fn error_line(&self) -> String {
        format!(
            "lcd-error code={} kind={} message={:?}",
            self.exit_code(),
            self.kind(),
            self.to_string()
        )
    }
}
