use kimmel::bpre::BpreError;
use kimmel::model::{ConfigError, ModelError};
use kimmel::treesim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Degenerate(String),
    /// The report was written with whatever was accepted before stopping.
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    NoConvergence(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} assertion(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    AssertFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::AssertFailed(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::NoConvergence(_) => 5,
            CliError::Io { .. } => 10,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Degenerate(_) | ModelError::NonPositiveMean { .. } => CliError::Degenerate(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<BpreError> for CliError {
    fn from(e: BpreError) -> Self {
        match e {
            BpreError::Model(m) => m.into(),
            BpreError::NoConvergence { .. } | BpreError::BracketTooWide { .. } | BpreError::EnumerationMismatch { .. } => {
                CliError::NoConvergence(format!("{e} (the solver bound is set by --kmax)"))
            }
            BpreError::SurvivalUnresolved { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Infeasible { .. } | SimError::BudgetExhausted { .. } | SimError::EmptyGeneration(_) => {
                CliError::Infeasible(e.to_string())
            }
            SimError::Bpre(b) => b.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}
