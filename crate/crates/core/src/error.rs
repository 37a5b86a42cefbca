use std::path::PathBuf;

use crate::program::Opcode;

/// Errors produced anywhere in the simulator pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("unknown {bank} register `{name}`")]
    UnknownRegister { bank: &'static str, name: String },

    #[error("register config: {0}")]
    RegisterConfig(String),

    #[error("program rejected at instruction {index}: {source}")]
    Program {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("listing line {line}: {message}")]
    Listing { line: usize, message: String },

    #[error("cost table has no entry for opcode `{0}`")]
    MissingCost(Opcode),

    #[error("cost table: {0}")]
    CostTable(String),

    #[error("weights: {field}: {message}")]
    Weights { field: String, message: String },

    #[error("input: {0}")]
    Input(String),

    #[error("argmax of an empty score list")]
    EmptyScores,

    #[error("lowering stage `{stage}`: {message}")]
    Lowering { stage: &'static str, message: String },

    #[error("register budget exceeded in stage `{stage}`: {bank} bank needs {needed}, has {available}")]
    RegisterBudget {
        stage: &'static str,
        bank: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("ingest refused, {} problem(s): {}", .0.len(), .0.join("; "))]
    Ingest(Vec<String>),

    #[error("training: {0}")]
    Training(String),

    #[error("servo: {0}")]
    Servo(String),

    #[error("pnm {path}: {message}")]
    Pnm { path: String, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn weights(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Weights {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short stable identifier for the error family, used in machine-parsable
    /// CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::UnknownRegister { .. } => "unknown_register",
            Error::RegisterConfig(_) => "register_config",
            Error::Program { .. } => "program",
            Error::Listing { .. } => "listing",
            Error::MissingCost(_) => "missing_cost",
            Error::CostTable(_) => "cost_table",
            Error::Weights { .. } => "weights",
            Error::Input(_) => "input",
            Error::EmptyScores => "empty_scores",
            Error::Lowering { .. } => "lowering",
            Error::RegisterBudget { .. } => "register_budget",
            Error::Dataset(_) => "dataset",
            Error::Ingest(_) => "ingest",
            Error::Training(_) => "training",
            Error::Servo(_) => "servo",
            Error::Pnm { .. } => "pnm",
            Error::Json(_) => "json",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
