use std::path::PathBuf;

use knockoff_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// `row` counts data rows from 1 (the header is not counted); `col` is
    /// the 1-based column position in the file.
    #[error("cannot parse {token:?} at row {row}, column {col}")]
    Parse {
        row: usize,
        col: usize,
        token: String,
    },

    #[error("dataset has no numeric covariate columns")]
    NoNumericColumns,

    #[error("column {column} has values other than 0 and 1")]
    NotBinary { column: String },

    #[error("every row was dropped during preprocessing")]
    AllRowsDropped,

    #[error("every column was dropped during preprocessing")]
    AllColumnsDropped,

    #[error("subsample size {m} exceeds the {n} available rows")]
    MTooLarge { m: usize, n: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("cannot read {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    ReadData {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for configuration problems, 3 for data problems, 4 for numerical
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } => 2,
            CliError::Parse { .. }
            | CliError::NoNumericColumns
            | CliError::NotBinary { .. }
            | CliError::AllRowsDropped
            | CliError::AllColumnsDropped
            | CliError::MTooLarge { .. }
            | CliError::Data(_)
            | CliError::ReadData { .. } => 3,
            CliError::Write { .. } => 1,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidQ(_)
        | CoreError::InvalidConfig(_)
        | CoreError::BadDof(_)
        | CoreError::KTooLarge { .. }
        | CoreError::InsufficientReplications { .. } => 2,
        CoreError::DimensionMismatch { .. }
        | CoreError::NonFiniteEntry { .. }
        | CoreError::InvalidTruth(_)
        | CoreError::EmptyH1
        | CoreError::ZeroResponse
        | CoreError::Underdetermined { .. }
        | CoreError::MissingBeta => 3,
        _ => 4,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
