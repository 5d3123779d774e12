//! Command-line front end: configs, the numeric commands, run records and
//! replay. `main.rs` only parses flags and prints.

use std::path::{Path, PathBuf};

pub mod commands;
pub mod config;
pub mod histogram;
pub mod record;
pub mod table;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("run directory {0} already exists")]
    RunDirExists(PathBuf),
    #[error("unreadable run record: {0}")]
    BadRecord(String),
    #[error("run record has schema version {found}, this build reads version {expected}")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("replay mismatch in {file}: recorded sha256 {recorded}, replay produced {replayed}")]
    HashMismatch {
        file: String,
        recorded: String,
        replayed: String,
    },
    #[error("replay mismatch: {0}")]
    ResultsMismatch(String),
    #[error(transparent)]
    Evolve(#[from] actlab::evolve::EvolveError),
    #[error(transparent)]
    Nn(#[from] actlab::nn::NnError),
    #[error(transparent)]
    Data(#[from] actlab::datagen::DataError),
    #[error(transparent)]
    Parse(#[from] actlab::exprlang::ParseError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}
