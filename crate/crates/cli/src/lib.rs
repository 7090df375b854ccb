//! Command-line front end and HTTP service for the `kgcl` engine.
//!
//! The binary is a thin wrapper: argument definitions live in [`cli`], each
//! subcommand in [`commands`], and the JSON service in [`service`] with its
//! wire types in [`wire`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod service;
pub mod wire;

use std::path::{Path, PathBuf};

use thiserror::Error;

use kgcl::acquisition::AcqError;
use kgcl::engine::EngineError;
use kgcl::eval::EvalError;
use kgcl::kb::KbError;
use kgcl::longrun::LongrunError;
use kgcl::model::ModelError;
use kgcl::train::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Longrun(#[from] LongrunError),
    #[error(transparent)]
    Acquisition(#[from] AcqError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}
