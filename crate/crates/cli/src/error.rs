use std::path::PathBuf;

use mtselect_core::{BleuError, DataError, EvalError, FeatureError, SimError, SynthError};
use thiserror::Error;

/// Any failure after argument parsing. All of these exit with code 2;
/// usage errors exit 1 via the argument parser itself.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config `{path}`: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("cannot read `{path}`")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write `{path}`")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Bleu(#[from] BleuError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Feature(#[from] FeatureError),
}
