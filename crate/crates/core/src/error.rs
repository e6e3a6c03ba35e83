//! Error types for every pipeline stage.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown scenario template `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("cannot fit a classifier on an empty dataset")]
    EmptyDataset,
    #[error("model has no trees")]
    UnfittedModel,
    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CfError {
    #[error("target class already predicted for this input")]
    InvalidTarget,
    #[error("no valid counterfactual found within the search budget")]
    NotFound,
    #[error(transparent)]
    Model(#[from] TreeError),
}

/// Why a counterfactual observation cannot be realized as a world state.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("implausible scene: {0}")]
    Implausible(String),
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("only {got} of {wanted} counterfactual records could be produced")]
    InsufficientCfs { got: usize, wanted: usize },
    #[error("target counterfactual fraction {0} outside [0, 0.5]")]
    BadFraction(f64),
    #[error("replayed episode diverged from the recorded one: {0}")]
    Replay(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Model(#[from] TreeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no episode results to aggregate")]
    EmptyResults,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Errors reading or writing pipeline artifacts.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}
