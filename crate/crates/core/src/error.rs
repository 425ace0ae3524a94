// SPDX-License-Identifier: Apache-2.0

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("storage error on {key}: {source}")]
    Storage {
        key: String,
        #[source]
        source: io::Error,
    },

    #[error("object not found: {bucket}/{key}")]
    NotFound { bucket: String, key: String },

    #[error("byte range [{lo}, {hi}) out of bounds for {key} (size {size})")]
    Range { key: String, lo: u64, hi: u64, size: u64 },

    #[error("row format error at line {line}: {message}")]
    RowFormat { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("planner bug: {0}")]
    Planner(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("incomplete run: missing output of reduce partition {partition_id}")]
    Incomplete { partition_id: String },

    #[error("task {task_id} failed in stage {stage}: {message}")]
    TaskFailed {
        stage: String,
        task_id: String,
        message: String,
    },

    #[error("stage {stage} failed: {message}")]
    StageFailed { stage: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
