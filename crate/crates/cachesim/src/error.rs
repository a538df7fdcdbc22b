use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("time regression at line {line}: {time} is before {previous}")]
    Ordering { line: usize, time: f64, previous: f64 },

    #[error("request at t={time} belongs to a past epoch (current epoch {epoch})")]
    OutOfOrderRequest { time: f64, epoch: u64 },

    #[error("request at t={time} belongs to a future epoch (current epoch {epoch}); roll over first")]
    FutureEpochRequest { time: f64, epoch: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined result: {0}")]
    UndefinedResult(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
