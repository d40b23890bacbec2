//! Job runner behind the `audiotag` binary.

pub mod commands;
pub mod config;

use std::fmt;

/// Process exit status for a failed job.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Config = 2,
    Data = 3,
    Numeric = 4,
}

/// Marks an error as a configuration problem regardless of its source.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Maps an error to its exit class. Library errors are classified by kind;
/// anything else (missing files, unreadable input) counts as a data error.
pub fn classify(err: &anyhow::Error) -> Failure {
    if err.downcast_ref::<ConfigError>().is_some() {
        return Failure::Config;
    }
    match err.chain().find_map(|c| c.downcast_ref::<audiotag::Error>()) {
        Some(audiotag::Error::NonFinite(_)) => Failure::Numeric,
        Some(
            audiotag::Error::InvalidArgument(_)
            | audiotag::Error::FilterbankUnderdetermined(_)
            | audiotag::Error::CheckpointMismatch(_),
        ) => Failure::Config,
        _ => Failure::Data,
    }
}
