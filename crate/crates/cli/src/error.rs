//! Error taxonomy mapped to process exit codes: validation failures exit
//! 1, invariant breaches (digest/leakage) exit 2, IO problems exit 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("invariant breach: {0}")]
    Invariant(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Invariant(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        CliError::Invariant(msg.into())
    }

    pub fn io(msg: impl std::fmt::Display) -> Self {
        CliError::Io(msg.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<canform_core::tuner::TuneError> for CliError {
    fn from(e: canform_core::tuner::TuneError) -> Self {
        use canform_core::tuner::TuneError;
        match e {
            TuneError::DigestChanged { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<canform_core::lm::LmError> for CliError {
    fn from(e: canform_core::lm::LmError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<canform_core::data::DataError> for CliError {
    fn from(e: canform_core::data::DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<canform_core::synth::SynthError> for CliError {
    fn from(e: canform_core::synth::SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<canform_core::schema::SchemaError> for CliError {
    fn from(e: canform_core::schema::SchemaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<canform_core::embed::EmbedError> for CliError {
    fn from(e: canform_core::embed::EmbedError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<canform_core::resolver::ResolverError> for CliError {
    fn from(e: canform_core::resolver::ResolverError) -> Self {
        CliError::Validation(e.to_string())
    }
}
