//! IO, file formats, experiment orchestration and the `canform` CLI on
//! top of `canform-core`.

pub mod checkpoint;
pub mod checks;
pub mod clock;
pub mod error;
pub mod formats;
pub mod report;
pub mod runner;
pub mod sgd;

pub use error::CliError;
