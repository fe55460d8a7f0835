//! Command implementations behind the `egosent` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_evaluate, cmd_score, cmd_segment, cmd_synth};
pub use config::{Overrides, RunConfig};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status when input data fails validation.
pub const EXIT_DATA: i32 = 1;
/// Exit status for I/O and configuration failures.
pub const EXIT_IO_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] egosent::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_IO_CONFIG,
            CliError::Data(e) if e.is_io() => EXIT_IO_CONFIG,
            CliError::Data(egosent::Error::Synth(egosent::synth::SynthError::InvalidConfig(_))) => EXIT_IO_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<egosent::io::IoError> for CliError {
    fn from(e: egosent::io::IoError) -> Self {
        CliError::Data(e.into())
    }
}
