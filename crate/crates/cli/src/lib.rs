//! Problem files, JSON and CSV reports, and the subcommands of the
//! `statecon` binary.

pub mod commands;
pub mod document;
pub mod error;
pub mod output;

pub use commands::{cmd_reduce_b, cmd_variation, cmd_verify, Options, Outcome, VariationOptions};
pub use document::ProblemDocument;
pub use error::{CliError, CliResult};
