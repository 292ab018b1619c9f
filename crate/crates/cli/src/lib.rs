pub mod cli;
pub mod error;
pub mod query;
pub mod server;

pub use error::{CliError, CliResult, Exit};
