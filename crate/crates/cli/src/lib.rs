//! `hermann`: analyses of Hermann actions on catalog or user-supplied triads.
//!
//! Every command returns a [`Report`]; `main` only formats it and maps errors
//! to exit codes, so the whole front end can be driven from tests.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod triad;

pub use args::{Cli, Command, Format};
pub use error::CliError;
pub use output::{Cell, Report, Table};

use std::path::PathBuf;

use serde_json::{json, Value};

/// A formatted report and where it should go.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    /// A verification check failed; the report is still complete.
    pub failed: bool,
    pub out: Option<PathBuf>,
}

/// Run one command and render it in the requested format.
pub fn run(cli: &Cli) -> Result<Rendered, CliError> {
    let (common, report, envelope) = commands::dispatch(cli)?;
    let text = match common.format {
        Format::Json => output::to_json(&envelope),
        Format::Csv => output::to_csv(&report.table),
    };
    Ok(Rendered {
        text,
        failed: report.failed,
        out: common.out,
    })
}

/// Machine-readable error body written to stderr.
pub fn error_body(err: &CliError) -> String {
    let v: Value = json!({
        "schema": output::SCHEMA,
        "error": { "kind": err.kind.as_str(), "message": err.message },
    });
    output::to_json(&v)
}
