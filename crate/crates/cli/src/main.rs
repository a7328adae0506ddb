use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hermann_cli::error::{CliError, CliErrorKind, EXIT_INPUT, EXIT_OK, EXIT_VERIFY};
use hermann_cli::{error_body, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INPUT as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let code = match run(&cli) {
        Ok(r) => {
            let written = match &r.out {
                Some(path) => std::fs::write(path, &r.text).map_err(|e| {
                    CliError::new(CliErrorKind::Io, format!("{}: {e}", path.display()))
                }),
                None => std::io::stdout()
                    .write_all(r.text.as_bytes())
                    .map_err(|e| CliError::new(CliErrorKind::Io, e.to_string())),
            };
            match written {
                Ok(()) if r.failed => EXIT_VERIFY,
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprint!("{}", error_body(&e));
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprint!("{}", error_body(&e));
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
