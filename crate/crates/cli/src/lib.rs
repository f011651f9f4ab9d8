//! `u1sym` command line. [`run`] is the whole program minus process exit, so
//! tests can drive it in-process.

mod args;
mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;

use clap::Parser;
use serde::Serialize;
use u1sym_core::Error;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Name of the config echo written to the output directory before any result.
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Serialize)]
struct Echo<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    config: &'a Cli,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. JSON results go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut (dyn Write + Send) = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let echo = Echo {
        tool: "u1sym",
        version: env!("CARGO_PKG_VERSION"),
        argv: argv
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        config: &cli,
    };
    let result = write_echo(&cli, &echo).and_then(|()| {
        let threads = if cli.deterministic {
            Some(1)
        } else {
            cli.workers
        };
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .install(|| commands::dispatch(&cli, stdout, stderr)),
            None => commands::dispatch(&cli, stdout, stderr),
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_echo(cli: &Cli, echo: &Echo<'_>) -> Result<(), Error> {
    fs::create_dir_all(&cli.out)?;
    fs::write(
        cli.out.join(CONFIG_ECHO),
        serde_json::to_string_pretty(echo)? + "\n",
    )?;
    Ok(())
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence(_) => EXIT_DIVERGENCE,
        Error::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}
