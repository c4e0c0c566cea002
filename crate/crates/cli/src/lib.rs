//! Command-line front end: argument parsing, artifact writing and run
//! manifests. `slqr` is a thin wrapper over [`run_cli`].

pub mod cli;
pub mod manifest;
pub mod run;

use std::ffi::OsString;

use clap::Parser;

use cli::{Cli, Command};
use run::Failure;

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    let (resolved, out) = match &cli.command {
        Command::Solve(a) => (run::resolve_solve(a, false)?, a.common.out.clone()),
        Command::Pd(a) => (run::resolve_solve(a, true)?, a.common.out.clone()),
        Command::Learn(a) => (run::resolve_learn(a)?, a.common.out.clone()),
        Command::Arm(a) => (run::resolve_arm(a)?, a.common.out.clone()),
        Command::Rerun(a) => {
            let m = manifest::load(&a.manifest)
                .map_err(|e| Failure::invalid(format!("cannot load manifest {}: {e}", a.manifest.display())))?;
            (m.config, a.out.clone())
        }
    };
    run::execute(&resolved, &out)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { run::EXIT_INVALID } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => {
            if code != 0 {
                eprintln!("error: did not converge within the iteration budget");
            }
            code
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
