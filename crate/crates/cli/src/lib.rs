//! The `pumpwatch` command line.
//!
//! Every subcommand is a thin shell over a library operation. Commands print
//! a [`Manifest`] on standard output so they can be piped:
//!
//! ```text
//! pumpwatch synth --seed 7 | pumpwatch train | pumpwatch eval
//! ```
//!
//! Reports land in `--out-dir` and are never overwritten without `--force`.

pub mod args;
mod commands;
pub mod manifest;

use std::cell::RefCell;
use std::ffi::OsString;
use std::io::{IsTerminal, Read};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

pub use args::Cli;
pub use manifest::{Manifest, MANIFEST_HEADER};

/// Outcome of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    /// 0 success, 1 usage error, 2 data error, 3 runtime error.
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
    /// Main report file written by the command.
    pub report: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

enum Stdin<'a> {
    Process,
    Given(Option<&'a str>),
}

/// Per-invocation state shared by the commands.
pub(crate) struct Ctx<'a> {
    pub global: args::GlobalArgs,
    stdin: Stdin<'a>,
    upstream: RefCell<Option<Manifest>>,
}

impl Ctx<'_> {
    /// The piped manifest, read once. Missing input yields an empty manifest.
    pub fn upstream(&self) -> CliResult<Manifest> {
        if let Some(m) = self.upstream.borrow().as_ref() {
            return Ok(m.clone());
        }
        let text = match self.stdin {
            Stdin::Given(t) => t.map(str::to_string),
            Stdin::Process => {
                let mut stdin = std::io::stdin();
                if stdin.is_terminal() {
                    None
                } else {
                    let mut s = String::new();
                    stdin.read_to_string(&mut s).map_err(|e| CliError::Runtime(format!("reading standard input: {e}")))?;
                    Some(s)
                }
            }
        };
        let m = match text {
            Some(t) if !t.trim().is_empty() => Manifest::parse(&t).map_err(CliError::Usage)?,
            _ => Manifest::default(),
        };
        *self.upstream.borrow_mut() = Some(m.clone());
        Ok(m)
    }

    /// A path from its flag, or else from the piped manifest.
    pub fn input_path(&self, flag: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.clone());
        }
        match self.upstream()?.get(key) {
            Some(v) => Ok(PathBuf::from(v)),
            None => Err(CliError::Usage(format!(
                "missing --{} (and no `{key}=` entry on standard input)",
                key.replace('_', "-")
            ))),
        }
    }

    /// Output manifest seeded with what came in on standard input.
    pub fn manifest(&self) -> Manifest {
        self.upstream.borrow().clone().unwrap_or_default()
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        let dir = self.global.out_dir.as_path();
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn out_path(&self, name: &str) -> CliResult<PathBuf> {
        Ok(self.out_dir()?.join(name))
    }

    pub fn seed(&self) -> u64 {
        self.global.seed.unwrap_or(0)
    }
}

/// What a command hands back on success.
pub(crate) struct Output {
    pub manifest: Manifest,
    pub report: Option<PathBuf>,
}

/// Runs one invocation. Standard input is read only when a command needs a
/// path that was not given as a flag.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute(argv, Stdin::Process)
}

/// [`run`] with standard input supplied by the caller.
pub fn run_with_input<I, T>(argv: I, stdin: Option<&str>) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute(argv, Stdin::Given(stdin))
}

fn execute<I, T>(argv: I, stdin: Stdin<'_>) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    CommandResult { code: 0, stdout: text, stderr: String::new(), report: None }
                }
                _ => CommandResult { code: 1, stdout: String::new(), stderr: text, report: None },
            };
        }
    };
    let ctx = Ctx { global: cli.global.clone(), stdin, upstream: RefCell::new(None) };
    match commands::dispatch(&ctx, cli.command) {
        Ok(out) => CommandResult { code: 0, stdout: out.manifest.to_string(), stderr: String::new(), report: out.report },
        Err(e) => CommandResult { code: e.code(), stdout: String::new(), stderr: format!("pumpwatch: {e}\n"), report: None },
    }
}
