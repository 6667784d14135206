mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::ConfigFile;
use crate::manifest::Run;

#[derive(Parser)]
#[command(name = "rodshape", version, about = "Cosserat rod shapes, relaxation and framed curves")]
struct Cli {
    /// Directory receiving every output file and the run manifest.
    #[arg(long, env = "RODSHAPE_OUT_DIR", default_value = ".", global = true)]
    out_dir: PathBuf,

    /// JSON file whose keys override the command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a shape from the catalog or a shape file; writes shape.json and nodes.csv.
    Build(commands::BuildArgs),
    /// Tube mesh of a shape; writes mesh.obj and nodes.csv.
    Render(commands::RenderArgs),
    /// Gradient-flow relaxation; writes trace.csv, initial.json, shape.json and nodes.csv.
    Relax(commands::RelaxArgs),
    /// Bishop frames and invariants of a curve.
    Frames(commands::FramesArgs),
    /// Closure residual of a development, shape or curve; writes closure.json.
    Closure(commands::ClosureArgs),
    /// Curvature, phase and torsion of a development.
    Invariants(commands::InvariantsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Build(_) => "build",
            Command::Render(_) => "render",
            Command::Relax(_) => "relax",
            Command::Frames(_) => "frames",
            Command::Closure(_) => "closure",
            Command::Invariants(_) => "invariants",
        }
    }
}

/// A failed run: exit code, diagnostic kind and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: "numerical",
            message: message.into(),
        }
    }
}

impl From<rodshape::Error> for Failure {
    fn from(e: rodshape::Error) -> Self {
        if e.is_numerical() {
            Failure::numerical(e.to_string())
        } else {
            Failure::validation(e.to_string())
        }
    }
}

/// One JSON object per line on stderr.
pub fn diagnostic(level: &str, kind: &str, message: &str) {
    eprintln!("{}", json!({"level": level, "kind": kind, "message": message}));
}

/// Inserts the `command` named in a `--config` file when the arguments
/// give none.
fn with_config_command(mut args: Vec<OsString>) -> Vec<OsString> {
    let names = ["build", "render", "relax", "frames", "closure", "invariants", "help"];
    let rest: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    if rest.iter().any(|a| names.contains(&a.as_str()) || a == "-h" || a == "--help" || a == "-V" || a == "--version") {
        return args;
    }
    let path = rest.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--config") {
        Some("") => rest.get(i + 1).cloned(),
        Some(v) => v.strip_prefix('=').map(str::to_string),
        None => None,
    });
    let command = path
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("command").and_then(|c| c.as_str()).map(str::to_string));
    if let Some(c) = command.filter(|c| names.contains(&c.as_str())) {
        args.insert(1.min(args.len()), c.into());
    }
    args
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(with_config_command(std::env::args_os().collect())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            diagnostic("error", "usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    let started = Instant::now();
    if let Err(e) = std::fs::create_dir_all(&cli.out_dir) {
        diagnostic(
            "error",
            "validation",
            &format!("cannot create output directory {}: {e}", cli.out_dir.display()),
        );
        return ExitCode::from(2);
    }
    let mut run = Run::new(name, &cli.out_dir, cli.config.as_deref());
    let result = ConfigFile::load_optional(cli.config.as_deref(), name).and_then(|config| {
        let config = config.as_ref();
        match cli.command {
            Command::Build(a) => commands::build(a, config, &mut run),
            Command::Render(a) => commands::render(a, config, &mut run),
            Command::Relax(a) => commands::relax(a, config, &mut run),
            Command::Frames(a) => commands::frames(a, config, &mut run),
            Command::Closure(a) => commands::closure(a, config, &mut run),
            Command::Invariants(a) => commands::invariants(a, config, &mut run),
        }
    });
    let code = match &result {
        Ok(()) => 0,
        Err(f) => {
            diagnostic("error", f.kind, &f.message);
            f.code
        }
    };
    if let Err(e) = run.finish(started.elapsed(), result.err()) {
        diagnostic("error", "io", &format!("cannot write manifest: {e}"));
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
