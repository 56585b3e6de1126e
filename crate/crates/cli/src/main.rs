use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use invmetrics_cli::commands;
use invmetrics_cli::error::{EXIT_ASSERTION, EXIT_PASS};
use invmetrics_cli::{CliError, Config};

/// Compare invariant metrics on model domains.
#[derive(Parser)]
#[command(name = "invmetrics", version)]
struct Cli {
    /// Configuration file (`[section]` / `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// e.g. `disk`, `ball:r=1,n=2`, `polydisk:1,1`, `punctured_disk`, `annulus:0.5,1`, `dfh`.
    #[arg(long)]
    domain: Option<String>,
    /// Comma-separated metric list, e.g. `poincare,bergman(degree=40),kobayashi(m=4)`.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Number of sample points.
    #[arg(long)]
    samples: Option<String>,
    /// `json` (default) or `csv`.
    #[arg(long)]
    format: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<String>,
    /// Override any setting: `section.key=value`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate metrics at sample points or at one point.
    Compute {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated complex coordinates, e.g. `0.3,0.1+0.2i`.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<String>,
    },
    /// Pairwise ratio bounds and curvature ranges.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Radial Ricci flow on the unit disk.
    Flow {
        #[command(flatten)]
        run: RunArgs,
        /// `poincare`, `perturbed`, `flat` or `profile`.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        perturbation: Option<String>,
        #[arg(long)]
        scale: Option<String>,
        #[arg(long)]
        nodes: Option<String>,
        #[arg(long)]
        t_max: Option<String>,
        #[arg(long)]
        dt: Option<String>,
        /// Initial profile dump for `--start profile`.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Summarise report dumps and re-check their assertions.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load(path: Option<&PathBuf>) -> Result<Config, CliError> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env(std::env::vars())?;
    Ok(cfg)
}

fn apply_run(cfg: &mut Config, run: RunArgs) -> Result<(), CliError> {
    let flags = [
        ("domain", run.domain),
        ("metrics", run.metrics),
        ("seed", run.seed),
        ("samples", run.samples),
        ("format", run.format),
        ("output", run.output),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set_flag("run", key, v, key)?;
        }
    }
    for s in &run.set {
        cfg.set_override(s)?;
    }
    Ok(())
}

fn set_all(cfg: &mut Config, section: &str, pairs: Vec<(&str, Option<String>)>) -> Result<(), CliError> {
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set_flag(section, key, v, &key.replace('_', "-"))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = load(cli.config.as_ref())?;
    let doc = match cli.command {
        Command::Report { files } => {
            let outcome = commands::report(&files)?;
            print!("{}", outcome.summary);
            if outcome.failed.is_empty() {
                return Ok(EXIT_PASS);
            }
            eprintln!("failed assertions:");
            for f in &outcome.failed {
                eprintln!("  {f}");
            }
            return Ok(EXIT_ASSERTION);
        }
        Command::Compute { run, point, direction } => {
            set_all(&mut cfg, "run", vec![("point", point), ("direction", direction)])?;
            apply_run(&mut cfg, run)?;
            commands::compute(&cfg)?
        }
        Command::Compare { run } => {
            apply_run(&mut cfg, run)?;
            commands::compare(&cfg)?
        }
        Command::Flow { run, start, perturbation, scale, nodes, t_max, dt, profile } => {
            set_all(
                &mut cfg,
                "flow",
                vec![
                    ("start", start),
                    ("perturbation", perturbation),
                    ("scale", scale),
                    ("nodes", nodes),
                    ("t_max", t_max),
                    ("dt", dt),
                    ("profile", profile),
                ],
            )?;
            apply_run(&mut cfg, run)?;
            commands::flow(&cfg)?
        }
    };
    if let Some(text) = commands::emit(&cfg, &doc)? {
        std::io::stdout().write_all(text.as_bytes())?;
    }
    for a in doc.assertions.iter().filter(|a| !a.passed) {
        eprintln!("assertion failed: {}: {}", a.name, a.detail);
    }
    Ok(if doc.all_passed() { EXIT_PASS } else { EXIT_ASSERTION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("invmetrics: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
