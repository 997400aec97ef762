use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinn_cli::config::{ExperimentConfig, FdmSection, Kind};
use pinn_cli::{presets, run_experiment, score, CliError, CliResult};

#[derive(Parser)]
#[command(name = "pinn", version, about = "Train and diagnose physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a preset.
    Run(RunArgs),
    /// List the built-in presets.
    List,
    /// Relative L2 error of a checkpoint.
    Score(ScoreArgs),
    /// Compute the lid-driven cavity reference field.
    Fdm(FdmArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: the config's `out`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Validate and print the plan without training.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Problem spec such as `helmholtz:a2=4` (default: the one stored in the checkpoint).
    #[arg(long)]
    problem: Option<String>,
    /// FDM reference CSV (cavity problems only).
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct FdmArgs {
    #[arg(long, default_value_t = FdmSection::default().n)]
    n: usize,
    #[arg(long, default_value_t = FdmSection::default().re)]
    re: f64,
    #[arg(long, default_value_t = FdmSection::default().dt)]
    dt: f64,
    #[arg(long, default_value_t = FdmSection::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value = "out/fdm")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::List => {
            for p in presets::PRESETS {
                println!("{:<24} {}", p.name, p.description);
            }
            Ok(0)
        }
        Command::Score(a) => score(&a.checkpoint, a.problem.as_deref(), a.reference.as_deref()).map(|e| {
            println!("{e:e}");
            0
        }),
        Command::Fdm(a) => cmd_fdm(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn cmd_run(a: RunArgs) -> CliResult<i32> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(p), None) => load_config(p)?,
        (None, Some(name)) => presets::load(name)?,
        _ => return Err(CliError::Usage("give exactly one of --config and --preset".into())),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = a
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let plan = cfg.plan()?;
    if a.dry_run {
        println!("{}: seed {}, output {}", cfg.name, cfg.seed, out.display());
        if cfg.kind == Kind::Fdm || (cfg.is_cavity() && cfg.reference.is_none()) {
            println!("  fdm reference N={} Re={}", cfg.fdm.n, cfg.fdm.re);
        }
        for r in &plan {
            println!("  {} ({} steps, {} parameters)", r.label, r.train.steps, r.network().param_count());
        }
        return Ok(0);
    }
    let outcome = run_experiment(&cfg, &out)?;
    for f in &outcome.manifest.failures {
        eprintln!("failed: {f}");
    }
    println!("{}", out.join(pinn_cli::MANIFEST_FILE).display());
    Ok(outcome.exit_code())
}

fn cmd_fdm(a: FdmArgs) -> CliResult<i32> {
    let mut cfg = presets::load("fdm-reference")?;
    cfg.name = "fdm".into();
    cfg.fdm = FdmSection { n: a.n, re: a.re, dt: a.dt, epsilon: a.epsilon, ..FdmSection::default() };
    let outcome = run_experiment(&cfg, &a.out)?;
    if let Some(f) = &outcome.fdm {
        println!(
            "{}: {} iterations",
            a.out.join("reference.csv").display(),
            f.solution.iterations
        );
    }
    for f in &outcome.manifest.failures {
        eprintln!("failed: {f}");
    }
    Ok(outcome.exit_code())
}
