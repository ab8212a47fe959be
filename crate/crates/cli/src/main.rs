//! `gravloc`: derive scales, run the localization pipeline, re-trace
//! checkpoints, re-analyze kernels and check the scaling law.

mod commands;
mod manifest;
mod plot;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use gravloc::pipeline::RunConfig;
use gravloc::potential::PotentialModel;

pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_NUMERICAL: u8 = 5;
pub const EXIT_CHECK_FAILED: u8 = 6;

#[derive(Parser, Debug)]
#[command(name = "gravloc", version, about = "Gravity-induced localization of a uniform matter ball")]
struct Cli {
    /// Flat TOML config; command line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; each command writes into its own subdirectory.
    #[arg(long, global = true, env = "GRAVLOC_OUT")]
    out: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Worker threads for the partial trace (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    mass_mp: Option<f64>,
    /// Ball radius, cm (replaces any density).
    #[arg(long, global = true, conflicts_with = "density")]
    radius_cm: Option<f64>,
    /// Ball density, g/cm³ (replaces any radius).
    #[arg(long, global = true)]
    density: Option<f64>,
    #[arg(long, global = true)]
    lambda_multiple: Option<f64>,
    /// Reference ground width, cm.
    #[arg(long, global = true, conflicts_with = "formula_lambda_g")]
    lambda_g_ref: Option<f64>,
    /// Measure the initial width against the closed-form ground width.
    #[arg(long, global = true)]
    formula_lambda_g: bool,
    #[arg(long, global = true)]
    n_points: Option<usize>,
    #[arg(long, global = true)]
    r_max_over_radius: Option<f64>,
    /// s
    #[arg(long, global = true)]
    t_final: Option<f64>,
    #[arg(long, global = true)]
    n_steps: Option<usize>,
    #[arg(long, global = true)]
    checkpoint_every: Option<usize>,
    #[arg(long, global = true)]
    quad_n_y: Option<usize>,
    #[arg(long, global = true)]
    quad_n_s: Option<usize>,
    #[arg(long, global = true)]
    slice_n: Option<usize>,
    #[arg(long, global = true)]
    slice_extent: Option<f64>,
    #[arg(long, global = true)]
    no_gravity: bool,
    /// full | harmonic | free
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long, global = true)]
    trace_checkpoints: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the derived scales of the configured setup.
    Derive,
    /// Full pipeline: evolve, trace, analyze, plot data, manifest.
    Run,
    /// Trace the hidden body out of a stored checkpoint.
    Trace {
        /// Checkpoint CSV; its JSON sidecar must sit next to it.
        checkpoint: PathBuf,
    },
    /// Analyze a stored kernel CSV.
    Analyze {
        /// Kernel CSV; its JSON sidecar must sit next to it.
        kernel: PathBuf,
        /// Ground width for the naive count, cm (default: from the sidecar).
        #[arg(long)]
        lambda_g: Option<f64>,
    },
    /// Run the configured setup and its scaled image and compare observables.
    ScalingCheck {
        #[arg(long, default_value_t = 32.0)]
        lambda: f64,
    },
    /// Gravity-free control run.
    FreeReference,
}

/// Marks a failed self-check, as opposed to a failed computation.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { cfg.$field = v; } )* };
    }
    set!(mass_mp, lambda_multiple, n_points, r_max_over_radius, t_final, n_steps, checkpoint_every);
    set!(quad_n_y, quad_n_s, slice_n, slice_extent);
    if let Some(r) = o.radius_cm {
        cfg.radius_cm = Some(r);
        cfg.density = None;
    }
    if let Some(d) = o.density {
        cfg.density = Some(d);
        cfg.radius_cm = None;
    }
    if let Some(l) = o.lambda_g_ref {
        cfg.lambda_g_ref = Some(l);
    }
    if o.formula_lambda_g {
        cfg.lambda_g_ref = None;
    }
    if o.no_gravity {
        cfg.gravity = false;
    }
    if o.trace_checkpoints {
        cfg.trace_checkpoints = true;
    }
    if let Some(p) = &o.potential {
        cfg.potential = parse_model(p)?;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_model(s: &str) -> Result<PotentialModel> {
    Ok(match s {
        "full" => PotentialModel::Full,
        "harmonic" => PotentialModel::Harmonic,
        "free" => PotentialModel::Free,
        other => return Err(gravloc::Error::InvalidParameter {
            name: "potential",
            reason: format!("unknown model {other:?}"),
        }
        .into()),
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<CheckFailed>()) {
        return EXIT_CHECK_FAILED;
    }
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<gravloc::Error>()) {
        use gravloc::Error::*;
        return match e {
            InvalidParameter { .. } | Config(_) | BelowThreshold { .. } | GridTooCoarse { .. } => EXIT_CONFIG,
            Io(_) | Json(_) | Parse(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
    }
    if err.chain().any(|e| e.is::<std::io::Error>() || e.is::<serde_json::Error>()) {
        return EXIT_IO;
    }
    1
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let Some(command) = &cli.command else {
        Cli::command()
            .error(ErrorKind::MissingSubcommand, "a subcommand is required unless --print-config is given")
            .exit()
    };
    let root = PathBuf::from(&cfg.output_dir);
    match command {
        Command::Derive => commands::derive(&cfg),
        Command::Run => commands::run(&cfg, &root, "run"),
        Command::Trace { checkpoint } => commands::trace(&cfg, &root, checkpoint),
        Command::Analyze { kernel, lambda_g } => commands::analyze(&cfg, &root, kernel, *lambda_g),
        Command::ScalingCheck { lambda } => commands::scaling_check(&cfg, &root, *lambda),
        Command::FreeReference => {
            let cfg = RunConfig { gravity: false, ..cfg };
            commands::run(&cfg, &root, "free-reference")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
