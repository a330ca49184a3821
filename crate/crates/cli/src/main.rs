//! `chemolab`: run scenarios, analyze motility functions, tabulate linear
//! growth rates and sweep parameters.
//!
//! Results go to stdout as JSON (CSV for `dispersion`). Failures print one
//! JSON object `{"error": {"kind", "message", "path"?}}` on stderr and exit
//! with status 2 for configuration errors and 1 for runtime errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use chemolab::harness::dispersion::dispersion_table;
use chemolab::harness::{output, preset, run_scenario, run_sweep, Overrides, ScenarioConfig, SweepSpec};
use chemolab::motility::critical_family;
use chemolab::{Error, MotilityModel};

#[derive(Parser, Debug)]
#[command(name = "chemolab", version, about = "Local-sensing chemotaxis laboratory")]
struct Cli {
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write diagnostics, snapshots and a summary.
    Simulate(SimulateArgs),
    /// Monotonicity, excitable set and admissible exponents of a model.
    AnalyzeMotility(AnalyzeArgs),
    /// Linear growth rate of perturbations of (M, M) against wavenumber.
    Dispersion(DispersionArgs),
    /// Run a parameter sweep and write the phase-diagram table.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ScenarioSource {
    /// Scenario file (TOML).
    #[arg(long, short, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct RunOverrides {
    /// Output directory (default: the config's, else `out/<name>`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for random initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Final time.
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    overrides: RunOverrides,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    model: ModelArgs,
    /// Use the critical family: `a` is set from `(k, m, s0)` and `b`
    /// (default 1) so that the monotonicity criterion holds with equality.
    #[arg(long)]
    critical: bool,
}

#[derive(Args, Debug)]
struct DispersionArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[command(flatten)]
    model: ModelArgs,
    /// Homogeneous level `M` (default: the scenario's initial mass).
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    q_max: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// Also write `dispersion.csv` and `dispersion.json` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[command(flatten)]
    overrides: RunOverrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = json!({ "kind": e.kind(), "message": e.to_string() });
            if let Error::Config { path, .. } = &e {
                record["path"] = json!(path);
            }
            eprintln!("{}", json!({ "error": record }));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidGrid(_) | Error::NonIntegrable { .. } => 2,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::AnalyzeMotility(args) => analyze(args),
        Command::Dispersion(args) => dispersion(args),
        Command::Sweep(args) => sweep(args),
    }
}

/// Config loading failures, including unreadable files, are config errors.
fn load_scenario(path: &Path) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config {
            path: String::new(),
            message: format!("cannot read {}: {source}", path.display()),
        },
        other => other,
    })
}

fn scenario(source: &ScenarioSource) -> Result<Option<ScenarioConfig>, Error> {
    match (&source.config, &source.preset) {
        (Some(path), _) => load_scenario(path).map(Some),
        (None, Some(name)) => preset(name).map(Some),
        (None, None) => Ok(None),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let mut cfg = scenario(&args.source)?.ok_or_else(|| Error::Config {
        path: String::new(),
        message: "simulate needs --config or --preset".into(),
    })?;
    if let Some(seed) = args.overrides.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.overrides.t_end {
        cfg.solver.t_end = t;
    }
    cfg.validate()?;
    let out_dir = args
        .overrides
        .out_dir
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    log::info!("running `{}` to t = {} into {}", cfg.name, cfg.solver.t_end, out_dir.display());
    let outcome = run_scenario(&cfg, Some(&out_dir))?;
    let r = &outcome.report;
    log::info!(
        "done: {} steps, {} samples, regime {}, pattern flag {}",
        r.steps,
        r.samples,
        r.regime.as_str(),
        r.pattern_flag
    );
    print_json(&outcome.report)?;
    Ok(ExitCode::SUCCESS)
}

fn model_from(source: &ScenarioSource, args: &ModelArgs, allow_missing_a: bool) -> Result<(MotilityModel, Option<ScenarioConfig>), Error> {
    let cfg = scenario(source)?;
    let base = cfg.as_ref().map(|c| c.model);
    let get = |name: &'static str, flag: Option<f64>, from: fn(&MotilityModel) -> f64| -> Result<f64, Error> {
        flag.or(base.as_ref().map(from)).ok_or_else(|| Error::Config {
            path: name.into(),
            message: format!("missing model parameter `{name}` (pass --{name} or --config)"),
        })
    };
    let m = get("m", args.m, MotilityModel::m)?;
    let b = get("b", args.b, MotilityModel::b).or_else(|e| if allow_missing_a { Ok(1.0) } else { Err(e) })?;
    let k = get("k", args.k, MotilityModel::k)?;
    let s0 = get("s0", args.s0, MotilityModel::s0)?;
    let a = if allow_missing_a { args.a.unwrap_or(0.0) } else { get("a", args.a, MotilityModel::a)? };
    Ok((MotilityModel::new(m, a, b, k, s0)?, cfg))
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode, Error> {
    if args.critical {
        let (seed_model, _) = model_from(&args.source, &args.model, true)?;
        let point = critical_family(seed_model.k(), seed_model.m(), seed_model.s0())?;
        let b = seed_model.b();
        let model = MotilityModel::new(seed_model.m(), point.a_over_b * b, b, seed_model.k(), seed_model.s0())?;
        let analysis = model.analyze()?;
        print_json(&json!({ "critical": point, "analysis": analysis }))?;
    } else {
        let (model, _) = model_from(&args.source, &args.model, false)?;
        print_json(&model.analyze()?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn dispersion(args: DispersionArgs) -> Result<ExitCode, Error> {
    let (model, cfg) = model_from(&args.source, &args.model, false)?;
    let mass = args
        .mass
        .or_else(|| cfg.as_ref().and_then(|c| c.initial.mass()))
        .ok_or_else(|| Error::Config {
            path: "mass".into(),
            message: "pass --mass (or a scenario with a known initial mass)".into(),
        })?;
    let table = dispersion_table(&model, mass, args.q_max, args.points)?;
    match table.unstable_band {
        Some((lo, hi)) => log::info!(
            "max rate {:e} at q = {}; unstable for q in [{lo}, {hi}] (q² < {:?})",
            table.max_rate,
            table.q_at_max,
            table.critical_q2
        ),
        None => log::info!("no unstable wavenumber sampled; max rate {:e}", table.max_rate),
    }
    if let Some(dir) = &args.out_dir {
        output::ensure_dir(dir)?;
        let path = dir.join("dispersion.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        table.write_csv(std::io::BufWriter::new(file))?;
        output::write_json(&dir.join("dispersion.json"), &table)?;
    }
    table.write_csv(std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let spec = SweepSpec::load(&args.config).map_err(|e| match e {
        Error::Io { path, source } => Error::Config {
            path: String::new(),
            message: format!("cannot read {}: {source}", path.display()),
        },
        other => other,
    })?;
    let out_dir = args
        .overrides
        .out_dir
        .unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let overrides = Overrides {
        seed: args.overrides.seed,
        t_end: args.overrides.t_end,
    };
    log::info!("sweep `{}` into {}", spec.name, out_dir.display());
    let outcome = run_sweep(&spec, Some(&out_dir), &overrides)?;
    log::info!(
        "{} points on {} threads: {} ok, {} failed",
        outcome.points,
        outcome.threads,
        outcome.rows.len(),
        outcome.failures.len()
    );
    print_json(&outcome.summary())?;
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
