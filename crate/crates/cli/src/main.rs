use amor_cli::{emit_plotdata, env_overrides, run_scenario, CliError, CliResult, Mode, ScenarioSpec, MANIFEST};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulate and analyse an amplitude-modulated optical-rotation magnetometer.
///
/// Any configuration key can also be set through the environment as
/// `AMOR_<KEY>` (e.g. `AMOR_PROBE_POWER="100 uW"`). Precedence: file, then
/// environment, then `--set`.
#[derive(Parser)]
#[command(name = "amor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one rotation record and its detected trace.
    Simulate(Common),
    /// Lock-in sweep across the resonance with a Lorentzian fit.
    DemodSweep(Common),
    /// Signal and background spectra at the modulation frequency.
    Spectrum(Common),
    /// Background versus probe power and the fitted noise budget.
    NoiseScan(Common),
    /// Shot-noise-limited power ranges versus detection frequency.
    SnlMap(Common),
    /// Sensitivity versus probe power.
    SensitivitySweep(Common),
    /// Repeat a recorded run from its manifest.json.
    Rerun {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Regenerate plot-data files from an existing output directory.
    Plotdata {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value unit` lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn mode_of(cmd: &Command) -> Option<(Mode, &Common)> {
    Some(match cmd {
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::DemodSweep(c) => (Mode::DemodSweep, c),
        Command::Spectrum(c) => (Mode::Spectrum, c),
        Command::NoiseScan(c) => (Mode::NoiseScan, c),
        Command::SnlMap(c) => (Mode::SnlMap, c),
        Command::SensitivitySweep(c) => (Mode::SensitivitySweep, c),
        Command::Plotdata { .. } | Command::Rerun { .. } => return None,
    })
}

fn manifest_seed(dir: &Path) -> u64 {
    std::fs::read_to_string(dir.join(MANIFEST))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["seed"].as_u64())
        .unwrap_or(0)
}

/// Rebuilds the run request recorded in a manifest: same mode, seed and resolved configuration.
fn spec_from_manifest(path: &Path, out: &Path, workers: usize) -> CliResult<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let m: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let field = |k: &str| m.get(k).ok_or_else(|| CliError::config(format!("manifest has no `{k}`")));
    let mode = Mode::from_str(field("mode")?.as_str().unwrap_or_default(), true).map_err(CliError::config)?;
    let seed = field("seed")?.as_u64().ok_or_else(|| CliError::config("manifest seed is not an integer"))?;
    let config = field("resolved_config")?.as_str().unwrap_or_default().to_string();
    let original = m["config_path"].as_str().map(PathBuf::from);
    ScenarioSpec::from_text(mode, config, original.as_deref(), &[], out, seed, workers)
}

fn paths(files: &[PathBuf]) -> Vec<String> {
    files.iter().map(|p| p.display().to_string()).collect()
}

fn execute(cli: Cli) -> CliResult<serde_json::Value> {
    let Some((mode, common)) = mode_of(&cli.command) else {
        return match &cli.command {
            Command::Rerun { manifest, out, workers } => {
                let spec = spec_from_manifest(manifest, out, *workers)?;
                let summary = run_scenario(&spec)?;
                Ok(json!({ "status": "ok", "mode": spec.mode.as_str(), "seed": spec.seed, "outputs": paths(&summary.files) }))
            }
            Command::Plotdata { out } => {
                let files = emit_plotdata(out, manifest_seed(out))?;
                Ok(json!({ "status": "ok", "mode": "plotdata", "outputs": files }))
            }
            _ => unreachable!(),
        };
    };
    let mut overrides = env_overrides(std::env::vars())?;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let spec = ScenarioSpec::load(mode, common.config.as_deref(), &overrides, &common.out, common.seed, common.workers)?;
    let summary = run_scenario(&spec)?;
    Ok(json!({
        "status": "ok",
        "mode": mode.as_str(),
        "seed": spec.seed,
        "outputs": paths(&summary.files),
        "wall_time_s": summary.wall_time_s,
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) => e.exit(),
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
