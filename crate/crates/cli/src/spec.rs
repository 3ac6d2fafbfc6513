use crate::error::{CliError, CliResult};
use amor_core::config::{config_keys, ConfigBuilder};
use amor_core::detector::NoiseProfile;
use amor_core::{validate_config, ValidatedConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Prefix for configuration overrides taken from the environment, e.g. `AMOR_PROBE_POWER`.
pub const ENV_PREFIX: &str = "AMOR_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    DemodSweep,
    Spectrum,
    NoiseScan,
    SnlMap,
    SensitivitySweep,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::DemodSweep => "demod-sweep",
            Mode::Spectrum => "spectrum",
            Mode::NoiseScan => "noise-scan",
            Mode::SnlMap => "snl-map",
            Mode::SensitivitySweep => "sensitivity-sweep",
        }
    }
}

/// Frequency-dependent detector noise, resolved from the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTables {
    pub electronic: NoiseProfile,
    pub technical: NoiseProfile,
}

/// A fully resolved run request.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub mode: Mode,
    pub config_path: Option<PathBuf>,
    /// Raw text of the configuration file, empty when running on defaults.
    pub config_text: String,
    /// `(key, value)` pairs applied on top of the file.
    pub overrides: Vec<(String, String)>,
    pub config: ValidatedConfig,
    pub tables: NoiseTables,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl ScenarioSpec {
    /// Reads the configuration, applies overrides and validates everything the mode needs.
    pub fn load(
        mode: Mode,
        config_path: Option<&Path>,
        overrides: &[(String, String)],
        output_dir: &Path,
        seed: u64,
        workers: usize,
    ) -> CliResult<Self> {
        let config_text = match config_path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_text(mode, config_text, config_path, overrides, output_dir, seed, workers)
    }

    /// As [`ScenarioSpec::load`] with the file contents already in hand. Noise
    /// tables resolve relative to `config_path`'s directory.
    pub fn from_text(
        mode: Mode,
        config_text: String,
        config_path: Option<&Path>,
        overrides: &[(String, String)],
        output_dir: &Path,
        seed: u64,
        workers: usize,
    ) -> CliResult<Self> {
        let mut builder = ConfigBuilder::parse(&config_text)?;
        for (k, v) in overrides {
            builder.set(k, v)?;
        }
        let config = validate_config(builder.build()?)?;
        let base = config_path.and_then(Path::parent).unwrap_or(Path::new("."));
        let load_table = |path: &Option<PathBuf>, white: f64| -> CliResult<NoiseProfile> {
            match path {
                None => Ok(NoiseProfile::White(white)),
                Some(p) => {
                    let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                    let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(format!("{}: {e}", full.display())))?;
                    Ok(NoiseProfile::from_csv(&text)?)
                }
            }
        };
        let tables = NoiseTables {
            electronic: load_table(&config.run.elec_noise_table, config.detector.electronic_noise_floor)?,
            technical: load_table(&config.run.tech_noise_table, config.detector.technical_noise_coef)?,
        };
        if workers == 0 {
            return Err(CliError::config("--workers must be >= 1"));
        }
        let spec = ScenarioSpec {
            mode,
            config_path: config_path.map(Path::to_path_buf),
            config_text,
            overrides: overrides.to_vec(),
            config,
            tables,
            output_dir: output_dir.to_path_buf(),
            seed,
            workers,
        };
        spec.check_grids()?;
        Ok(spec)
    }

    fn check_grids(&self) -> CliResult<()> {
        let run = &self.config.run;
        let need_powers = |min: usize| -> CliResult<()> {
            if run.powers.len() < min {
                return Err(CliError::config(format!(
                    "{} needs at least {min} entries in `powers`, got {}",
                    self.mode.as_str(),
                    run.powers.len()
                )));
            }
            Ok(())
        };
        match self.mode {
            Mode::NoiseScan | Mode::SnlMap => need_powers(amor_core::fitting::MIN_DISTINCT_POWERS),
            Mode::SensitivitySweep => {
                need_powers(1)?;
                if !run.powers.iter().any(|&p| p > 0.0) {
                    return Err(CliError::config("sensitivity-sweep needs a nonzero power"));
                }
                Ok(())
            }
            Mode::Simulate | Mode::DemodSweep | Mode::Spectrum => {
                if matches!(self.mode, Mode::DemodSweep | Mode::Spectrum) && run.probe_power <= 0.0 {
                    return Err(CliError::config(format!("{} needs probe_power > 0", self.mode.as_str())));
                }
                Ok(())
            }
        }
    }
}

/// Collects `AMOR_*` variables as configuration overrides. Unknown keys are rejected.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (name, value) in vars {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = key.to_ascii_lowercase();
        if !config_keys().any(|k| k == key) {
            return Err(CliError::config(format!("environment variable {name} names no configuration key")));
        }
        out.push((key, value));
    }
    out.sort();
    Ok(out)
}
