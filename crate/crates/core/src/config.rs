//! Experiment configuration: atoms, detector, field and run settings.
//!
//! Configuration files are UTF-8 text with one `key = value [unit]` entry per
//! line and `#` comments. Every value is converted to SI exactly once, when it
//! is parsed; a bare number is taken to already be SI. Lists share a single
//! trailing unit (`powers = 10, 20, 50 uW`). Unknown keys and units are errors.

use crate::constants::{PhysicalConstants, BOHR_MAGNETON, HBAR};
use crate::error::{AmorError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

/// How the mean photocurrent is derived from optical power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhotocurrentConvention {
    /// ī = η·P·e/(hν).
    #[default]
    Physical,
    /// ī = P·e/(hν·η), reproduces numbers computed with the efficiency in the denominator.
    AsPrinted,
}

/// Prefactor used for the on-resonance quadrature slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlopeConvention {
    /// dφ_Q/dB = (g_F µ_B/πħ)(φ₀/γ).
    #[default]
    Paper,
    /// Twice `Paper`; what differentiating the complex Lorentzian gives.
    Derived,
}

/// Spectrum-analyzer window. Flat-top keeps tone amplitudes exact to ~0.01 dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    FlatTop,
    Hann,
}

macro_rules! keyword_enum {
    ($ty:ty, $field:literal, { $($text:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = AmorError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($variant),)+
                    other => Err(AmorError::config($field, other, concat!("expected one of: ", $($text, " "),+))),
                }
            }
        }
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                $(if *self == $variant { return $text; })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(PhotocurrentConvention, "photocurrent_convention", {
    "physical" => PhotocurrentConvention::Physical,
    "as_printed" => PhotocurrentConvention::AsPrinted,
});
keyword_enum!(SlopeConvention, "slope_convention", {
    "paper" => SlopeConvention::Paper,
    "derived" => SlopeConvention::Derived,
});
keyword_enum!(WindowKind, "window", {
    "flattop" => WindowKind::FlatTop,
    "hann" => WindowKind::Hann,
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomConfig {
    /// Landé factor of the probed hyperfine level.
    pub g_f: f64,
    /// Atomic number density, atoms/m³.
    pub density_n: f64,
    pub cell_radius: f64,
    /// Resonance FWHM γ in Hz.
    pub relaxation_gamma: f64,
    pub probe_wavelength: f64,
}

impl Default for AtomConfig {
    /// ⁸⁵Rb F=3, room-temperature density, 10 cm diameter cell, D1 probe.
    fn default() -> Self {
        AtomConfig {
            g_f: 1.0 / 3.0,
            density_n: 1.27e16,
            cell_radius: 0.05,
            relaxation_gamma: 10.0,
            probe_wavelength: 795e-9,
        }
    }
}

impl AtomConfig {
    /// Atoms in the spherical cell, n·(4/3)πR³.
    pub fn atom_number(&self) -> f64 {
        self.density_n * 4.0 / 3.0 * PI * self.cell_radius.powi(3)
    }

    /// Optical frequency ν = c/λ of the probe.
    pub fn probe_frequency(&self) -> f64 {
        PhysicalConstants::SI.speed_of_light / self.probe_wavelength
    }

    pub fn photon_energy(&self) -> f64 {
        PhysicalConstants::SI.photon_energy(self.probe_wavelength)
    }

    /// Angular frequency 2Ω_L per tesla, 2 g_F µ_B/ħ.
    pub fn doubled_larmor_per_tesla(&self) -> f64 {
        2.0 * self.g_f * BOHR_MAGNETON / HBAR
    }

    pub fn validate(&self) -> Result<()> {
        check(self.g_f.is_finite() && self.g_f != 0.0, "g_f", self.g_f, "must be nonzero")?;
        check_pos("density_n", self.density_n)?;
        check_pos("cell_radius", self.cell_radius)?;
        check_pos("relaxation_gamma", self.relaxation_gamma)?;
        check_pos("probe_wavelength", self.probe_wavelength)?;
        check_pos("atom_number", self.atom_number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Nominal transimpedance gain, V/A.
    pub transimpedance_gain_nominal: f64,
    /// Fraction of the nominal gain delivered into the matched analyzer input.
    pub gain_headroom_factor: f64,
    pub gain_uncertainty_rel: f64,
    pub quantum_efficiency: f64,
    /// Analyzer input impedance, Ω.
    pub analyzer_impedance: f64,
    /// Electronic noise PSD at the analyzer input, W/Hz (the constant term of the budget).
    pub electronic_noise_floor: f64,
    /// Technical noise coefficient, W/(Hz·W²) (the quadratic term of the budget).
    pub technical_noise_coef: f64,
    pub photocurrent_convention: PhotocurrentConvention,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            transimpedance_gain_nominal: 1e6,
            gain_headroom_factor: 0.5,
            gain_uncertainty_rel: 0.10,
            quantum_efficiency: 0.88,
            analyzer_impedance: 50.0,
            electronic_noise_floor: 1.2e-14,
            technical_noise_coef: 8.0e-7,
            photocurrent_convention: PhotocurrentConvention::Physical,
        }
    }
}

impl DetectorConfig {
    /// Gain actually seen by the analyzer, nominal × headroom factor.
    pub fn effective_gain(&self) -> f64 {
        self.transimpedance_gain_nominal * self.gain_headroom_factor
    }

    pub fn validate(&self) -> Result<()> {
        check_pos("transimpedance_gain", self.transimpedance_gain_nominal)?;
        check_pos("gain_headroom_factor", self.gain_headroom_factor)?;
        check(
            self.gain_uncertainty_rel >= 0.0 && self.gain_uncertainty_rel < 1.0,
            "gain_uncertainty_rel",
            self.gain_uncertainty_rel,
            "out of [0,1)",
        )?;
        check(
            self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0,
            "quantum_efficiency",
            self.quantum_efficiency,
            "quantum_efficiency out of (0,1]",
        )?;
        check_pos("analyzer_impedance", self.analyzer_impedance)?;
        check(
            self.electronic_noise_floor >= 0.0 && self.electronic_noise_floor.is_finite(),
            "electronic_noise_floor",
            self.electronic_noise_floor,
            "must be >= 0",
        )?;
        check(
            self.technical_noise_coef >= 0.0 && self.technical_noise_coef.is_finite(),
            "technical_noise_coef",
            self.technical_noise_coef,
            "must be >= 0",
        )
    }
}

/// Bias field and modulation. `detuning_delta` is Δ = Ω_m − 2Ω_L in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b_field: Option<f64>,
    /// Ω_m/2π in Hz.
    pub modulation_freq: f64,
    pub detuning_delta: f64,
}

impl FieldConfig {
    /// Field with modulation at `modulation_freq`, or on resonance when `None`.
    pub fn from_field(b_field: f64, modulation_freq: Option<f64>, atom: &AtomConfig) -> Self {
        let resonance = atom.doubled_larmor_per_tesla() * b_field;
        let modulation_freq = modulation_freq.unwrap_or(resonance / (2.0 * PI));
        FieldConfig {
            b_field: Some(b_field),
            modulation_freq,
            detuning_delta: 2.0 * PI * modulation_freq - resonance,
        }
    }

    /// Modulation with an explicit detuning and no field bookkeeping.
    pub fn with_detuning(modulation_freq: f64, detuning_delta: f64) -> Self {
        FieldConfig { b_field: None, modulation_freq, detuning_delta }
    }

    pub fn modulation_omega(&self) -> f64 {
        2.0 * PI * self.modulation_freq
    }

    pub fn validate(&self, atom: &AtomConfig) -> Result<()> {
        check(
            self.modulation_freq.is_finite() && self.modulation_freq >= 0.0,
            "modulation_freq",
            self.modulation_freq,
            "must be >= 0",
        )?;
        if let Some(b) = self.b_field {
            check(b.is_finite() && b >= 0.0, "b_field", b, "field magnitude must be >= 0")?;
            let expected = self.modulation_omega() - atom.doubled_larmor_per_tesla() * b;
            let scale = self.modulation_omega().abs().max(expected.abs()).max(1.0);
            check(
                (expected - self.detuning_delta).abs() <= 1e-9 * scale,
                "detuning_delta",
                self.detuning_delta,
                "inconsistent with b_field and modulation_freq",
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub rbw: f64,
    pub vbw: f64,
    /// Full span displayed around the modulation frequency, Hz.
    pub span: f64,
    /// Width of the background-averaging window, Hz.
    pub bg_window: f64,
    pub window: WindowKind,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig { rbw: 30.0, vbw: 30.0, span: 40e3, bg_window: 4e3, window: WindowKind::FlatTop }
    }
}

/// Everything a scenario needs beyond the hardware description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Rotation amplitude φ₀ (rad); saturated maximum in power sweeps.
    pub phi0: f64,
    pub probe_power: f64,
    pub sample_rate: f64,
    /// Record length for spectra, s.
    pub duration: f64,
    pub lockin_bandwidth: f64,
    /// Record length per demodulated sweep point, s.
    pub lockin_dwell: f64,
    pub sweep_points: usize,
    /// Half-width of the demodulation sweep in units of γ.
    pub sweep_half_span: f64,
    pub integration_time: f64,
    pub slope_convention: SlopeConvention,
    pub snl_k: Vec<f64>,
    pub powers: Vec<f64>,
    pub fields: Vec<f64>,
    pub detection_freqs: Vec<f64>,
    /// Saturation power of φ₀(P) = φ₀·P/(P+P_sat). `None` (written as 0) keeps φ₀ fixed.
    pub phi0_saturation_power: Option<f64>,
    /// Power broadening, γ(P) = γ + κ·P, Hz/W.
    pub gamma_broadening: f64,
    pub snl_low_bin: f64,
    pub snl_low_max_freq: f64,
    pub snl_high_bin: f64,
    pub snl_high_max_freq: f64,
    pub snl_high_gain: f64,
    /// Electronic floor of the high-frequency chain, W/Hz.
    pub snl_high_elec_floor: f64,
    pub elec_noise_table: Option<PathBuf>,
    pub tech_noise_table: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            phi0: 1e-3,
            probe_power: 80.5e-6,
            sample_rate: 300e3,
            duration: 1.0,
            lockin_bandwidth: 100.0,
            lockin_dwell: 0.1,
            sweep_points: 41,
            sweep_half_span: 5.0,
            integration_time: 1.0,
            slope_convention: SlopeConvention::Paper,
            snl_k: vec![1.0, 2.0, 4.0],
            powers: vec![0.0, 10e-6, 20e-6, 50e-6, 100e-6, 200e-6, 400e-6, 700e-6],
            fields: vec![],
            detection_freqs: vec![],
            phi0_saturation_power: Some(5e-6),
            gamma_broadening: 1.9e5,
            snl_low_bin: 10e3,
            snl_low_max_freq: 300e3,
            snl_high_bin: 34e3,
            snl_high_max_freq: 2e6,
            snl_high_gain: 1e5,
            snl_high_elec_floor: 5.6e-17,
            elec_noise_table: None,
            tech_noise_table: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.phi0 >= 0.0 && self.phi0.is_finite(), "phi0", self.phi0, "must be >= 0")?;
        check(self.probe_power >= 0.0 && self.probe_power.is_finite(), "probe_power", self.probe_power, "must be >= 0")?;
        check_pos("sample_rate", self.sample_rate)?;
        check_pos("duration", self.duration)?;
        check_pos("lockin_bandwidth", self.lockin_bandwidth)?;
        check_pos("lockin_dwell", self.lockin_dwell)?;
        check(self.sweep_points >= 1, "sweep_points", self.sweep_points, "must be >= 1")?;
        check_pos("sweep_half_span", self.sweep_half_span)?;
        check_pos("integration_time", self.integration_time)?;
        check(self.gamma_broadening >= 0.0, "gamma_broadening", self.gamma_broadening, "must be >= 0")?;
        if let Some(p) = self.phi0_saturation_power {
            check_pos("phi0_saturation_power", p)?;
        }
        for &k in &self.snl_k {
            check(k >= 1.0, "snl_k", k, "k must be >= 1")?;
        }
        check_increasing("snl_k", &self.snl_k)?;
        check_increasing("powers", &self.powers)?;
        check_increasing("fields", &self.fields)?;
        check_increasing("detection_freqs", &self.detection_freqs)?;
        for &p in &self.powers {
            check(p >= 0.0, "powers", p, "must be >= 0")?;
        }
        check_pos("snl_low_bin", self.snl_low_bin)?;
        check_pos("snl_low_max_freq", self.snl_low_max_freq)?;
        check_pos("snl_high_bin", self.snl_high_bin)?;
        check_pos("snl_high_max_freq", self.snl_high_max_freq)?;
        check_pos("snl_high_gain", self.snl_high_gain)?;
        check(
            self.snl_high_elec_floor >= 0.0 && self.snl_high_elec_floor.is_finite(),
            "snl_high_elec_floor",
            self.snl_high_elec_floor,
            "must be >= 0",
        )
    }

    /// φ₀ at probe power `p` under the configured saturation model.
    pub fn phi0_at(&self, p: f64) -> f64 {
        match self.phi0_saturation_power {
            Some(ps) => self.phi0 * p / (p + ps),
            None => self.phi0,
        }
    }

    /// γ at probe power `p` under linear power broadening.
    pub fn gamma_at(&self, base_gamma: f64, p: f64) -> f64 {
        base_gamma + self.gamma_broadening * p
    }
}

/// Complete experiment description as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub atom: AtomConfig,
    pub detector: DetectorConfig,
    pub b_field: f64,
    pub modulation_freq: Option<f64>,
    pub analyzer: AnalyzerConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    /// 7.6 µT bias, modulation on resonance.
    fn default() -> Self {
        ExperimentConfig {
            atom: AtomConfig::default(),
            detector: DetectorConfig::default(),
            b_field: 7.6e-6,
            modulation_freq: None,
            analyzer: AnalyzerConfig::default(),
            run: RunConfig::default(),
        }
    }
}

/// Quantities derived once validation has passed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub atom_number: f64,
    pub probe_frequency: f64,
    pub photon_energy: f64,
    pub effective_gain: f64,
}

/// A configuration that has passed every invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    pub field: FieldConfig,
    pub derived: DerivedQuantities,
}

impl std::ops::Deref for ValidatedConfig {
    type Target = ExperimentConfig;
    fn deref(&self) -> &ExperimentConfig {
        &self.config
    }
}

impl ExperimentConfig {
    pub fn field(&self) -> FieldConfig {
        FieldConfig::from_field(self.b_field, self.modulation_freq, &self.atom)
    }
}

/// Checks every invariant and fills in derived quantities.
pub fn validate_config(cfg: ExperimentConfig) -> Result<ValidatedConfig> {
    cfg.atom.validate()?;
    cfg.detector.validate()?;
    check(cfg.b_field.is_finite() && cfg.b_field >= 0.0, "b_field", cfg.b_field, "field magnitude must be >= 0")?;
    if let Some(f) = cfg.modulation_freq {
        check(f.is_finite() && f >= 0.0, "modulation_freq", f, "must be >= 0")?;
    }
    let field = cfg.field();
    field.validate(&cfg.atom)?;
    check_pos("rbw", cfg.analyzer.rbw)?;
    check_pos("vbw", cfg.analyzer.vbw)?;
    check_pos("span", cfg.analyzer.span)?;
    check_pos("bg_window", cfg.analyzer.bg_window)?;
    check(
        cfg.analyzer.bg_window <= cfg.analyzer.span,
        "bg_window",
        cfg.analyzer.bg_window,
        "must not exceed span",
    )?;
    cfg.run.validate()?;
    let derived = DerivedQuantities {
        atom_number: cfg.atom.atom_number(),
        probe_frequency: cfg.atom.probe_frequency(),
        photon_energy: cfg.atom.photon_energy(),
        effective_gain: cfg.detector.effective_gain(),
    };
    Ok(ValidatedConfig { config: cfg, field, derived })
}

fn check(ok: bool, field: &str, value: impl ToString, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(AmorError::config(field, value, reason))
    }
}

fn check_pos(field: &str, value: f64) -> Result<()> {
    check(value.is_finite() && value > 0.0, field, value, "must be > 0")
}

fn check_increasing(field: &str, values: &[f64]) -> Result<()> {
    for w in values.windows(2) {
        check(w[1] > w[0], field, w[1], "grid must be strictly increasing")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Text format

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Field,
    Freq,
    Power,
    Length,
    Resistance,
    Transimpedance,
    Time,
    Angle,
    Density,
    Psd,
    FreqPerPower,
    /// Dimensionless, or a coefficient given in SI without a unit.
    Bare,
}

fn unit(symbol: &str) -> Option<(Dim, f64)> {
    Some(match symbol {
        "T" => (Dim::Field, 1.0),
        "mT" => (Dim::Field, 1e-3),
        "uT" => (Dim::Field, 1e-6),
        "nT" => (Dim::Field, 1e-9),
        "Hz" => (Dim::Freq, 1.0),
        "kHz" => (Dim::Freq, 1e3),
        "MHz" => (Dim::Freq, 1e6),
        "W" => (Dim::Power, 1.0),
        "mW" => (Dim::Power, 1e-3),
        "uW" => (Dim::Power, 1e-6),
        "nW" => (Dim::Power, 1e-9),
        "m" => (Dim::Length, 1.0),
        "cm" => (Dim::Length, 1e-2),
        "mm" => (Dim::Length, 1e-3),
        "nm" => (Dim::Length, 1e-9),
        "ohm" => (Dim::Resistance, 1.0),
        "V/A" => (Dim::Transimpedance, 1.0),
        "s" => (Dim::Time, 1.0),
        "ms" => (Dim::Time, 1e-3),
        "rad" => (Dim::Angle, 1.0),
        "mrad" => (Dim::Angle, 1e-3),
        "urad" => (Dim::Angle, 1e-6),
        "m^-3" => (Dim::Density, 1.0),
        "cm^-3" => (Dim::Density, 1e6),
        "W/Hz" => (Dim::Psd, 1.0),
        "mW/Hz" => (Dim::Psd, 1e-3),
        "Hz/W" => (Dim::FreqPerPower, 1.0),
        "Hz/mW" => (Dim::FreqPerPower, 1e3),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Scalar(Dim),
    List(Dim),
    Count,
    Word,
}

const KEYS: &[(&str, Kind)] = &[
    ("g_f", Kind::Scalar(Dim::Bare)),
    ("density_n", Kind::Scalar(Dim::Density)),
    ("cell_radius", Kind::Scalar(Dim::Length)),
    ("relaxation_gamma", Kind::Scalar(Dim::Freq)),
    ("probe_wavelength", Kind::Scalar(Dim::Length)),
    ("transimpedance_gain", Kind::Scalar(Dim::Transimpedance)),
    ("gain_headroom_factor", Kind::Scalar(Dim::Bare)),
    ("gain_uncertainty_rel", Kind::Scalar(Dim::Bare)),
    ("quantum_efficiency", Kind::Scalar(Dim::Bare)),
    ("analyzer_impedance", Kind::Scalar(Dim::Resistance)),
    ("electronic_noise_floor", Kind::Scalar(Dim::Psd)),
    ("technical_noise_coef", Kind::Scalar(Dim::Bare)),
    ("photocurrent_convention", Kind::Word),
    ("b_field", Kind::Scalar(Dim::Field)),
    ("modulation_freq", Kind::Scalar(Dim::Freq)),
    ("rbw", Kind::Scalar(Dim::Freq)),
    ("vbw", Kind::Scalar(Dim::Freq)),
    ("span", Kind::Scalar(Dim::Freq)),
    ("bg_window", Kind::Scalar(Dim::Freq)),
    ("window", Kind::Word),
    ("phi0", Kind::Scalar(Dim::Angle)),
    ("probe_power", Kind::Scalar(Dim::Power)),
    ("sample_rate", Kind::Scalar(Dim::Freq)),
    ("duration", Kind::Scalar(Dim::Time)),
    ("lockin_bandwidth", Kind::Scalar(Dim::Freq)),
    ("lockin_dwell", Kind::Scalar(Dim::Time)),
    ("sweep_points", Kind::Count),
    ("sweep_half_span", Kind::Scalar(Dim::Bare)),
    ("integration_time", Kind::Scalar(Dim::Time)),
    ("slope_convention", Kind::Word),
    ("snl_k", Kind::List(Dim::Bare)),
    ("powers", Kind::List(Dim::Power)),
    ("fields", Kind::List(Dim::Field)),
    ("detection_freqs", Kind::List(Dim::Freq)),
    ("phi0_saturation_power", Kind::Scalar(Dim::Power)),
    ("gamma_broadening", Kind::Scalar(Dim::FreqPerPower)),
    ("snl_low_bin", Kind::Scalar(Dim::Freq)),
    ("snl_low_max_freq", Kind::Scalar(Dim::Freq)),
    ("snl_high_bin", Kind::Scalar(Dim::Freq)),
    ("snl_high_max_freq", Kind::Scalar(Dim::Freq)),
    ("snl_high_gain", Kind::Scalar(Dim::Transimpedance)),
    ("snl_high_elec_floor", Kind::Scalar(Dim::Psd)),
    ("elec_noise_table", Kind::Word),
    ("tech_noise_table", Kind::Word),
];

/// All recognised configuration keys.
pub fn config_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
    Count(usize),
    Word(String),
}

fn parse_number(text: &str) -> Option<f64> {
    if let Some((num, den)) = text.split_once('/') {
        let (n, d) = (num.trim().parse::<f64>().ok()?, den.trim().parse::<f64>().ok()?);
        return (d != 0.0).then_some(n / d);
    }
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Splits `"10, 20 uW"` into (`"10, 20"`, Some(factor)) after checking the unit's dimension.
fn split_unit<'a>(key: &str, text: &'a str, dim: Dim) -> std::result::Result<(&'a str, f64), String> {
    let text = text.trim();
    if let Some((head, last)) = text.rsplit_once(char::is_whitespace) {
        if parse_number(last).is_none() && !last.ends_with(',') {
            return match unit(last) {
                Some((d, factor)) if d == dim => Ok((head.trim(), factor)),
                Some(_) => Err(format!("unit '{last}' has the wrong dimension for {key}")),
                None => Err(format!("unknown unit '{last}'")),
            };
        }
    }
    Ok((text, 1.0))
}

fn parse_value(key: &str, raw: &str) -> std::result::Result<Value, String> {
    let kind = kind_of(key).ok_or_else(|| format!("unknown key '{key}'"))?;
    match kind {
        Kind::Scalar(dim) => {
            let (num, factor) = split_unit(key, raw, dim)?;
            let v = parse_number(num).ok_or_else(|| format!("cannot parse '{num}' as a number"))?;
            Ok(Value::Num(v * factor))
        }
        Kind::List(dim) => {
            let (nums, factor) = split_unit(key, raw, dim)?;
            if nums.trim().is_empty() {
                return Ok(Value::List(vec![]));
            }
            nums.split(',')
                .map(|t| parse_number(t).map(|v| v * factor).ok_or_else(|| format!("cannot parse '{}' as a number", t.trim())))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Value::List)
        }
        Kind::Count => raw
            .trim()
            .parse::<usize>()
            .map(Value::Count)
            .map_err(|_| format!("cannot parse '{}' as a count", raw.trim())),
        Kind::Word => Ok(Value::Word(raw.trim().to_string())),
    }
}

/// Raw key/value pairs, collected before a configuration is assembled.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    values: BTreeMap<String, Value>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses configuration text. Later duplicates of a key override earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut builder = ConfigBuilder::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| AmorError::Parse {
                line: idx + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = parse_value(key, raw).map_err(|message| AmorError::Parse { line: idx + 1, message })?;
            builder.values.insert(key.to_string(), value);
        }
        Ok(builder)
    }

    /// Sets a single key from its textual form (used for environment overrides).
    pub fn set(&mut self, key: &str, raw: &str) -> Result<&mut Self> {
        let value = parse_value(key, raw).map_err(|reason| AmorError::config(key, raw, &reason))?;
        self.values.insert(key.to_string(), value);
        Ok(self)
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in &self.values {
            apply(&mut cfg, key, value)?;
        }
        Ok(cfg)
    }
}

fn apply(cfg: &mut ExperimentConfig, key: &str, value: &Value) -> Result<()> {
    let num = || match value {
        Value::Num(v) => Ok(*v),
        _ => Err(AmorError::config(key, format!("{value:?}"), "expected a number")),
    };
    let list = || match value {
        Value::List(v) => Ok(v.clone()),
        _ => Err(AmorError::config(key, format!("{value:?}"), "expected a list")),
    };
    let word = || match value {
        Value::Word(w) => Ok(w.clone()),
        _ => Err(AmorError::config(key, format!("{value:?}"), "expected a word")),
    };
    let path = || word().map(|w| if w.is_empty() || w == "none" { None } else { Some(PathBuf::from(w)) });
    let (a, d, r) = (&mut cfg.atom, &mut cfg.detector, &mut cfg.run);
    match key {
        "g_f" => a.g_f = num()?,
        "density_n" => a.density_n = num()?,
        "cell_radius" => a.cell_radius = num()?,
        "relaxation_gamma" => a.relaxation_gamma = num()?,
        "probe_wavelength" => a.probe_wavelength = num()?,
        "transimpedance_gain" => d.transimpedance_gain_nominal = num()?,
        "gain_headroom_factor" => d.gain_headroom_factor = num()?,
        "gain_uncertainty_rel" => d.gain_uncertainty_rel = num()?,
        "quantum_efficiency" => d.quantum_efficiency = num()?,
        "analyzer_impedance" => d.analyzer_impedance = num()?,
        "electronic_noise_floor" => d.electronic_noise_floor = num()?,
        "technical_noise_coef" => d.technical_noise_coef = num()?,
        "photocurrent_convention" => d.photocurrent_convention = word()?.parse()?,
        "b_field" => cfg.b_field = num()?,
        "modulation_freq" => cfg.modulation_freq = Some(num()?),
        "rbw" => cfg.analyzer.rbw = num()?,
        "vbw" => cfg.analyzer.vbw = num()?,
        "span" => cfg.analyzer.span = num()?,
        "bg_window" => cfg.analyzer.bg_window = num()?,
        "window" => cfg.analyzer.window = word()?.parse()?,
        "phi0" => r.phi0 = num()?,
        "probe_power" => r.probe_power = num()?,
        "sample_rate" => r.sample_rate = num()?,
        "duration" => r.duration = num()?,
        "lockin_bandwidth" => r.lockin_bandwidth = num()?,
        "lockin_dwell" => r.lockin_dwell = num()?,
        "sweep_points" => match value {
            Value::Count(n) => r.sweep_points = *n,
            _ => return Err(AmorError::config(key, format!("{value:?}"), "expected a count")),
        },
        "sweep_half_span" => r.sweep_half_span = num()?,
        "integration_time" => r.integration_time = num()?,
        "slope_convention" => r.slope_convention = word()?.parse()?,
        "snl_k" => r.snl_k = list()?,
        "powers" => r.powers = list()?,
        "fields" => r.fields = list()?,
        "detection_freqs" => r.detection_freqs = list()?,
        // zero turns saturation off
        "phi0_saturation_power" => r.phi0_saturation_power = Some(num()?).filter(|&v| v != 0.0),
        "gamma_broadening" => r.gamma_broadening = num()?,
        "snl_low_bin" => r.snl_low_bin = num()?,
        "snl_low_max_freq" => r.snl_low_max_freq = num()?,
        "snl_high_bin" => r.snl_high_bin = num()?,
        "snl_high_max_freq" => r.snl_high_max_freq = num()?,
        "snl_high_gain" => r.snl_high_gain = num()?,
        "snl_high_elec_floor" => r.snl_high_elec_floor = num()?,
        "elec_noise_table" => r.elec_noise_table = path()?,
        "tech_noise_table" => r.tech_noise_table = path()?,
        other => return Err(AmorError::config(other, "", "unknown key")),
    }
    Ok(())
}

impl FromStr for ExperimentConfig {
    type Err = AmorError;
    fn from_str(text: &str) -> Result<Self> {
        ConfigBuilder::parse(text)?.build()
    }
}

/// Parses and validates configuration text in one step.
pub fn parse_config(text: &str) -> Result<ValidatedConfig> {
    validate_config(text.parse()?)
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Writes the configuration back out in SI, one key per line.
    ///
    /// Floats use the shortest representation that round-trips exactly.
    pub fn to_config_string(&self) -> String {
        let (a, d, r, an) = (&self.atom, &self.detector, &self.run, &self.analyzer);
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("g_f", format!("{:?}", a.g_f));
        line("density_n", format!("{:?}", a.density_n));
        line("cell_radius", format!("{:?}", a.cell_radius));
        line("relaxation_gamma", format!("{:?}", a.relaxation_gamma));
        line("probe_wavelength", format!("{:?}", a.probe_wavelength));
        line("transimpedance_gain", format!("{:?}", d.transimpedance_gain_nominal));
        line("gain_headroom_factor", format!("{:?}", d.gain_headroom_factor));
        line("gain_uncertainty_rel", format!("{:?}", d.gain_uncertainty_rel));
        line("quantum_efficiency", format!("{:?}", d.quantum_efficiency));
        line("analyzer_impedance", format!("{:?}", d.analyzer_impedance));
        line("electronic_noise_floor", format!("{:?}", d.electronic_noise_floor));
        line("technical_noise_coef", format!("{:?}", d.technical_noise_coef));
        line("photocurrent_convention", d.photocurrent_convention.as_str().to_string());
        line("b_field", format!("{:?}", self.b_field));
        if let Some(f) = self.modulation_freq {
            line("modulation_freq", format!("{f:?}"));
        }
        line("rbw", format!("{:?}", an.rbw));
        line("vbw", format!("{:?}", an.vbw));
        line("span", format!("{:?}", an.span));
        line("bg_window", format!("{:?}", an.bg_window));
        line("window", an.window.as_str().to_string());
        line("phi0", format!("{:?}", r.phi0));
        line("probe_power", format!("{:?}", r.probe_power));
        line("sample_rate", format!("{:?}", r.sample_rate));
        line("duration", format!("{:?}", r.duration));
        line("lockin_bandwidth", format!("{:?}", r.lockin_bandwidth));
        line("lockin_dwell", format!("{:?}", r.lockin_dwell));
        line("sweep_points", r.sweep_points.to_string());
        line("sweep_half_span", format!("{:?}", r.sweep_half_span));
        line("integration_time", format!("{:?}", r.integration_time));
        line("slope_convention", r.slope_convention.as_str().to_string());
        line("snl_k", join(&r.snl_k));
        line("powers", join(&r.powers));
        line("fields", join(&r.fields));
        line("detection_freqs", join(&r.detection_freqs));
        line("phi0_saturation_power", format!("{:?}", r.phi0_saturation_power.unwrap_or(0.0)));
        line("gamma_broadening", format!("{:?}", r.gamma_broadening));
        line("snl_low_bin", format!("{:?}", r.snl_low_bin));
        line("snl_low_max_freq", format!("{:?}", r.snl_low_max_freq));
        line("snl_high_bin", format!("{:?}", r.snl_high_bin));
        line("snl_high_max_freq", format!("{:?}", r.snl_high_max_freq));
        line("snl_high_gain", format!("{:?}", r.snl_high_gain));
        line("snl_high_elec_floor", format!("{:?}", r.snl_high_elec_floor));
        if let Some(p) = &r.elec_noise_table {
            line("elec_noise_table", p.display().to_string());
        }
        if let Some(p) = &r.tech_noise_table {
            line("tech_noise_table", p.display().to_string());
        }
        out
    }
}
