//! Figures of merit: SNR, slope, field sensitivity, projection floor, SNL ranges.

use crate::config::{AtomConfig, SlopeConvention};
use crate::constants::{BOHR_MAGNETON, HBAR};
use crate::detector::NoiseBudget;
use crate::error::{AmorError, Result};
use serde::{Deserialize, Serialize, Serializer};
use std::f64::consts::PI;
use std::fmt;

/// SNR² = rbw·S_sig/S_bg. The result is per √Hz of detection bandwidth.
pub fn compute_snr(s_sig: f64, s_bg: f64, rbw: f64) -> Result<f64> {
    if !(s_bg > 0.0) {
        return Err(AmorError::InvalidInput(format!("background density {s_bg}")));
    }
    if !(s_sig >= 0.0) || !(rbw > 0.0) {
        return Err(AmorError::InvalidInput(format!("signal density {s_sig}, rbw {rbw}")));
    }
    Ok((rbw * s_sig / s_bg).sqrt())
}

/// πħ/(g_F µ_B): field per unit resonance frequency, T/Hz.
pub fn field_per_hz(g_f: f64) -> f64 {
    PI * HBAR / (g_f * BOHR_MAGNETON)
}

/// Dispersive-quadrature slope dφ_Q/dB on resonance, rad/T.
///
/// `Derived` is the exact derivative of the quadrature lineshape, twice the `Paper` value.
pub fn quadrature_slope(phi0: f64, gamma_fwhm: f64, g_f: f64, convention: SlopeConvention) -> f64 {
    let base = phi0 / gamma_fwhm / field_per_hz(g_f);
    match convention {
        SlopeConvention::Paper => base,
        SlopeConvention::Derived => 2.0 * base,
    }
}

/// δB = (πħ/g_Fµ_B)·γ/SNR, T/√Hz.
pub fn sensitivity(gamma_fwhm: f64, snr: f64, g_f: f64) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(AmorError::InvalidInput(format!("SNR {snr}")));
    }
    Ok(field_per_hz(g_f) * gamma_fwhm / snr)
}

/// Field noise from the angle noise density and a slope, T/√Hz.
pub fn sensitivity_from_slope(angle_density: f64, slope: f64) -> Result<f64> {
    if slope == 0.0 || !slope.is_finite() {
        return Err(AmorError::InvalidInput(format!("slope {slope}")));
    }
    Ok(angle_density / slope.abs())
}

/// Spin-projection floor (πħ/g_Fµ_B)·√(γ/(N_at·Δτ)), T/√Hz.
pub fn projection_noise(atom: &AtomConfig, integration_time: f64) -> Result<f64> {
    if !(integration_time > 0.0) {
        return Err(AmorError::InvalidInput(format!("integration time {integration_time}")));
    }
    Ok(field_per_hz(atom.g_f) * (atom.relaxation_gamma / (atom.atom_number() * integration_time)).sqrt())
}

/// Powers where the shot term exceeds each of the other two by a factor k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnlRange {
    pub k: f64,
    pub p_low: f64,
    /// `+∞` when there is no technical term.
    pub p_high: f64,
    pub nonempty: bool,
}

impl SnlRange {
    /// Closed-interval membership.
    pub fn contains(&self, p: f64) -> bool {
        self.nonempty && self.p_low <= p && p <= self.p_high
    }
}

pub fn snl_range(budget: &NoiseBudget, k: f64) -> Result<SnlRange> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(AmorError::InvalidInput(format!("k = {k}; must be >= 1")));
    }
    let (a, b, c) = (budget.coef_elec, budget.coef_shot, budget.coef_tech);
    if b == 0.0 {
        return Ok(SnlRange { k, p_low: f64::INFINITY, p_high: 0.0, nonempty: false });
    }
    let p_low = k * a / b;
    let p_high = if c == 0.0 { f64::INFINITY } else { b / (k * c) };
    Ok(SnlRange { k, p_low, p_high, nonempty: p_low < p_high })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnlMapRow {
    pub freq_hz: f64,
    #[serde(flatten)]
    pub range: SnlRange,
}

/// One row per (frequency, k), frequencies in input order and k ascending within each.
pub fn snl_map(budgets: &[NoiseBudget], ks: &[f64]) -> Result<Vec<SnlMapRow>> {
    if budgets.is_empty() {
        return Err(AmorError::InvalidInput("no noise budgets".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(budgets.len() * ks.len());
    for b in budgets {
        for &k in &ks {
            rows.push(SnlMapRow { freq_hz: b.detection_freq, range: snl_range(b, k)? });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnlClass {
    ElectronicLimited,
    Snl(f64),
    TechnicalLimited,
}

impl fmt::Display for SnlClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnlClass::ElectronicLimited => f.write_str("electronic-limited"),
            SnlClass::Snl(k) => write!(f, "SNL({k})"),
            SnlClass::TechnicalLimited => f.write_str("technical-limited"),
        }
    }
}

impl Serialize for SnlClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Boundaries belong to the SNL class.
///
/// When the range is empty and `P` lies past both limits, the larger of the
/// electronic and technical terms decides.
pub fn classify_operating_point(budget: &NoiseBudget, power: f64, k: f64) -> SnlClass {
    let (a, b, c) = (budget.coef_elec, budget.coef_shot, budget.coef_tech);
    let (below, above) = if b == 0.0 {
        (true, true)
    } else {
        let p_high = if c == 0.0 { f64::INFINITY } else { b / (k * c) };
        (power < k * a / b, power > p_high)
    };
    match (below, above) {
        (false, false) => SnlClass::Snl(k),
        (true, false) => SnlClass::ElectronicLimited,
        (false, true) => SnlClass::TechnicalLimited,
        (true, true) => {
            if a >= c * power * power {
                SnlClass::ElectronicLimited
            } else {
                SnlClass::TechnicalLimited
            }
        }
    }
}

/// Highest k in `ks` for which the point is shot-noise limited, else the k=1 class.
pub fn best_snl_class(budget: &NoiseBudget, power: f64, ks: &[f64]) -> SnlClass {
    let mut sorted = ks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut class = classify_operating_point(budget, power, sorted.first().copied().unwrap_or(1.0));
    for &k in &sorted {
        let c = classify_operating_point(budget, power, k);
        if matches!(c, SnlClass::Snl(_)) {
            class = c;
        }
    }
    class
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrSource {
    /// From simulated spectra.
    Measured,
    /// Inferred from a target sensitivity rather than simulated.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub gamma_fwhm: f64,
    pub snr: f64,
    pub snr_convention: &'static str,
    pub snr_source: SnrSource,
    pub delta_b: f64,
    pub delta_b_atomic: f64,
    pub operating_power: f64,
    pub detection_freq: f64,
    pub snl_class: SnlClass,
}

pub const SNR_CONVENTION: &str = "per sqrt(Hz): SNR^2 = rbw*S_sig/S_bg";

impl SensitivityReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma_fwhm: f64,
        snr: f64,
        snr_source: SnrSource,
        atom: &AtomConfig,
        integration_time: f64,
        operating_power: f64,
        detection_freq: f64,
        snl_class: SnlClass,
    ) -> Result<Self> {
        if !(gamma_fwhm > 0.0) {
            return Err(AmorError::InvalidInput(format!("gamma_fwhm {gamma_fwhm}")));
        }
        Ok(SensitivityReport {
            gamma_fwhm,
            snr,
            snr_convention: SNR_CONVENTION,
            snr_source,
            delta_b: sensitivity(gamma_fwhm, snr, atom.g_f)?,
            delta_b_atomic: projection_noise(atom, integration_time)?,
            operating_power,
            detection_freq,
            snl_class,
        })
    }
}
