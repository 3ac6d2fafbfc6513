//! Resonance model and rotation-angle synthesis.
//!
//! The rotation angle is
//! `φ(t) = φ_P cos(Ω_m t) + φ_Q sin(Ω_m t) + δφ(t)`,
//! where (φ_P, φ_Q) are the absorptive and dispersive parts of the complex
//! Lorentzian `φ₀·(iΓ/2)/(Δ + iΓ/2)` and δφ is white photon shot noise.
//!
//! Noise normalisation: the shot-noise density `S_φ = 1/(2Φ_ph)` is the
//! density seen on one demodulated quadrature. The time series itself carries
//! one-sided PSD `S_φ/2`, so an analyzer sees a background `g²S_φ/2` while a
//! lock-in output carries `S_φ`, and `SNR² = RBW·S_sig/S_bg = φ₀²/S_φ`.

use crate::config::{AtomConfig, FieldConfig};
use crate::constants::photon_energy;
use crate::error::{AmorError, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    /// Maximum rotation angle φ₀, rad.
    pub phi0: f64,
    /// FWHM γ = Γ/2π, Hz.
    pub gamma_fwhm: f64,
    /// Resonant modulation frequency 2Ω_L/2π, Hz.
    pub center_freq: f64,
}

impl ResonanceParams {
    pub fn new(phi0: f64, gamma_fwhm: f64, center_freq: f64) -> Result<Self> {
        let p = ResonanceParams { phi0, gamma_fwhm, center_freq };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi0 >= 0.0 && self.phi0.is_finite()) {
            return Err(AmorError::config("phi0", self.phi0, "must be >= 0"));
        }
        if !(self.gamma_fwhm > 0.0 && self.gamma_fwhm.is_finite()) {
            return Err(AmorError::config("gamma_fwhm", self.gamma_fwhm, "must be > 0"));
        }
        if !(self.center_freq >= 0.0 && self.center_freq.is_finite()) {
            return Err(AmorError::config("center_freq", self.center_freq, "must be >= 0"));
        }
        Ok(())
    }

    /// Linewidth Γ in rad/s.
    pub fn gamma_angular(&self) -> f64 {
        2.0 * PI * self.gamma_fwhm
    }

    /// Detuning Δ (rad/s) of a modulation frequency from this resonance.
    pub fn detuning_at(&self, modulation_freq: f64) -> f64 {
        2.0 * PI * (modulation_freq - self.center_freq)
    }
}

/// Sampled rotation angle φ(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub mean_optical_power: f64,
    /// Photons per second reaching the detector, P/(hν).
    pub photon_flux: f64,
    pub modulation_freq: f64,
    pub seed: u64,
}

impl RotationTimeSeries {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Resonant modulation frequency 2Ω_L/2π = 2 g_F µ_B B / h, in Hz.
pub fn larmor_doubled_freq(b_field: f64, atom: &AtomConfig) -> Result<f64> {
    if !(b_field >= 0.0) {
        return Err(AmorError::InvalidInput(format!("field magnitude expected, got B = {b_field} T")));
    }
    Ok(atom.doubled_larmor_per_tesla() * b_field / (2.0 * PI))
}

/// In-phase (absorptive) and quadrature (dispersive) amplitudes at detuning Δ.
pub fn lorentzian_quadratures(delta: f64, res: &ResonanceParams) -> (f64, f64) {
    let half = res.gamma_angular() / 2.0;
    let denom = delta * delta + half * half;
    if !denom.is_finite() {
        return (0.0, 0.0);
    }
    let phi_p = res.phi0 * half * half / denom;
    let phi_q = -res.phi0 * half * delta / denom;
    (phi_p, phi_q)
}

/// Photon flux P/(hν) for a probe of the given wavelength.
pub fn photon_flux(power: f64, wavelength: f64) -> f64 {
    power / photon_energy(wavelength)
}

/// Shot-noise angle density S_φ = 1/(2Φ_ph), rad²/Hz.
pub fn shot_noise_angle_density(photon_flux: f64) -> Result<f64> {
    if !(photon_flux > 0.0) {
        return Err(AmorError::InvalidInput(format!("photon flux must be > 0, got {photon_flux}")));
    }
    Ok(1.0 / (2.0 * photon_flux))
}

/// One-sided PSD of δφ(t) in the synthesized series, S_φ/2.
pub fn series_noise_psd(photon_flux: f64) -> Result<f64> {
    shot_noise_angle_density(photon_flux).map(|s| s / 2.0)
}

/// Record settings for [`synthesize_rotation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    pub duration: f64,
    pub sample_rate: f64,
    /// Mean probe power at the detector, W.
    pub power: f64,
    pub wavelength: f64,
    /// Add photon shot noise. Disabling it is the Φ_ph → ∞ limit.
    pub shot_noise: bool,
}

impl SynthesisSettings {
    pub fn new(duration: f64, sample_rate: f64, power: f64, wavelength: f64) -> Self {
        SynthesisSettings { duration, sample_rate, power, wavelength, shot_noise: true }
    }

    pub fn noiseless(mut self) -> Self {
        self.shot_noise = false;
        self
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

/// Synthesizes φ(t) for a resonance driven at `field.modulation_freq` with detuning `field.detuning_delta`.
///
/// Zero probe power produces no shot noise (there is nothing to count).
pub fn synthesize_rotation(
    res: &ResonanceParams,
    field: &FieldConfig,
    settings: &SynthesisSettings,
    rng_seed: u64,
) -> Result<RotationTimeSeries> {
    res.validate()?;
    let fs = settings.sample_rate;
    if !(settings.duration > 0.0) {
        return Err(AmorError::InvalidInput(format!("duration must be > 0, got {}", settings.duration)));
    }
    if !(fs > 4.0 * field.modulation_freq) {
        return Err(AmorError::Nyquist { freq: field.modulation_freq, sample_rate: fs });
    }
    let n = settings.sample_count();
    if n < 2 {
        return Err(AmorError::TooShort(format!("{n} samples; need at least 2")));
    }
    if !(settings.power >= 0.0) {
        return Err(AmorError::InvalidInput(format!("power must be >= 0, got {}", settings.power)));
    }
    let flux = photon_flux(settings.power, settings.wavelength);
    let (phi_p, phi_q) = lorentzian_quadratures(field.detuning_delta, res);
    let omega = field.modulation_omega();

    let sigma = if settings.shot_noise && flux > 0.0 { (series_noise_psd(flux)? * fs / 2.0).sqrt() } else { 0.0 };
    let mut rng = stream_rng(rng_seed, 0);
    let samples = (0..n)
        .map(|i| {
            let (s, c) = (omega * i as f64 / fs).sin_cos();
            let noise: f64 = if sigma > 0.0 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            phi_p * c + phi_q * s + noise
        })
        .collect();

    Ok(RotationTimeSeries {
        samples,
        sample_rate: fs,
        mean_optical_power: settings.power,
        photon_flux: flux,
        modulation_freq: field.modulation_freq,
        seed: rng_seed,
    })
}
