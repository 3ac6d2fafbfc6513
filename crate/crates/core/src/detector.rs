//! Balanced polarimeter, photodetector and the three-term noise budget.
//!
//! Detected samples are analyzer amplitudes in √W: a sample stream `x(t)`
//! delivers mean power `⟨x²⟩` into the analyzer input, so PSDs come out
//! directly in W/Hz. The angle gain `g_det` (√W/rad) maps rotation to that
//! amplitude; a tone of angle amplitude φ₀ then shows a peak of
//! `g_det²φ₀²/(2·RBW)`.

use crate::config::{DetectorConfig, PhotocurrentConvention};
use crate::constants::{photon_energy, ELECTRON_CHARGE};
use crate::error::{AmorError, Result};
use crate::rng::stream_rng;
use crate::signal::RotationTimeSeries;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Noise power at one detection frequency, `N(P) = A + B·P + C·P²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// A, W/Hz.
    pub coef_elec: f64,
    /// B, W/(Hz·W).
    pub coef_shot: f64,
    /// C, W/(Hz·W²).
    pub coef_tech: f64,
    pub detection_freq: f64,
}

impl NoiseBudget {
    pub fn new(coef_elec: f64, coef_shot: f64, coef_tech: f64, detection_freq: f64) -> Result<Self> {
        let b = NoiseBudget { coef_elec, coef_shot, coef_tech, detection_freq };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("coef_elec", self.coef_elec), ("coef_shot", self.coef_shot), ("coef_tech", self.coef_tech)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AmorError::config(name, v, "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, power: f64) -> f64 {
        noise_budget_eval(self, power)
    }

    /// The three contributions (electronic, shot, technical) at `power`.
    pub fn terms(&self, power: f64) -> [f64; 3] {
        [self.coef_elec, self.coef_shot * power, self.coef_tech * power * power]
    }
}

pub fn noise_budget_eval(budget: &NoiseBudget, power: f64) -> f64 {
    budget.coef_elec + budget.coef_shot * power + budget.coef_tech * power * power
}

/// Mean photocurrent for `power` on the detector.
pub fn photocurrent(power: f64, det: &DetectorConfig, wavelength: f64) -> f64 {
    let per_photon = power * ELECTRON_CHARGE / photon_energy(wavelength);
    match det.photocurrent_convention {
        PhotocurrentConvention::Physical => det.quantum_efficiency * per_photon,
        PhotocurrentConvention::AsPrinted => per_photon / det.quantum_efficiency,
    }
}

/// Predicted shot-noise level at the analyzer, `G_eff²·2·ī·e/R` in W/Hz.
pub fn theoretical_shot_noise_level(power: f64, det: &DetectorConfig, wavelength: f64) -> f64 {
    let g = det.effective_gain();
    g * g * 2.0 * photocurrent(power, det, wavelength) * ELECTRON_CHARGE / det.analyzer_impedance
}

/// Band of the shot-noise prediction given the gain uncertainty, (low, high).
pub fn theoretical_shot_noise_band(power: f64, det: &DetectorConfig, wavelength: f64) -> (f64, f64) {
    let level = theoretical_shot_noise_level(power, det, wavelength);
    let u = det.gain_uncertainty_rel;
    (level * (1.0 - u).powi(2), level * (1.0 + u).powi(2))
}

/// Angle gain tied to the detector chain, `g_det = 2√2·G_eff·ī/√R` (√W/rad).
///
/// With this gain the analyzer background `g²S_φ/2` of pure shot noise equals
/// `G_eff²·2·ī·e/R` scaled by the quantum efficiency.
pub fn polarimeter_gain(power: f64, det: &DetectorConfig, wavelength: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * det.effective_gain() * photocurrent(power, det, wavelength)
        / det.analyzer_impedance.sqrt()
}

/// Spectral shape of an additive noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseProfile {
    White(f64),
    /// (frequency Hz, value) pairs, linearly interpolated and clamped at the ends.
    Table(Vec<(f64, f64)>),
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::White(0.0)
    }
}

impl NoiseProfile {
    pub fn table(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(AmorError::InvalidInput("empty noise table".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(AmorError::InvalidInput(format!("duplicate table frequency {}", w[1].0)));
            }
        }
        if let Some(&(f, v)) = points.iter().find(|(f, v)| !(v >= &0.0) || !f.is_finite()) {
            return Err(AmorError::InvalidInput(format!("bad table entry ({f}, {v})")));
        }
        Ok(NoiseProfile::Table(points))
    }

    /// Parses `freq_hz,value` CSV text; a non-numeric first line is treated as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (f, v) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
            match (f.parse::<f64>(), v.parse::<f64>()) {
                (Ok(f), Ok(v)) => points.push((f, v)),
                _ if points.is_empty() && i == 0 => continue,
                _ => return Err(AmorError::Parse { line: i + 1, message: format!("bad table row '{line}'") }),
            }
        }
        Self::table(points)
    }

    pub fn at(&self, freq: f64) -> f64 {
        match self {
            NoiseProfile::White(v) => *v,
            NoiseProfile::Table(points) => {
                let idx = points.partition_point(|(f, _)| *f < freq);
                if idx == 0 {
                    points[0].1
                } else if idx == points.len() {
                    points[points.len() - 1].1
                } else {
                    let ((f0, v0), (f1, v1)) = (points[idx - 1], points[idx]);
                    v0 + (v1 - v0) * (freq - f0) / (f1 - f0)
                }
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> NoiseProfile {
        match self {
            NoiseProfile::White(v) => NoiseProfile::White(v * factor),
            NoiseProfile::Table(p) => NoiseProfile::Table(p.iter().map(|&(f, v)| (f, v * factor)).collect()),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            NoiseProfile::White(v) => *v == 0.0,
            NoiseProfile::Table(p) => p.iter().all(|&(_, v)| v == 0.0),
        }
    }
}

/// Gain and additive noise applied by [`detect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSettings {
    /// g_det, √W/rad.
    pub angle_gain: f64,
    /// Electronic noise PSD A(Ω), W/Hz.
    pub electronic: NoiseProfile,
    /// Technical noise coefficient C(Ω), W/(Hz·W²).
    pub technical: NoiseProfile,
}

impl DetectionSettings {
    /// Angle gain from the detector chain at the series' optical power, with the
    /// detector's white electronic and technical terms.
    pub fn from_chain(det: &DetectorConfig, power: f64, wavelength: f64) -> Self {
        DetectionSettings {
            angle_gain: polarimeter_gain(power, det, wavelength),
            electronic: NoiseProfile::White(det.electronic_noise_floor),
            technical: NoiseProfile::White(det.technical_noise_coef),
        }
    }

    /// Pure gain with no added noise.
    pub fn noiseless(angle_gain: f64) -> Self {
        DetectionSettings { angle_gain, electronic: NoiseProfile::White(0.0), technical: NoiseProfile::White(0.0) }
    }
}

/// Detector output. Samples are analyzer amplitudes in √W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedTimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Effective transimpedance gain, V/A.
    pub gain_used: f64,
    /// g_det, √W/rad.
    pub angle_gain: f64,
    pub mean_power: f64,
    pub modulation_freq: f64,
    pub seed: u64,
}

/// Converts rotation to analyzer amplitude and adds electronic and technical noise.
///
/// Shot noise is not added here; it is already part of the rotation series.
pub fn detect(
    rotation: &RotationTimeSeries,
    det: &DetectorConfig,
    settings: &DetectionSettings,
    rng_seed: u64,
) -> Result<DetectedTimeSeries> {
    if !(rotation.sample_rate > 0.0) || rotation.samples.is_empty() {
        return Err(AmorError::InvalidInput("empty rotation series".into()));
    }
    if !settings.angle_gain.is_finite() {
        return Err(AmorError::InvalidInput(format!("angle gain {}", settings.angle_gain)));
    }
    let mut samples: Vec<f64> = rotation.samples.iter().map(|&phi| settings.angle_gain * phi).collect();
    let p = rotation.mean_optical_power;
    let fs = rotation.sample_rate;
    let additive = additive_psd(&settings.electronic, &settings.technical, p);
    if !additive.is_zero() {
        let noise = colored_gaussian(samples.len(), fs, &additive, rng_seed);
        for (s, n) in samples.iter_mut().zip(noise) {
            *s += n;
        }
    }
    Ok(DetectedTimeSeries {
        samples,
        sample_rate: fs,
        gain_used: det.effective_gain(),
        angle_gain: settings.angle_gain,
        mean_power: p,
        modulation_freq: rotation.modulation_freq,
        seed: rng_seed,
    })
}

fn additive_psd(elec: &NoiseProfile, tech: &NoiseProfile, power: f64) -> NoiseProfile {
    let p2 = power * power;
    match (elec, tech) {
        (NoiseProfile::White(a), NoiseProfile::White(c)) => NoiseProfile::White(a + c * p2),
        _ => {
            let mut freqs: Vec<f64> = [elec, tech]
                .iter()
                .filter_map(|p| match p {
                    NoiseProfile::Table(t) => Some(t.iter().map(|x| x.0).collect::<Vec<_>>()),
                    _ => None,
                })
                .flatten()
                .collect();
            freqs.sort_by(f64::total_cmp);
            freqs.dedup();
            NoiseProfile::Table(freqs.into_iter().map(|f| (f, elec.at(f) + tech.at(f) * p2)).collect())
        }
    }
}

/// Gaussian noise with one-sided PSD `profile(f)`.
///
/// White profiles are drawn directly; tables are shaped in the frequency domain.
pub fn colored_gaussian(n: usize, sample_rate: f64, profile: &NoiseProfile, seed: u64) -> Vec<f64> {
    // Stream 1 keeps detector noise independent of the shot-noise stream 0.
    let mut rng = stream_rng(seed, 1);
    match profile {
        NoiseProfile::White(psd) => {
            let sigma = (psd * sample_rate / 2.0).sqrt();
            (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
        }
        NoiseProfile::Table(_) => {
            // unit one-sided PSD white noise, then per-bin amplitude shaping
            let sigma = (sample_rate / 2.0).sqrt();
            let mut buf: Vec<Complex<f64>> =
                (0..n).map(|_| Complex::new(sigma * rng.sample::<f64, _>(StandardNormal), 0.0)).collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut buf);
            for (k, c) in buf.iter_mut().enumerate() {
                let bin = if k <= n / 2 { k } else { n - k };
                let f = bin as f64 * sample_rate / n as f64;
                *c *= profile.at(f).max(0.0).sqrt();
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            let scale = 1.0 / n as f64;
            buf.into_iter().map(|c| c.re * scale).collect()
        }
    }
}
