//! Measurement building blocks shared by the scenario modes.

use crate::spec::NoiseTables;
use amor_core::analysis::compute_snr;
use amor_core::config::DetectorConfig;
use amor_core::detector::{detect, polarimeter_gain, DetectedTimeSeries, DetectionSettings};
use amor_core::dsp::{lock_in_demodulate, peak_and_background, psd_estimate, AnalyzerSettings, PeakAndBackground, PowerSpectrum, ResonanceCurve};
use amor_core::fitting::{fit_lorentzian, LorentzianFit};
use amor_core::rng::derive_seed;
use amor_core::signal::{larmor_doubled_freq, synthesize_rotation, ResonanceParams, SynthesisSettings};
use amor_core::{FieldConfig, Result, ValidatedConfig};
use rayon::prelude::*;

/// Seed namespaces, so that each role draws from its own stream family.
pub mod tag {
    pub const SWEEP: u64 = 1;
    pub const SPECTRUM_ON: u64 = 2;
    pub const SPECTRUM_OFF: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const SNL_LOW: u64 = 5;
    pub const SNL_HIGH: u64 = 6;
    pub const POWER: u64 = 7;
    pub const FIELD: u64 = 8;
    pub const SIMULATE: u64 = 9;
}

pub fn seed_for(seed: u64, tag: u64, index: usize) -> u64 {
    derive_seed(derive_seed(seed, tag), index as u64)
}

/// A validated configuration together with its resolved noise tables.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub cfg: &'a ValidatedConfig,
    pub tables: &'a NoiseTables,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ValidatedConfig, tables: &'a NoiseTables) -> Self {
        Context { cfg, tables }
    }

    pub fn modulation_freq(&self) -> f64 {
        self.cfg.field.modulation_freq
    }

    /// Resonance at probe power `power`, including the configured saturation and broadening.
    pub fn resonance(&self, power: f64) -> Result<ResonanceParams> {
        let run = &self.cfg.run;
        ResonanceParams::new(
            run.phi0_at(power),
            run.gamma_at(self.cfg.atom.relaxation_gamma, power),
            larmor_doubled_freq(self.cfg.b_field, &self.cfg.atom)?,
        )
    }

    pub fn detection(&self, power: f64) -> DetectionSettings {
        DetectionSettings {
            angle_gain: polarimeter_gain(power, &self.cfg.detector, self.cfg.atom.probe_wavelength),
            electronic: self.tables.electronic.clone(),
            technical: self.tables.technical.clone(),
        }
    }

    pub fn synthesis(&self, power: f64, duration: f64) -> SynthesisSettings {
        SynthesisSettings::new(duration, self.cfg.run.sample_rate, power, self.cfg.atom.probe_wavelength)
    }

    /// Rotation through the configured detector. `res.phi0 = 0` gives a noise-only record.
    pub fn detected(&self, res: &ResonanceParams, field: &FieldConfig, synth: &SynthesisSettings, seed: u64) -> Result<DetectedTimeSeries> {
        let rot = synthesize_rotation(res, field, synth, seed)?;
        detect(&rot, &self.cfg.detector, &self.detection(synth.power), seed)
    }

    pub fn analyzer(&self, center: f64) -> AnalyzerSettings {
        let a = &self.cfg.analyzer;
        AnalyzerSettings::centered(a.rbw, a.vbw, center, a.span).with_window(a.window)
    }
}

/// Modulation-frequency grid spanning `±half_span·γ` around the resonance.
pub fn sweep_grid(res: &ResonanceParams, points: usize, half_span: f64) -> Vec<f64> {
    if points == 1 {
        return vec![res.center_freq];
    }
    let lo = res.center_freq - half_span * res.gamma_fwhm;
    let step = 2.0 * half_span * res.gamma_fwhm / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMeasurement {
    pub truth: ResonanceParams,
    pub curve: ResonanceCurve,
    pub fit: Option<LorentzianFit>,
}

/// Demodulated sweep of `res` through the full detection chain; points run in
/// parallel and are collected in grid order.
pub fn measure_sweep(ctx: &Context<'_>, res: ResonanceParams, power: f64, seed: u64) -> Result<SweepMeasurement> {
    let run = &ctx.cfg.run;
    let grid = sweep_grid(&res, run.sweep_points, run.sweep_half_span);
    let synth = ctx.synthesis(power, run.lockin_dwell);
    let points: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let field = FieldConfig::with_detuning(f, res.detuning_at(f));
            let ts = ctx.detected(&res, &field, &synth, seed_for(seed, tag::SWEEP, i))?;
            let out = lock_in_demodulate(&ts, f, run.lockin_bandwidth)?;
            Ok((out.phi_p, out.phi_q))
        })
        .collect::<Result<_>>()?;
    let (p, q) = points.into_iter().unzip();
    let curve = ResonanceCurve::new(grid, p, q)?;
    let fit = if curve.len() >= amor_core::fitting::MIN_POINTS { Some(fit_lorentzian(&curve, None)?) } else { None };
    Ok(SweepMeasurement { truth: res, curve, fit })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMeasurement {
    pub on: PowerSpectrum,
    pub off: PowerSpectrum,
    pub peak: PeakAndBackground,
    pub snr: f64,
}

/// Signal and reference (noise-only) traces at the configured modulation frequency.
pub fn measure_spectrum(ctx: &Context<'_>, power: f64, seed: u64) -> Result<SpectrumMeasurement> {
    let res = ctx.resonance(power)?;
    let field = ctx.cfg.field;
    let synth = ctx.synthesis(power, ctx.cfg.run.duration);
    let f_mod = field.modulation_freq;
    let settings = ctx.analyzer(f_mod);
    let (on, off) = rayon::join(
        || -> Result<PowerSpectrum> {
            let ts = ctx.detected(&res, &field, &synth, seed_for(seed, tag::SPECTRUM_ON, 0))?;
            psd_estimate(&ts, &settings)
        },
        || -> Result<PowerSpectrum> {
            let quiet = ResonanceParams { phi0: 0.0, ..res };
            let ts = ctx.detected(&quiet, &field, &synth, seed_for(seed, tag::SPECTRUM_OFF, 0))?;
            psd_estimate(&ts, &settings)
        },
    );
    let (on, off) = (on?, off?);
    let peak = peak_and_background(&on, &off, f_mod, ctx.cfg.analyzer.bg_window)?;
    let snr = compute_snr(peak.s_sig, peak.s_bg, on.rbw)?;
    Ok(SpectrumMeasurement { on, off, peak, snr })
}

/// Noise-only trace at `power` through `det`, sampled at `sample_rate`.
pub fn noise_spectrum(
    ctx: &Context<'_>,
    det: &DetectorConfig,
    detection: &DetectionSettings,
    power: f64,
    sample_rate: f64,
    settings: &AnalyzerSettings,
    seed: u64,
) -> Result<PowerSpectrum> {
    let res = ResonanceParams::new(0.0, ctx.cfg.atom.relaxation_gamma, 0.0)?;
    let synth = SynthesisSettings::new(ctx.cfg.run.duration, sample_rate, power, ctx.cfg.atom.probe_wavelength);
    let rot = synthesize_rotation(&res, &FieldConfig::with_detuning(0.0, 0.0), &synth, seed)?;
    let ts = detect(&rot, det, detection, seed)?;
    psd_estimate(&ts, settings)
}

/// Smallest value and its ±`tolerance` neighbourhood on a power grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Plateau {
    pub p_min: f64,
    pub value_min: f64,
    /// Edges where the curve crosses `(1 + tolerance)·value_min`, interpolated in log power.
    pub p_low: f64,
    pub p_high: f64,
    pub ratio: f64,
    /// True when an edge ran into the end of the grid.
    pub truncated: bool,
}

pub fn plateau(powers: &[f64], values: &[f64], tolerance: f64) -> Option<Plateau> {
    let pts: Vec<(f64, f64)> = powers.iter().zip(values).filter(|(p, v)| **p > 0.0 && v.is_finite()).map(|(p, v)| (*p, *v)).collect();
    if pts.is_empty() {
        return None;
    }
    let (j, &(p_min, v_min)) = pts.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    let limit = v_min * (1.0 + tolerance);
    let cross = |a: (f64, f64), b: (f64, f64)| {
        let t = (limit - a.1) / (b.1 - a.1);
        (a.0.ln() + t * (b.0.ln() - a.0.ln())).exp()
    };
    let mut lo = j;
    while lo > 0 && pts[lo - 1].1 <= limit {
        lo -= 1;
    }
    let mut hi = j;
    while hi + 1 < pts.len() && pts[hi + 1].1 <= limit {
        hi += 1;
    }
    let (p_low, t_lo) = if lo > 0 { (cross(pts[lo], pts[lo - 1]), false) } else { (pts[0].0, true) };
    let (p_high, t_hi) = if hi + 1 < pts.len() { (cross(pts[hi], pts[hi + 1]), false) } else { (pts[hi].0, true) };
    Some(Plateau { p_min, value_min: v_min, p_low, p_high, ratio: p_high / p_low, truncated: t_lo || t_hi })
}
