//! Shared fixtures for the benchmarks.

use amor_core::detector::{detect, polarimeter_gain, DetectedTimeSeries, DetectionSettings};
use amor_core::dsp::{sweep_resonance, ResonanceCurve, SweepSettings};
use amor_core::signal::{synthesize_rotation, ResonanceParams, SynthesisSettings};
use amor_core::{DetectorConfig, FieldConfig};

pub const SAMPLE_RATE: f64 = 300e3;
pub const CENTER: f64 = 71e3;
pub const POWER: f64 = 80.5e-6;
const LAMBDA: f64 = 795e-9;

pub fn resonance() -> ResonanceParams {
    ResonanceParams::new(1e-3, 10.0, CENTER).unwrap()
}

/// On-resonance record through the default detector chain.
pub fn detected_record(duration: f64, seed: u64) -> DetectedTimeSeries {
    let det = DetectorConfig::default();
    let rot = synthesize_rotation(
        &resonance(),
        &FieldConfig::with_detuning(CENTER, 0.0),
        &SynthesisSettings::new(duration, SAMPLE_RATE, POWER, LAMBDA),
        seed,
    )
    .unwrap();
    detect(&rot, &det, &DetectionSettings::from_chain(&det, POWER, LAMBDA), seed).unwrap()
}

/// 41-point shot-noise sweep across ±5γ.
pub fn sweep_curve(seed: u64) -> ResonanceCurve {
    let res = resonance();
    let grid: Vec<f64> = (0..41).map(|i| CENTER - 50.0 + 2.5 * i as f64).collect();
    let settings = SweepSettings { synthesis: SynthesisSettings::new(0.1, SAMPLE_RATE, POWER, LAMBDA), lockin_bandwidth: 100.0, seed };
    sweep_resonance(&res, &grid, &settings).unwrap().curve
}

/// Background-versus-power points of the default chain (A, B, C near the 71 kHz fit).
pub fn noise_points() -> Vec<(f64, f64)> {
    let det = DetectorConfig::default();
    let g = polarimeter_gain(POWER, &det, LAMBDA);
    let b = g * g * LAMBDA / (4.0 * 6.626_070_15e-34 * 299_792_458.0 * POWER * POWER);
    [0.0, 10e-6, 20e-6, 50e-6, 100e-6, 200e-6, 400e-6, 700e-6]
        .iter()
        .map(|&p| (p, det.electronic_noise_floor + b * p + det.technical_noise_coef * p * p))
        .collect()
}
