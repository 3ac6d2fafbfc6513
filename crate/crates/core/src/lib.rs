//! Simulation and analysis of an amplitude-modulated optical-rotation (AMOR)
//! magnetometer: synthetic rotation signals, a balanced-polarimeter detector
//! model, lock-in and spectrum-analyzer emulation, resonance and noise-law
//! fitting, and sensitivity / shot-noise-limit analysis.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod analysis;
pub mod config;
pub mod constants;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod export;
pub mod fitting;
pub mod rng;
pub mod signal;

pub use analysis::{
    classify_operating_point, compute_snr, projection_noise, quadrature_slope, sensitivity, snl_map, snl_range,
    SensitivityReport, SnlClass, SnlMapRow, SnlRange, SnrSource,
};
pub use config::{
    parse_config, validate_config, AnalyzerConfig, AtomConfig, ConfigBuilder, DetectorConfig, ExperimentConfig,
    FieldConfig, PhotocurrentConvention, RunConfig, SlopeConvention, ValidatedConfig, WindowKind,
};
pub use constants::PhysicalConstants;
pub use detector::{detect, DetectedTimeSeries, DetectionSettings, NoiseBudget, NoiseProfile};
pub use dsp::{
    lock_in_demodulate, peak_and_background, psd_estimate, sweep_resonance, AnalyzerSettings, LockInOutput,
    PowerSpectrum, ResonanceCurve, SampledSignal,
};
pub use error::{AmorError, Result};
pub use fitting::{fit_lorentzian, fit_noise_polynomial, LorentzianFit, NoisePolyFit};
pub use signal::{synthesize_rotation, ResonanceParams, RotationTimeSeries, SynthesisSettings};
