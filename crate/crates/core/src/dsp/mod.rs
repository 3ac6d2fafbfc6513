//! Lock-in demodulation and spectrum-analyzer emulation.

mod lockin;
mod spectrum;
mod sweep;
mod window;

pub use lockin::{boxcar_quadratures, lock_in_demodulate, LockIn, LockInOutput};
pub use spectrum::{
    bin_spectrum, peak_and_background, psd_estimate, AnalyzerSettings, PeakAndBackground, PowerSpectrum,
    DEFAULT_BG_WINDOW,
};
pub use sweep::{sweep_point, sweep_resonance, ResonanceCurve, SweepOutcome, SweepSettings};
pub use window::{enbw_bins, window, WindowKind};

use crate::detector::DetectedTimeSeries;
use crate::signal::RotationTimeSeries;

/// A uniformly sampled real signal.
pub trait SampledSignal {
    fn samples(&self) -> &[f64];
    fn sample_rate(&self) -> f64;
    /// Factor converting samples back to rotation angle, when known.
    fn angle_scale(&self) -> f64 {
        1.0
    }
    fn duration(&self) -> f64 {
        self.samples().len() as f64 / self.sample_rate()
    }
}

impl SampledSignal for RotationTimeSeries {
    fn samples(&self) -> &[f64] {
        &self.samples
    }
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
}

impl SampledSignal for DetectedTimeSeries {
    fn samples(&self) -> &[f64] {
        &self.samples
    }
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    fn angle_scale(&self) -> f64 {
        if self.angle_gain != 0.0 {
            1.0 / self.angle_gain
        } else {
            1.0
        }
    }
}

/// Borrowed samples with a rate; lets raw buffers go through the same routines.
#[derive(Debug, Clone, Copy)]
pub struct RawSignal<'a> {
    pub samples: &'a [f64],
    pub sample_rate: f64,
}

impl SampledSignal for RawSignal<'_> {
    fn samples(&self) -> &[f64] {
        self.samples
    }
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
}
