//! Spectrum-analyzer emulation.
//!
//! The resolution filter is a windowed, 50%-overlapped averaged periodogram
//! whose segment length is chosen so the window's equivalent noise bandwidth
//! equals the requested RBW. PSD is one-sided, in (sample unit)²/Hz, so a
//! tone of amplitude `a` peaks at `a²/(2·RBW)` and white noise reads its
//! density directly. VBW narrower than RBW smooths the trace with a zero-phase single pole.

use super::window::{enbw_bins, nominal_enbw_bins, window, WindowKind};
use super::SampledSignal;
use crate::error::{AmorError, Result};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Background averaging width used when none is given, Hz.
pub const DEFAULT_BG_WINDOW: f64 = 4e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSettings {
    pub rbw: f64,
    pub vbw: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub window: WindowKind,
}

impl AnalyzerSettings {
    pub fn new(rbw: f64, vbw: f64, f_lo: f64, f_hi: f64) -> Self {
        AnalyzerSettings { rbw, vbw, f_lo, f_hi, window: WindowKind::FlatTop }
    }

    /// Span of width `span` centred on `center`, clipped at DC.
    pub fn centered(rbw: f64, vbw: f64, center: f64, span: f64) -> Self {
        Self::new(rbw, vbw, (center - span / 2.0).max(0.0), center + span / 2.0)
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    /// Realised equivalent noise bandwidth, Hz.
    pub rbw: f64,
    pub vbw: f64,
    pub bin_width: f64,
    pub segments: usize,
}

impl PowerSpectrum {
    pub fn f_lo(&self) -> f64 {
        self.freqs[0]
    }

    pub fn f_hi(&self) -> f64 {
        self.freqs[self.freqs.len() - 1]
    }

    /// Index of the bin nearest `freq`.
    pub fn nearest_bin(&self, freq: f64) -> usize {
        let idx = self.freqs.partition_point(|&f| f < freq);
        if idx == 0 {
            0
        } else if idx == self.freqs.len() {
            idx - 1
        } else if (self.freqs[idx] - freq) < (freq - self.freqs[idx - 1]) {
            idx
        } else {
            idx - 1
        }
    }

    /// Integrated power over the trace, Σ psd·Δf.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width
    }

    /// Mean PSD over `[lo, hi]`, or `None` when no bin falls inside.
    pub fn mean_over(&self, lo: f64, hi: f64) -> Option<f64> {
        let (sum, n) = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Nearest 5-smooth length to `target` (fast FFT sizes).
fn smooth_length(target: usize) -> usize {
    let target = target.max(8);
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 <= 2 * target {
        let mut p3 = p2;
        while p3 <= 2 * target {
            let mut p5 = p3;
            while p5 <= 2 * target {
                if p5.abs_diff(target) < best.abs_diff(target) {
                    best = p5;
                }
                p5 *= 5;
            }
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}

/// Welch estimate of the one-sided PSD between `settings.f_lo` and `settings.f_hi`.
pub fn psd_estimate<S: SampledSignal + ?Sized>(ts: &S, settings: &AnalyzerSettings) -> Result<PowerSpectrum> {
    let x = ts.samples();
    let fs = ts.sample_rate();
    let AnalyzerSettings { rbw, vbw, f_lo, f_hi, window: kind } = *settings;
    if !(rbw > 0.0 && vbw > 0.0) {
        return Err(AmorError::InvalidInput(format!("rbw {rbw} and vbw {vbw} must be > 0")));
    }
    if !(f_lo >= 0.0 && f_hi > f_lo) {
        return Err(AmorError::InvalidInput(format!("bad span [{f_lo}, {f_hi}]")));
    }
    if f_hi >= fs / 2.0 {
        return Err(AmorError::Nyquist { freq: f_hi, sample_rate: fs });
    }
    let len = smooth_length((nominal_enbw_bins(kind) * fs / rbw).round() as usize);
    if len > x.len() {
        return Err(AmorError::TooShort(format!(
            "rbw {rbw} Hz needs {len} samples per segment, series has {}",
            x.len()
        )));
    }
    let w = window(kind, len);
    let enbw_hz = enbw_bins(&w) * fs / len as f64;
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let hop = len / 2;
    let segments = (x.len() - len) / hop + 1;

    let bin_width = fs / len as f64;
    let k_lo = (f_lo / bin_width).ceil() as usize;
    let k_hi = ((f_hi / bin_width).floor() as usize).min(len / 2);
    if k_hi < k_lo {
        return Err(AmorError::InvalidInput(format!("span [{f_lo}, {f_hi}] contains no bins")));
    }

    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut acc = vec![0.0; k_hi - k_lo + 1];
    for s in 0..segments {
        let seg = &x[s * hop..s * hop + len];
        for ((b, &v), &wv) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new(v * wv, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf[k_lo..=k_hi]) {
            *a += b.norm_sqr();
        }
    }
    let norm = 1.0 / (segments as f64 * fs * w_energy);
    let mut psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let k = k_lo + i;
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == len / 2) { 1.0 } else { 2.0 };
            one_sided * a * norm
        })
        .collect();
    video_smooth(&mut psd, bin_width, enbw_hz, vbw);
    let freqs = (k_lo..=k_hi).map(|k| k as f64 * bin_width).collect();
    Ok(PowerSpectrum { freqs, psd, rbw: enbw_hz, vbw, bin_width, segments })
}

/// Zero-phase single-pole smoothing across bins.
///
/// The pole sits at `vbw·Δf/(rbw·(rbw − vbw))` per bin: about `Δf·vbw/rbw²` for
/// narrow video filters, vanishing smoothing as `vbw` approaches `rbw`, and none
/// at or above it.
fn video_smooth(psd: &mut [f64], bin_width: f64, rbw: f64, vbw: f64) {
    if vbw >= rbw {
        return;
    }
    let alpha = 1.0 - (-2.0 * PI * vbw * bin_width / (rbw * (rbw - vbw))).exp();
    if alpha >= 1.0 - 1e-12 || psd.len() < 2 {
        return;
    }
    let mut y = psd[0];
    for v in psd.iter_mut() {
        y += alpha * (*v - y);
        *v = y;
    }
    let mut y = psd[psd.len() - 1];
    for v in psd.iter_mut().rev() {
        y += alpha * (*v - y);
        *v = y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAndBackground {
    pub s_sig: f64,
    pub s_bg: f64,
}

/// Peak density at `mod_freq` on the signal trace and mean background of the
/// reference trace over `mod_freq ± bg_window/2`.
pub fn peak_and_background(
    spec_on: &PowerSpectrum,
    spec_off: &PowerSpectrum,
    mod_freq: f64,
    bg_window: f64,
) -> Result<PeakAndBackground> {
    let (lo, hi) = (mod_freq - bg_window / 2.0, mod_freq + bg_window / 2.0);
    for (name, s) in [("signal", spec_on), ("background", spec_off)] {
        if s.freqs.is_empty() || lo < s.f_lo() - s.bin_width || hi > s.f_hi() + s.bin_width {
            return Err(AmorError::OutOfSpan(format!(
                "{name} trace [{}, {}] Hz does not cover {mod_freq} ± {} Hz",
                s.freqs.first().copied().unwrap_or(f64::NAN),
                s.freqs.last().copied().unwrap_or(f64::NAN),
                bg_window / 2.0
            )));
        }
    }
    let s_sig = spec_on.psd[spec_on.nearest_bin(mod_freq)];
    let s_bg = spec_off
        .mean_over(lo, hi)
        .ok_or_else(|| AmorError::OutOfSpan(format!("no background bins in [{lo}, {hi}]")))?;
    Ok(PeakAndBackground { s_sig, s_bg })
}

/// Averages a trace in consecutive bins of `bin_width` Hz; returns (centre, mean PSD).
pub fn bin_spectrum(spec: &PowerSpectrum, bin_width: f64) -> Vec<(f64, f64)> {
    if spec.freqs.is_empty() || !(bin_width > 0.0) {
        return Vec::new();
    }
    let start = spec.f_lo();
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for (&f, &p) in spec.freqs.iter().zip(&spec.psd) {
        let idx = ((f - start) / bin_width).floor() as usize;
        let center = start + (idx as f64 + 0.5) * bin_width;
        match out.last_mut() {
            Some(last) if (last.0 - center).abs() < bin_width * 1e-9 => {
                last.1 += p;
                last.2 += 1;
            }
            _ => out.push((center, p, 1)),
        }
    }
    out.into_iter().map(|(c, s, n)| (c, s / n as f64)).collect()
}
