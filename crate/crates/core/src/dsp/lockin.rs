//! Digital lock-in: mix with cos/sin of the reference, low-pass, read out.

use super::SampledSignal;
use crate::error::{AmorError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const POLES: usize = 4;

/// In-phase and quadrature amplitudes, in angle units when the gain is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInOutput {
    pub phi_p: f64,
    pub phi_q: f64,
}

impl LockInOutput {
    pub fn magnitude(&self) -> f64 {
        self.phi_p.hypot(self.phi_q)
    }
}

/// Streaming lock-in with a four-pole cascaded RC output filter.
#[derive(Debug, Clone)]
pub struct LockIn {
    step: f64,
    alpha: f64,
    phase: f64,
    state_p: [f64; POLES],
    state_q: [f64; POLES],
}

impl LockIn {
    pub fn new(sample_rate: f64, reference_freq: f64, bandwidth: f64) -> Self {
        LockIn {
            step: 2.0 * PI * reference_freq / sample_rate,
            alpha: 1.0 - (-2.0 * PI * bandwidth / sample_rate).exp(),
            phase: 0.0,
            state_p: [0.0; POLES],
            state_q: [0.0; POLES],
        }
    }

    /// Feeds one sample at reference phase `n·step`; returns the filtered (P, Q).
    pub fn update(&mut self, n: usize, x: f64) -> (f64, f64) {
        self.phase = self.step * n as f64;
        let (s, c) = self.phase.sin_cos();
        let (mut p, mut q) = (2.0 * x * c, 2.0 * x * s);
        for k in 0..POLES {
            self.state_p[k] += self.alpha * (p - self.state_p[k]);
            self.state_q[k] += self.alpha * (q - self.state_q[k]);
            p = self.state_p[k];
            q = self.state_q[k];
        }
        (p, q)
    }

    /// Filtered output trace for a whole record.
    pub fn process(&mut self, x: &[f64]) -> Vec<(f64, f64)> {
        x.iter().enumerate().map(|(n, &v)| self.update(n, v)).collect()
    }
}

/// Demodulates at `mod_freq` and returns the settled output.
///
/// The output filter is allowed `5/output_bandwidth` to settle; the rest of the
/// record is averaged. Requires at least `10/output_bandwidth` of data.
pub fn lock_in_demodulate<S: SampledSignal + ?Sized>(ts: &S, mod_freq: f64, output_bandwidth: f64) -> Result<LockInOutput> {
    let fs = ts.sample_rate();
    if !(mod_freq >= 0.0 && mod_freq < fs / 2.0) {
        return Err(AmorError::Nyquist { freq: mod_freq, sample_rate: fs });
    }
    if !(output_bandwidth > 0.0) {
        return Err(AmorError::InvalidInput(format!("output bandwidth {output_bandwidth}")));
    }
    let duration = ts.duration();
    if duration < 10.0 / output_bandwidth * (1.0 - 1e-9) {
        return Err(AmorError::TooShort(format!(
            "{duration} s record; {output_bandwidth} Hz output bandwidth needs {} s",
            10.0 / output_bandwidth
        )));
    }
    let x = ts.samples();
    let settle = ((5.0 / output_bandwidth) * fs).ceil() as usize;
    let mut lockin = LockIn::new(fs, mod_freq, output_bandwidth);
    let (mut sp, mut sq) = (0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        let (p, q) = lockin.update(n, v);
        if n >= settle {
            sp += p;
            sq += q;
        }
    }
    let count = (x.len() - settle) as f64;
    let scale = ts.angle_scale() / count;
    Ok(LockInOutput { phi_p: sp * scale, phi_q: sq * scale })
}

/// Boxcar demodulation over consecutive blocks of `block_len` samples.
///
/// Each block returns `(2⟨x cos⟩, 2⟨x sin⟩)` in angle units. For white input of
/// one-sided PSD `S`, each quadrature has variance `S/T_block`.
pub fn boxcar_quadratures<S: SampledSignal + ?Sized>(ts: &S, mod_freq: f64, block_len: usize) -> Vec<LockInOutput> {
    let fs = ts.sample_rate();
    let step = 2.0 * PI * mod_freq / fs;
    let scale = ts.angle_scale();
    if block_len == 0 {
        return Vec::new();
    }
    ts.samples()
        .chunks_exact(block_len)
        .enumerate()
        .map(|(b, block)| {
            let base = b * block_len;
            let (mut p, mut q) = (0.0, 0.0);
            for (i, &x) in block.iter().enumerate() {
                let (s, c) = (step * (base + i) as f64).sin_cos();
                p += x * c;
                q += x * s;
            }
            let k = 2.0 * scale / block_len as f64;
            LockInOutput { phi_p: p * k, phi_q: q * k }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::RawSignal;
    use super::*;

    fn tone(f: f64, fs: f64, n: usize, cos_amp: f64, sin_amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let ph = 2.0 * PI * f * i as f64 / fs;
                cos_amp * ph.cos() + sin_amp * ph.sin()
            })
            .collect()
    }

    #[test]
    fn matched_phase_tone() {
        let x = tone(71e3, 300e3, 30_000, 1e-3, 0.0);
        let out = lock_in_demodulate(&RawSignal { samples: &x, sample_rate: 300e3 }, 71e3, 100.0).unwrap();
        assert!((out.phi_p - 1e-3).abs() < 1e-6, "{out:?}");
        assert!(out.phi_q.abs() < 1e-6);
    }

    #[test]
    fn quadrature_tone() {
        let x = tone(71e3, 300e3, 30_000, 0.0, 1e-3);
        let out = lock_in_demodulate(&RawSignal { samples: &x, sample_rate: 300e3 }, 71e3, 100.0).unwrap();
        assert!(out.phi_p.abs() < 1e-6);
        assert!((out.phi_q - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn preconditions() {
        let x = vec![0.0; 1000];
        let sig = RawSignal { samples: &x, sample_rate: 1e4 };
        assert!(matches!(lock_in_demodulate(&sig, 6e3, 10.0), Err(AmorError::Nyquist { .. })));
        assert!(matches!(lock_in_demodulate(&sig, 1e3, 10.0), Err(AmorError::TooShort(_))));
    }

    #[test]
    fn boxcar_recovers_tone() {
        let x = tone(10e3, 100e3, 10_000, 0.3, -0.2);
        let blocks = boxcar_quadratures(&RawSignal { samples: &x, sample_rate: 100e3 }, 10e3, 1000);
        assert_eq!(blocks.len(), 10);
        for b in blocks {
            assert!((b.phi_p - 0.3).abs() < 1e-12 && (b.phi_q + 0.2).abs() < 1e-12);
        }
    }
}
