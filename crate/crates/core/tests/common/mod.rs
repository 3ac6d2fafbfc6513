#![allow(dead_code)]

use std::f64::consts::PI;

// Literal SI values, kept apart from the library's constants.
pub const H: f64 = 6.626_070_15e-34;
pub const C: f64 = 299_792_458.0;
pub const E: f64 = 1.602_176_634e-19;
pub const MU_B: f64 = 9.274_010_078_3e-24;

pub fn flux(power: f64, wavelength: f64) -> f64 {
    power * wavelength / (H * C)
}

/// Hann-windowed single-segment periodogram by direct DFT at the given frequencies.
pub fn dft_psd(x: &[f64], fs: f64, freq: f64) -> f64 {
    let n = x.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n {
        let ph = 2.0 * PI * freq * i as f64 / fs;
        re += x[i] * w[i] * ph.cos();
        im -= x[i] * w[i] * ph.sin();
    }
    let u: f64 = w.iter().map(|v| v * v).sum();
    2.0 * (re * re + im * im) / (fs * u)
}

/// Mean of direct-DFT periodograms over non-overlapping segments, at several frequencies.
pub fn dft_psd_averaged(x: &[f64], fs: f64, seg: usize, freqs: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0;
    for chunk in x.chunks_exact(seg) {
        for &f in freqs {
            acc += dft_psd(chunk, fs, f);
            count += 1;
        }
    }
    acc / count as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
