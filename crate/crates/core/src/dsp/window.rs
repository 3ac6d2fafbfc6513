use std::f64::consts::PI;

pub use crate::config::WindowKind;

// Flat-top (SRS/Matlab `flattopwin`) cosine-sum coefficients.
const FLATTOP: [f64; 5] = [0.215_578_95, 0.416_631_58, 0.277_263_158, 0.083_578_947, 0.006_947_368];
const HANN: [f64; 2] = [0.5, 0.5];

/// Periodic (DFT-even) window of length `n`.
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    let coefs: &[f64] = match kind {
        WindowKind::FlatTop => &FLATTOP,
        WindowKind::Hann => &HANN,
    };
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / n as f64;
            coefs
                .iter()
                .enumerate()
                .map(|(k, a)| if k % 2 == 0 { a * (k as f64 * x).cos() } else { -a * (k as f64 * x).cos() })
                .sum()
        })
        .collect()
}

/// Equivalent noise bandwidth of a window, in bins: `N·Σw²/(Σw)²`.
pub fn enbw_bins(w: &[f64]) -> f64 {
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    w.len() as f64 * s2 / (s1 * s1)
}

/// Asymptotic ENBW in bins, used to size segments before the exact value is known.
pub(crate) fn nominal_enbw_bins(kind: WindowKind) -> f64 {
    match kind {
        WindowKind::FlatTop => 3.770_2,
        WindowKind::Hann => 1.5,
    }
}
