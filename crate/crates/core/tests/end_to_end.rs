mod common;

use amor_core::analysis::{compute_snr, quadrature_slope, sensitivity, sensitivity_from_slope};
use amor_core::config::{AtomConfig, DetectorConfig, SlopeConvention};
use amor_core::detector::{detect, DetectionSettings};
use amor_core::dsp::{
    boxcar_quadratures, peak_and_background, psd_estimate, sweep_resonance, AnalyzerSettings, SweepSettings,
};
use amor_core::fitting::fit_lorentzian;
use amor_core::signal::{synthesize_rotation, ResonanceParams, SynthesisSettings};
use amor_core::FieldConfig;
use common::*;

const LAMBDA: f64 = 795e-9;

/// Power at which φ₀/δφ̄ equals `snr` for pure shot noise.
fn power_for_snr(phi0: f64, snr: f64) -> f64 {
    let flux = snr * snr / (2.0 * phi0 * phi0);
    flux * H * C / LAMBDA
}

#[test]
fn sensitivity_routes_agree() {
    let fs = 300e3;
    let (phi0, gamma, f0) = (1e-3, 10.0, 71e3);
    let res = ResonanceParams::new(phi0, gamma, f0).unwrap();
    let power = power_for_snr(phi0, 1.53e4);
    let det = DetectorConfig::default();
    let atom = AtomConfig::default();

    let grid: Vec<f64> = (0..41).map(|i| f0 - 5.0 * gamma + i as f64 * gamma / 4.0).collect();
    let sweep = SweepSettings { synthesis: SynthesisSettings::new(0.1, fs, power, LAMBDA), lockin_bandwidth: 100.0, seed: 1 };
    let fit = fit_lorentzian(&sweep_resonance(&res, &grid, &sweep).unwrap().curve, None).unwrap();
    assert!((fit.gamma_fwhm / gamma - 1.0).abs() < 0.01);

    let rec = SynthesisSettings::new(10.0, fs, power, LAMBDA);
    let chain = DetectionSettings::from_chain(&det, power, LAMBDA);
    let on = synthesize_rotation(&res, &FieldConfig::with_detuning(f0, 0.0), &rec, 2).unwrap();
    let off_res = ResonanceParams { phi0: 0.0, ..res };
    let off = synthesize_rotation(&off_res, &FieldConfig::with_detuning(f0, 0.0), &rec, 3).unwrap();
    let on = detect(&on, &det, &chain, 2).unwrap();
    let off = detect(&off, &det, &chain, 3).unwrap();

    let analyzer = AnalyzerSettings::centered(30.0, 30.0, f0, 8e3);
    let s_on = psd_estimate(&on, &analyzer).unwrap();
    let s_off = psd_estimate(&off, &analyzer).unwrap();
    let pb = peak_and_background(&s_on, &s_off, f0, 4e3).unwrap();
    let snr = compute_snr(pb.s_sig, pb.s_bg, s_on.rbw).unwrap();
    let db_snr = sensitivity(fit.gamma_fwhm, snr, atom.g_f).unwrap();

    // block length matched to the ±2 kHz background window
    let block = (fs / 4e3).round() as usize;
    let t = block as f64 / fs;
    let q = boxcar_quadratures(&off, f0, block);
    let all: Vec<f64> = q.iter().flat_map(|o| [o.phi_p, o.phi_q]).collect();
    let dphi = (2.0 * t * variance(&all)).sqrt();
    let slope = quadrature_slope(fit.phi0, fit.gamma_fwhm, atom.g_f, SlopeConvention::Paper);
    let db_slope = sensitivity_from_slope(dphi, slope).unwrap();

    assert!((db_snr / db_slope - 1.0).abs() < 0.01, "{db_snr} vs {db_slope}");
}

#[test]
fn field_step_is_resolved() {
    let fs = 50e3;
    let (phi0, gamma, f0) = (1e-3, 10.0, 10e3);
    let atom = AtomConfig::default();
    let res = ResonanceParams::new(phi0, gamma, f0).unwrap();
    let snr = 1.53e4;
    let power = power_for_snr(phi0, snr);
    let db = sensitivity(gamma, snr, atom.g_f).unwrap();
    let step = 5.0 * db;

    let block = (0.5 * fs) as usize;
    let noise = synthesize_rotation(
        &ResonanceParams { phi0: 0.0, ..res },
        &FieldConfig::with_detuning(f0, 0.0),
        &SynthesisSettings::new(50.0, fs, power, LAMBDA),
        8,
    )
    .unwrap();
    let q: Vec<f64> = boxcar_quadratures(&noise, f0, block).iter().map(|o| o.phi_q).collect();
    let sigma = variance(&q).sqrt();

    let quiet = SynthesisSettings::new(0.5, fs, power, LAMBDA).noiseless();
    let read = |delta: f64| {
        let ts = synthesize_rotation(&res, &FieldConfig::with_detuning(f0, delta), &quiet, 0).unwrap();
        boxcar_quadratures(&ts, f0, block)[0].phi_q
    };
    let delta = -atom.doubled_larmor_per_tesla() * step;
    let shift = (read(delta) - read(0.0)).abs();
    let measured = shift / sigma;
    // The lineshape slope is twice the reduced form, so a 5δB step reads about 10σ.
    assert!(measured >= 5.0, "{measured}");
    assert!((measured / 10.0 - 1.0).abs() < 0.2, "{measured}");
}
