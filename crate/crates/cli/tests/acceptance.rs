//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the process
//! fails if any criterion fails.

use amor_cli::{run_scenario, Mode, ScenarioSpec};
use amor_core::analysis::{compute_snr, projection_noise, quadrature_slope, sensitivity, sensitivity_from_slope, snl_range};
use amor_core::config::{AtomConfig, DetectorConfig, SlopeConvention};
use amor_core::detector::{detect, polarimeter_gain, theoretical_shot_noise_level, DetectionSettings};
use amor_core::dsp::{boxcar_quadratures, peak_and_background, psd_estimate, sweep_resonance, AnalyzerSettings, ResonanceCurve, SweepSettings};
use amor_core::fitting::{fit_lorentzian, fit_noise_polynomial};
use amor_core::signal::{larmor_doubled_freq, synthesize_rotation, ResonanceParams, SynthesisSettings};
use amor_core::FieldConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const H: f64 = 6.626_070_15e-34;
const C: f64 = 299_792_458.0;
const LAMBDA: f64 = 795e-9;
const FS: f64 = 300e3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn flux(power: f64) -> f64 {
    power * LAMBDA / (H * C)
}

/// Power at which φ₀/δφ̄ equals `snr` when shot noise is the only noise.
fn power_for_snr(phi0: f64, snr: f64) -> f64 {
    snr * snr / (2.0 * phi0 * phi0) * H * C / LAMBDA
}

fn c1_field_frequency() -> Outcome {
    let atom = AtomConfig { g_f: 1.0 / 3.0, ..AtomConfig::default() };
    let f71 = larmor_doubled_freq(7.6e-6, &atom).map_err(|e| e.to_string())?;
    let f700 = larmor_doubled_freq(75e-6, &atom).map_err(|e| e.to_string())?;
    check(
        (70.3e3..=71.6e3).contains(&f71) && (693e3..=707e3).contains(&f700),
        format!("7.6 uT -> {:.1} Hz, 75 uT -> {:.1} Hz", f71, f700),
    )
}

fn c2_projection_noise() -> Outcome {
    let atom = AtomConfig { g_f: 1.0 / 3.0, density_n: 1.27e16, cell_radius: 0.05, relaxation_gamma: 10.0, probe_wavelength: LAMBDA };
    let db = projection_noise(&atom, 1.0).map_err(|e| e.to_string())?;
    check(within(db, 0.134e-15, 0.05), format!("{:.4} fT/rtHz vs 0.134 (5%)", db * 1e15))
}

fn c3_shot_noise_psd() -> Outcome {
    let det = DetectorConfig::default();
    let settings = AnalyzerSettings::centered(300.0, 300.0, 71e3, 8e3);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut level_100 = 0.0;
    for (j, power) in [50e-6, 100e-6, 200e-6].into_iter().enumerate() {
        let g = polarimeter_gain(power, &det, LAMBDA);
        let quiet = ResonanceParams::new(0.0, 10.0, 71e3).unwrap();
        let synth = SynthesisSettings::new(0.1, FS, power, LAMBDA);
        let mut acc = 0.0;
        for seed in 0..100u64 {
            let rot = synthesize_rotation(&quiet, &FieldConfig::with_detuning(71e3, 0.0), &synth, 1000 * j as u64 + seed).unwrap();
            let ts = detect(&rot, &det, &DetectionSettings::noiseless(g), seed).unwrap();
            acc += psd_estimate(&ts, &settings).unwrap().mean_over(69e3, 73e3).unwrap();
        }
        let measured = acc / 100.0;
        let analytic = g * g / (4.0 * flux(power));
        ok &= within(measured, analytic, 0.05);
        lines.push(format!("{:.0} uW {:+.2}%", power * 1e6, 100.0 * (measured / analytic - 1.0)));
        if power == 100e-6 {
            level_100 = measured;
        }
    }
    let det_5e5 = DetectorConfig { transimpedance_gain_nominal: 1e6, gain_headroom_factor: 0.5, ..DetectorConfig::default() };
    let theory = theoretical_shot_noise_level(100e-6, &det_5e5, LAMBDA);
    ok &= within(theory, 9.0e-14, 0.02) && within(theory, level_100, 0.15);
    check(
        ok,
        format!("background vs g^2/(4 Phi): {}; G^2 2ie/R = {:.3e} W/Hz, sim/theory - 1 = {:+.1}%", lines.join(", "), theory, 100.0 * (level_100 / theory - 1.0)),
    )
}

fn c4_sensitivity() -> Outcome {
    let (phi0, gamma, f0, target_snr) = (1e-3, 10.0, 71e3, 1.53e4);
    let atom = AtomConfig::default();
    let det = DetectorConfig::default();
    let power = power_for_snr(phi0, target_snr);
    let g = polarimeter_gain(power, &det, LAMBDA);
    let res = ResonanceParams::new(phi0, gamma, f0).unwrap();

    let grid: Vec<f64> = (0..41).map(|i| f0 - 5.0 * gamma + i as f64 * gamma / 4.0).collect();
    let sweep = SweepSettings { synthesis: SynthesisSettings::new(0.1, FS, power, LAMBDA), lockin_bandwidth: 100.0, seed: 11 };
    let fit = fit_lorentzian(&sweep_resonance(&res, &grid, &sweep).unwrap().curve, None).map_err(|e| e.to_string())?;

    let rec = SynthesisSettings::new(10.0, FS, power, LAMBDA);
    let field = FieldConfig::with_detuning(f0, 0.0);
    let on = synthesize_rotation(&res, &field, &rec, 12).unwrap();
    let off = synthesize_rotation(&ResonanceParams { phi0: 0.0, ..res }, &field, &rec, 13).unwrap();
    let on = detect(&on, &det, &DetectionSettings::noiseless(g), 12).unwrap();
    let off = detect(&off, &det, &DetectionSettings::noiseless(g), 13).unwrap();
    let analyzer = AnalyzerSettings::centered(30.0, 30.0, f0, 8e3);
    let (s_on, s_off) = (psd_estimate(&on, &analyzer).unwrap(), psd_estimate(&off, &analyzer).unwrap());
    let pb = peak_and_background(&s_on, &s_off, f0, 4e3).unwrap();
    let snr = compute_snr(pb.s_sig, pb.s_bg, s_on.rbw).unwrap();
    let db = sensitivity(fit.gamma_fwhm, snr, atom.g_f).unwrap();

    let block = (FS / 4e3).round() as usize;
    let t = block as f64 / FS;
    let quads: Vec<f64> = boxcar_quadratures(&off, f0, block).iter().flat_map(|o| [o.phi_p, o.phi_q]).collect();
    let dphi = (2.0 * t * variance(&quads)).sqrt();
    let slope = quadrature_slope(fit.phi0, fit.gamma_fwhm, atom.g_f, SlopeConvention::Paper);
    let db_slope = sensitivity_from_slope(dphi, slope).unwrap();

    check(
        within(db, 70e-15, 0.02) && within(db, db_slope, 0.01),
        format!(
            "SNR {:.4e}, gamma {:.3} Hz, dB = {:.2} fT/rtHz (70, 2%), slope route {:.2} fT/rtHz ({:+.2}%)",
            snr,
            fit.gamma_fwhm,
            db * 1e15,
            db_slope * 1e15,
            100.0 * (db / db_slope - 1.0)
        ),
    )
}

fn c5_noise_polynomial() -> Outcome {
    let (a, b, c) = (1e-16, 1e-12, 1e-10);
    let powers: Vec<f64> = (0..12).map(|i| 10e-6 * (4.5e-3f64 / 10e-6).powf(i as f64 / 11.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut fa, mut fb, mut fc) = (Vec::new(), Vec::new(), Vec::new());
    let mut exact = true;
    let mut nested = true;
    for _ in 0..100 {
        let pts: Vec<(f64, f64)> = powers
            .iter()
            .map(|&p| {
                let z: f64 = rng.sample(StandardNormal);
                (p, (a + b * p + c * p * p) * (1.0 + 0.02 * z))
            })
            .collect();
        let fit = fit_noise_polynomial(&pts, None, 71e3).map_err(|e| e.to_string())?;
        let bud = fit.budget;
        fa.push(bud.coef_elec);
        fb.push(bud.coef_shot);
        fc.push(bud.coef_tech);
        let mut prev: Option<(f64, f64)> = None;
        for k in [1.0, 2.0, 4.0] {
            let r = snl_range(&bud, k).unwrap();
            exact &= r.p_low == k * bud.coef_elec / bud.coef_shot && r.p_high == bud.coef_shot / (k * bud.coef_tech);
            if let Some((lo, hi)) = prev {
                nested &= r.p_low >= lo && r.p_high <= hi;
            }
            prev = Some((r.p_low, r.p_high));
        }
    }
    let (ma, mb, mc) = (median(fa), median(fb), median(fc));
    check(
        within(ma, a, 0.05) && within(mb, b, 0.05) && within(mc, c, 0.05) && exact && nested,
        format!(
            "median A {:+.2}%, B {:+.2}%, C {:+.2}%; boundaries exact: {exact}; nested: {nested}",
            100.0 * (ma / a - 1.0),
            100.0 * (mb / b - 1.0),
            100.0 * (mc / c - 1.0)
        ),
    )
}

fn lorentz(f: f64, f0: f64, gamma: f64, phi0: f64) -> (f64, f64) {
    let d = 2.0 * PI * (f - f0);
    let g = 2.0 * PI * gamma;
    let den = d * d + g * g / 4.0;
    (phi0 * g * g / 4.0 / den, -phi0 * g * d / 2.0 / den)
}

fn c6_lorentzian() -> Outcome {
    let (f0, gamma, phi0) = (71e3, 10.0, 1e-3);
    let grid: Vec<f64> = (0..41).map(|i| f0 - 50.0 + 2.5 * i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut dc, mut dg) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        let (mut p, mut q) = (Vec::new(), Vec::new());
        for &f in &grid {
            let (x, y) = lorentz(f, f0, gamma, phi0);
            let (zx, zy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            p.push(x + phi0 / 100.0 * zx);
            q.push(y + phi0 / 100.0 * zy);
        }
        let fit = fit_lorentzian(&ResonanceCurve::new(grid.clone(), p, q).unwrap(), None).map_err(|e| e.to_string())?;
        dc.push((fit.center_freq - f0).abs());
        dg.push((fit.gamma_fwhm / gamma - 1.0).abs());
    }
    let (p, q): (Vec<f64>, Vec<f64>) = grid.iter().map(|&f| lorentz(f, f0, gamma, phi0)).unzip();
    let clean = fit_lorentzian(&ResonanceCurve::new(grid.clone(), p, q).unwrap(), None).map_err(|e| e.to_string())?;
    let (mc, mg) = (median(dc), median(dg));
    check(
        mc < gamma / 100.0 && mg < 0.02 && clean.residual_rms < 1e-10,
        format!("median |df0| = {:.4} Hz (< {:.2}), median |dgamma|/gamma = {:.3}%, noiseless rms = {:.1e} rad", mc, gamma / 100.0, 100.0 * mg, clean.residual_rms),
    )
}

fn c7_snr_invariance() -> Outcome {
    let (f0, phi0, power) = (71e3, 1e-4, 100e-6);
    let det = DetectorConfig::default();
    let g = polarimeter_gain(power, &det, LAMBDA);
    let res = ResonanceParams::new(phi0, 10.0, f0).unwrap();
    let field = FieldConfig::with_detuning(f0, 0.0);
    let rec = SynthesisSettings::new(2.0, FS, power, LAMBDA);
    let on = synthesize_rotation(&res, &field, &rec, 71).unwrap();
    let off = synthesize_rotation(&ResonanceParams { phi0: 0.0, ..res }, &field, &rec, 72).unwrap();
    let snr = |gain: f64, rbw: f64| {
        let a = detect(&on, &det, &DetectionSettings::noiseless(gain), 1).unwrap();
        let b = detect(&off, &det, &DetectionSettings::noiseless(gain), 2).unwrap();
        let s = AnalyzerSettings::centered(rbw, rbw, f0, 40e3);
        let (sa, sb) = (psd_estimate(&a, &s).unwrap(), psd_estimate(&b, &s).unwrap());
        let pb = peak_and_background(&sa, &sb, f0, 4e3).unwrap();
        compute_snr(pb.s_sig, pb.s_bg, sa.rbw).unwrap()
    };
    let base = snr(g, 30.0);
    let scaled = snr(10.0 * g, 30.0);
    let wide = snr(g, 300.0);
    check(
        within(scaled, base, 0.10) && within(wide, base, 0.10),
        format!("SNR {:.4e}; g x10 {:+.2}%; RBW 300 Hz {:+.2}%", base, 100.0 * (scaled / base - 1.0), 100.0 * (wide / base - 1.0)),
    )
}

fn c8_scenarios() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("fast.cfg");
    std::fs::write(
        &cfg,
        "duration = 0.2 s\nlockin_dwell = 0.1 s\nsweep_points = 21\npowers = 0, 10, 20, 50, 100, 200, 400, 700 uW\nsnl_low_max_freq = 100 kHz\nsnl_high_max_freq = 1 MHz\n",
    )
    .map_err(|e| e.to_string())?;
    let expected: [(Mode, &[&str]); 5] = [
        (Mode::DemodSweep, &["fig2_resonance.dat"]),
        (Mode::Spectrum, &["fig3_spectrum.dat"]),
        (Mode::NoiseScan, &["fig8_noise.dat"]),
        (Mode::SnlMap, &["fig6_snl.dat", "fig7_snl.dat"]),
        (Mode::SensitivitySweep, &["fig4a_snr.dat", "fig4b_sensitivity.dat"]),
    ];
    let mut missing = Vec::new();
    for (mode, files) in expected {
        let out = dir.path().join(mode.as_str());
        let spec = ScenarioSpec::load(mode, Some(&cfg), &[], &out, 1, 4).map_err(|e| e.to_string())?;
        run_scenario(&spec).map_err(|e| format!("{}: {e}", mode.as_str()))?;
        for f in files.iter().chain(&["plotdata.json", "manifest.json"]) {
            if !out.join(f).is_file() {
                missing.push(format!("{}/{f}", mode.as_str()));
            }
        }
    }
    let sens: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sensitivity-sweep/sensitivity.json")).unwrap()).unwrap();
    let pl = &sens["plateau"];
    let ratio = pl["ratio"].as_f64().unwrap_or(0.0);
    check(
        missing.is_empty() && ratio >= 2.0,
        format!(
            "missing plot files: {missing:?}; minimum at {:.0} uW, +-10% plateau {:.0}-{:.0} uW (ratio {:.2}, need >= 2)",
            pl["p_min"].as_f64().unwrap_or(f64::NAN) * 1e6,
            pl["p_low"].as_f64().unwrap_or(f64::NAN) * 1e6,
            pl["p_high"].as_f64().unwrap_or(f64::NAN) * 1e6,
            ratio
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("field-frequency correspondence", c1_field_frequency, Duration::from_secs(1)),
        ("projection-noise floor", c2_projection_noise, Duration::from_secs(1)),
        ("shot-noise PSD identity", c3_shot_noise_psd, Duration::from_secs(120)),
        ("sensitivity reproduction", c4_sensitivity, Duration::from_secs(60)),
        ("noise-polynomial recovery", c5_noise_polynomial, Duration::from_secs(60)),
        ("Lorentzian fit recovery", c6_lorentzian, Duration::from_secs(60)),
        ("SNR invariance", c7_snr_invariance, Duration::from_secs(60)),
        ("figure-analog outputs", c8_scenarios, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs())),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {} ({name}): {detail} [{:.2} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
