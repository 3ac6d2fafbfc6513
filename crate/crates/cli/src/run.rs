//! Scenario execution: one function per mode, then plot data and the manifest.

use crate::error::{CliError, CliResult};
use crate::pipeline::{measure_spectrum, measure_sweep, noise_spectrum, plateau, seed_for, tag, Context, Plateau};
use crate::plotdata::emit_plotdata;
use crate::spec::{Mode, ScenarioSpec};
use amor_core::analysis::{best_snl_class, snl_map, snl_range, SensitivityReport, SnlMapRow, SnlRange, SnrSource};
use amor_core::detector::{detect, polarimeter_gain, theoretical_shot_noise_band, DetectionSettings, NoiseBudget, NoiseProfile};
use amor_core::dsp::{bin_spectrum, AnalyzerSettings};
use amor_core::export::{fmt_f64, write_json, write_meta, write_resonance_csv, write_snl_map_csv, write_spectrum_csv, write_timeseries_csv};
use amor_core::fitting::{fit_noise_polynomial, NoisePolyFit};
use amor_core::signal::{larmor_doubled_freq, photon_flux, series_noise_psd, shot_noise_angle_density, synthesize_rotation, ResonanceParams};
use amor_core::Result;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.json";

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// Tracks files written into the output directory.
pub(crate) struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    pub(crate) fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), names: Vec::new() })
    }

    pub(crate) fn write<F>(&mut self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| match e {
            amor_core::AmorError::Io(m) => CliError::io(format!("{}: {m}", path.display())),
            other => other.into(),
        })?;
        w.flush().map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.names.push(name.to_string());
        Ok(())
    }
}

/// Runs one scenario on a pool of `spec.workers` threads.
pub fn run_scenario(spec: &ScenarioSpec) -> CliResult<RunSummary> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let mut out = Outputs::new(&spec.output_dir)?;
    pool.install(|| -> CliResult<()> {
        let ctx = Context::new(&spec.config, &spec.tables);
        match spec.mode {
            Mode::Simulate => simulate(&ctx, spec, &mut out),
            Mode::DemodSweep => demod_sweep(&ctx, spec, &mut out),
            Mode::Spectrum => spectrum(&ctx, spec, &mut out),
            Mode::NoiseScan => noise_scan(&ctx, spec, &mut out),
            Mode::SnlMap => snl_map_mode(&ctx, spec, &mut out),
            Mode::SensitivitySweep => sensitivity_sweep(&ctx, spec, &mut out),
        }
    })?;
    if spec.mode != Mode::Simulate {
        for f in emit_plotdata(&spec.output_dir, spec.seed)? {
            if !out.names.contains(&f) {
                out.names.push(f);
            }
        }
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    write_manifest(spec, &mut out, wall_time_s)?;
    Ok(RunSummary { files: out.names.iter().map(|n| spec.output_dir.join(n)).collect(), wall_time_s })
}

fn write_manifest(spec: &ScenarioSpec, out: &mut Outputs, wall_time_s: f64) -> CliResult<()> {
    let mut outputs = out.names.clone();
    outputs.sort();
    let manifest = json!({
        "tool": "amor",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": amor_core::VERSION,
        "mode": spec.mode.as_str(),
        "seed": spec.seed,
        "workers": spec.workers,
        "config_path": spec.config_path.as_ref().map(|p| p.display().to_string()),
        "config_file_text": spec.config_text,
        "overrides": spec.overrides.iter().map(|(k, v)| json!({ "key": k, "value": v })).collect::<Vec<_>>(),
        "resolved_config": spec.config.to_config_string(),
        "outputs": outputs,
        "wall_time_s": wall_time_s,
    });
    out.write(MANIFEST, |w| write_json(w, &manifest))
}

fn header<W: Write>(w: &mut W, spec: &ScenarioSpec, extra: &[(&str, String)]) -> Result<()> {
    write_meta(w, "mode", spec.mode.as_str())?;
    write_meta(w, "seed", spec.seed)?;
    for (k, v) in extra {
        write_meta(w, k, v)?;
    }
    Ok(())
}

fn simulate(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let run = &ctx.cfg.run;
    let power = run.probe_power;
    let res = ctx.resonance(power)?;
    let field = ctx.cfg.field;
    let seed = seed_for(spec.seed, tag::SIMULATE, 0);
    let rot = synthesize_rotation(&res, &field, &ctx.synthesis(power, run.duration), seed)?;
    let det = detect(&rot, &ctx.cfg.detector, &ctx.detection(power), seed)?;
    out.write("rotation.csv", |w| {
        header(w, spec, &[])?;
        write_timeseries_csv(w, &rot.samples, rot.sample_rate, power, spec.seed, "rad")
    })?;
    out.write("timeseries.csv", |w| {
        header(w, spec, &[("angle_gain_sqrt_w_per_rad", fmt_f64(det.angle_gain))])?;
        write_timeseries_csv(w, &det.samples, det.sample_rate, power, spec.seed, "sqrt_w")
    })?;
    let flux = photon_flux(power, ctx.cfg.atom.probe_wavelength);
    let (lo, hi) = theoretical_shot_noise_band(power, &ctx.cfg.detector, ctx.cfg.atom.probe_wavelength);
    let summary = json!({
        "seed": spec.seed,
        "power_w": power,
        "modulation_freq_hz": field.modulation_freq,
        "detuning_rad_per_s": field.detuning_delta,
        "resonance": res,
        "photon_flux_per_s": flux,
        "shot_angle_density_rad2_per_hz": if flux > 0.0 { Some(shot_noise_angle_density(flux)?) } else { None },
        "series_noise_psd_rad2_per_hz": if flux > 0.0 { Some(series_noise_psd(flux)?) } else { None },
        "angle_gain_sqrt_w_per_rad": det.angle_gain,
        "analyzer_shot_background_w_per_hz": if flux > 0.0 { Some(det.angle_gain.powi(2) / (4.0 * flux)) } else { None },
        "theoretical_shot_level_w_per_hz": [lo, hi],
        "samples": det.samples.len(),
    });
    out.write("simulate.json", |w| write_json(w, &summary))
}

fn demod_sweep(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let power = ctx.cfg.run.probe_power;
    let res = ctx.resonance(power)?;
    let m = measure_sweep(ctx, res, power, spec.seed)?;
    out.write("resonance.csv", |w| {
        header(
            w,
            spec,
            &[
                ("power_w", fmt_f64(power)),
                ("true_center_hz", fmt_f64(res.center_freq)),
                ("true_gamma_hz", fmt_f64(res.gamma_fwhm)),
                ("true_phi0_rad", fmt_f64(res.phi0)),
            ],
        )?;
        write_resonance_csv(w, &m.curve)
    })?;
    let report = json!({
        "seed": spec.seed,
        "power_w": power,
        "truth": res,
        "fit": m.fit,
        "fit_stderr": m.fit.as_ref().map(|f| f.stderr()),
    });
    out.write("fit.json", |w| write_json(w, &report))?;

    let fields = &ctx.cfg.run.fields;
    if !fields.is_empty() {
        let rows: Vec<(f64, f64, Option<amor_core::LorentzianFit>)> = fields
            .par_iter()
            .enumerate()
            .map(|(i, &b)| {
                let center = larmor_doubled_freq(b, &ctx.cfg.atom)?;
                let r = ResonanceParams { center_freq: center, ..res };
                let m = measure_sweep(ctx, r, power, seed_for(spec.seed, tag::FIELD, i))?;
                Ok((b, center, m.fit))
            })
            .collect::<Result<_>>()?;
        out.write("field_scan.csv", |w| {
            header(w, spec, &[("power_w", fmt_f64(power))])?;
            writeln!(w, "b_field_t,expected_center_hz,fit_center_hz,fit_gamma_hz,fit_phi0_rad")?;
            for (b, c, fit) in &rows {
                let (fc, fg, fp) = fit.as_ref().map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.center_freq, f.gamma_fwhm, f.phi0));
                writeln!(w, "{},{},{},{},{}", fmt_f64(*b), fmt_f64(*c), fmt_f64(fc), fmt_f64(fg), fmt_f64(fp))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn spectrum(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let power = ctx.cfg.run.probe_power;
    let res = ctx.resonance(power)?;
    let m = measure_spectrum(ctx, power, spec.seed)?;
    let extra = [("power_w", fmt_f64(power)), ("modulation_freq_hz", fmt_f64(ctx.modulation_freq()))];
    out.write("spectrum.csv", |w| {
        header(w, spec, &extra)?;
        write_spectrum_csv(w, &m.on)
    })?;
    out.write("spectrum_background.csv", |w| {
        header(w, spec, &extra)?;
        write_spectrum_csv(w, &m.off)
    })?;
    let budget = model_budget(ctx, ctx.modulation_freq())?;
    let report = SensitivityReport::new(
        res.gamma_fwhm,
        m.snr,
        SnrSource::Measured,
        &ctx.cfg.atom,
        ctx.cfg.run.integration_time,
        power,
        ctx.modulation_freq(),
        best_snl_class(&budget, power, &ctx.cfg.run.snl_k),
    )?;
    let summary = json!({
        "seed": spec.seed,
        "power_w": power,
        "modulation_freq_hz": ctx.modulation_freq(),
        "rbw_hz": m.on.rbw,
        "vbw_hz": m.on.vbw,
        "s_sig_w_per_hz": m.peak.s_sig,
        "s_bg_w_per_hz": m.peak.s_bg,
        "snr": m.snr,
        "sensitivity": report,
    });
    out.write("spectrum.json", |w| write_json(w, &summary))
}

/// Budget predicted by the detector model at `freq`, without any measurement.
fn model_budget(ctx: &Context<'_>, freq: f64) -> Result<NoiseBudget> {
    let lambda = ctx.cfg.atom.probe_wavelength;
    let p_ref = 1e-4;
    let g = polarimeter_gain(p_ref, &ctx.cfg.detector, lambda);
    let shot = g * g / (4.0 * photon_flux(p_ref, lambda)) / p_ref;
    NoiseBudget::new(ctx.tables.electronic.at(freq), shot, ctx.tables.technical.at(freq), freq)
}

#[derive(Debug, Clone, Serialize)]
struct BudgetEntry {
    detection_freq_hz: f64,
    zero_power_psd_w_per_hz: Option<f64>,
    fit: NoisePolyFit,
    snl_ranges: Vec<SnlRange>,
    theoretical_shot_level_w_per_hz: [f64; 2],
}

/// Fits one budget to `(power, psd)` points, pinning A to the zero-power level when present.
fn fit_budget(points: &[(f64, f64)], freq: f64) -> Result<(NoisePolyFit, Option<f64>)> {
    let zero = points.iter().find(|p| p.0 == 0.0).map(|p| p.1);
    Ok((fit_noise_polynomial(points, zero, freq)?, zero))
}

fn noise_scan(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let run = &ctx.cfg.run;
    let freqs = if run.detection_freqs.is_empty() { vec![ctx.modulation_freq()] } else { run.detection_freqs.clone() };
    let half = ctx.cfg.analyzer.bg_window / 2.0;
    let settings = AnalyzerSettings::new(
        ctx.cfg.analyzer.rbw,
        ctx.cfg.analyzer.vbw,
        (freqs[0] - half).max(0.0),
        freqs[freqs.len() - 1] + half,
    )
    .with_window(ctx.cfg.analyzer.window);
    let levels: Vec<Vec<f64>> = run
        .powers
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let spec_p = noise_spectrum(ctx, &ctx.cfg.detector, &ctx.detection(p), p, run.sample_rate, &settings, seed_for(spec.seed, tag::NOISE, i))?;
            freqs
                .iter()
                .map(|&f| {
                    spec_p
                        .mean_over(f - half, f + half)
                        .ok_or_else(|| amor_core::AmorError::OutOfSpan(format!("no bins around {f} Hz")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    for (j, &f) in freqs.iter().enumerate() {
        let points: Vec<(f64, f64)> = run.powers.iter().zip(&levels).map(|(&p, l)| (p, l[j])).collect();
        let (fit, zero) = fit_budget(&points, f)?;
        let snl_ranges = run.snl_k.iter().map(|&k| snl_range(&fit.budget, k)).collect::<Result<_>>()?;
        let (lo, hi) = theoretical_shot_noise_band(run.probe_power, &ctx.cfg.detector, ctx.cfg.atom.probe_wavelength);
        entries.push(BudgetEntry {
            detection_freq_hz: f,
            zero_power_psd_w_per_hz: zero,
            fit,
            snl_ranges,
            theoretical_shot_level_w_per_hz: [lo, hi],
        });
    }
    out.write("noise_scan.csv", |w| {
        header(w, spec, &[("bg_window_hz", fmt_f64(ctx.cfg.analyzer.bg_window))])?;
        writeln!(w, "freq_hz,power_w,psd_w_per_hz")?;
        for (j, &f) in freqs.iter().enumerate() {
            for (&p, l) in run.powers.iter().zip(&levels) {
                writeln!(w, "{},{},{}", fmt_f64(f), fmt_f64(p), fmt_f64(l[j]))?;
            }
        }
        Ok(())
    })?;
    let doc = json!({
        "seed": spec.seed,
        "theoretical_level_power_w": run.probe_power,
        "budgets": entries,
    });
    out.write("budget.json", |w| write_json(w, &doc))
}

struct SnlBand {
    tag: u64,
    bin: f64,
    max_freq: f64,
    detector: amor_core::DetectorConfig,
    electronic: NoiseProfile,
    technical: NoiseProfile,
}

fn snl_band(ctx: &Context<'_>, spec: &ScenarioSpec, band: &SnlBand) -> Result<(Vec<NoiseBudget>, Vec<SnlMapRow>)> {
    let run = &ctx.cfg.run;
    let fs = 2.5 * band.max_freq;
    let settings = AnalyzerSettings::new(band.bin / 10.0, band.bin / 10.0, 0.0, band.max_freq).with_window(ctx.cfg.analyzer.window);
    let binned: Vec<Vec<(f64, f64)>> = run
        .powers
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let detection = DetectionSettings {
                angle_gain: polarimeter_gain(p, &band.detector, ctx.cfg.atom.probe_wavelength),
                electronic: band.electronic.clone(),
                technical: band.technical.clone(),
            };
            let s = noise_spectrum(ctx, &band.detector, &detection, p, fs, &settings, seed_for(spec.seed, band.tag, i))?;
            Ok(bin_spectrum(&s, band.bin).into_iter().filter(|(c, _)| *c < band.max_freq).collect())
        })
        .collect::<Result<_>>()?;
    let centers: Vec<f64> = binned[0].iter().map(|b| b.0).collect();
    let budgets = centers
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let points: Vec<(f64, f64)> = run.powers.iter().zip(&binned).map(|(&p, b)| (p, b[j].1)).collect();
            fit_budget(&points, c).map(|(f, _)| f.budget)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = snl_map(&budgets, &run.snl_k)?;
    Ok((budgets, rows))
}

fn snl_map_mode(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let run = &ctx.cfg.run;
    let det = &ctx.cfg.detector;
    let low = SnlBand {
        tag: tag::SNL_LOW,
        bin: run.snl_low_bin,
        max_freq: run.snl_low_max_freq,
        detector: det.clone(),
        electronic: ctx.tables.electronic.clone(),
        technical: ctx.tables.technical.clone(),
    };
    let mut high_det = det.clone();
    high_det.transimpedance_gain_nominal = run.snl_high_gain;
    high_det.electronic_noise_floor = run.snl_high_elec_floor;
    let gain_ratio = run.snl_high_gain / det.transimpedance_gain_nominal;
    high_det.technical_noise_coef = det.technical_noise_coef * gain_ratio * gain_ratio;
    let high = SnlBand {
        tag: tag::SNL_HIGH,
        bin: run.snl_high_bin,
        max_freq: run.snl_high_max_freq,
        electronic: NoiseProfile::White(high_det.electronic_noise_floor),
        technical: NoiseProfile::White(high_det.technical_noise_coef),
        detector: high_det,
    };
    let (lo_res, hi_res) = rayon::join(|| snl_band(ctx, spec, &low), || snl_band(ctx, spec, &high));
    let (lo_budgets, lo_rows) = lo_res?;
    let (hi_budgets, hi_rows) = hi_res?;
    for (name, band, rows) in [("snl_map_low.csv", &low, &lo_rows), ("snl_map_high.csv", &high, &hi_rows)] {
        out.write(name, |w| {
            header(
                w,
                spec,
                &[
                    ("bin_hz", fmt_f64(band.bin)),
                    ("transimpedance_gain_v_per_a", fmt_f64(band.detector.transimpedance_gain_nominal)),
                ],
            )?;
            write_snl_map_csv(w, rows)
        })?;
    }
    let doc = json!({
        "seed": spec.seed,
        "low": { "bin_hz": low.bin, "budgets": lo_budgets },
        "high": { "bin_hz": high.bin, "transimpedance_gain_v_per_a": run.snl_high_gain, "budgets": hi_budgets },
    });
    out.write("snl_budgets.json", |w| write_json(w, &doc))
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    power_w: f64,
    phi0_fit_rad: f64,
    gamma_fit_hz: f64,
    s_sig_w_per_hz: f64,
    s_bg_w_per_hz: f64,
    report: Option<SensitivityReport>,
}

fn sensitivity_sweep(ctx: &Context<'_>, spec: &ScenarioSpec, out: &mut Outputs) -> CliResult<()> {
    let run = &ctx.cfg.run;
    let f_mod = ctx.modulation_freq();
    let measured: Vec<(f64, f64, f64, f64, f64, f64)> = run
        .powers
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let seed = seed_for(spec.seed, tag::POWER, i);
            let m = measure_spectrum(ctx, p, seed)?;
            if p == 0.0 {
                return Ok((p, 0.0, f64::NAN, m.peak.s_sig, m.peak.s_bg, m.on.rbw));
            }
            let sweep = measure_sweep(ctx, ctx.resonance(p)?, p, seed)?;
            let fit = sweep
                .fit
                .ok_or_else(|| amor_core::AmorError::InvalidInput("sensitivity-sweep needs sweep_points >= 7".into()))?;
            Ok((p, fit.phi0, fit.gamma_fwhm, m.peak.s_sig, m.peak.s_bg, m.on.rbw))
        })
        .collect::<Result<_>>()?;
    let realised_rbw = measured[0].5;
    let points: Vec<(f64, f64)> = measured.iter().map(|m| (m.0, m.4)).collect();
    let (budget, budget_source) = if run.powers.len() >= amor_core::fitting::MIN_DISTINCT_POWERS {
        (fit_budget(&points, f_mod)?.0.budget, "fit")
    } else {
        (model_budget(ctx, f_mod)?, "model")
    };
    let rows: Vec<SweepRow> = measured
        .iter()
        .map(|&(p, phi0, gamma, s_sig, s_bg, rbw)| {
            let report = if p > 0.0 {
                let snr = amor_core::compute_snr(s_sig, s_bg, rbw)?;
                Some(SensitivityReport::new(
                    gamma,
                    snr,
                    SnrSource::Measured,
                    &ctx.cfg.atom,
                    run.integration_time,
                    p,
                    f_mod,
                    best_snl_class(&budget, p, &run.snl_k),
                )?)
            } else {
                None
            };
            Ok(SweepRow { power_w: p, phi0_fit_rad: phi0, gamma_fit_hz: gamma, s_sig_w_per_hz: s_sig, s_bg_w_per_hz: s_bg, report })
        })
        .collect::<Result<_>>()?;
    let db: Vec<f64> = rows.iter().map(|r| r.report.as_ref().map_or(f64::NAN, |r| r.delta_b)).collect();
    let plat: Option<Plateau> = plateau(&run.powers, &db, 0.1);

    out.write("sensitivity.csv", |w| {
        header(w, spec, &[("detection_freq_hz", fmt_f64(f_mod)), ("rbw_hz", fmt_f64(realised_rbw))])?;
        writeln!(w, "power_w,phi0_fit_rad,gamma_fit_hz,s_sig_w_per_hz,s_bg_w_per_hz,snr,delta_b_t_per_rthz,delta_b_atomic_t_per_rthz,snl_class")?;
        for r in &rows {
            let (snr, d, da, class) = r
                .report
                .as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN, "none".to_string()), |x| (x.snr, x.delta_b, x.delta_b_atomic, x.snl_class.to_string()));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.power_w),
                fmt_f64(r.phi0_fit_rad),
                fmt_f64(r.gamma_fit_hz),
                fmt_f64(r.s_sig_w_per_hz),
                fmt_f64(r.s_bg_w_per_hz),
                fmt_f64(snr),
                fmt_f64(d),
                fmt_f64(da),
                class
            )?;
        }
        Ok(())
    })?;
    let doc = json!({
        "seed": spec.seed,
        "snr_convention": amor_core::analysis::SNR_CONVENTION,
        "detection_freq_hz": f_mod,
        "budget_source": budget_source,
        "budget": budget,
        "plateau_tolerance": 0.1,
        "plateau": plat,
        "rows": rows,
    });
    out.write("sensitivity.json", |w| write_json(w, &doc))
}

