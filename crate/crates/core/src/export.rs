//! CSV and JSON writers for series, spectra, sweeps and SNL tables.
//!
//! Floats are written in shortest round-trip scientific form; infinities as `inf`.
//! Metadata lines start with `#` and hold `key = value` pairs.

use crate::analysis::SnlMapRow;
use crate::dsp::{PowerSpectrum, ResonanceCurve};
use crate::error::{AmorError, Result};
use serde::Serialize;
use std::io::Write;

pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// Writes one `# key = value` metadata line.
pub fn write_meta<W: Write>(w: &mut W, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(w, "# {key} = {value}")?;
    Ok(())
}

/// `time_s,value` rows after sample-rate, power and seed metadata.
pub fn write_timeseries_csv<W: Write>(w: &mut W, samples: &[f64], sample_rate: f64, power: f64, seed: u64, unit: &str) -> Result<()> {
    write_meta(w, "sample_rate_hz", fmt_f64(sample_rate))?;
    write_meta(w, "power_w", fmt_f64(power))?;
    write_meta(w, "seed", seed)?;
    writeln!(w, "time_s,value_{unit}")?;
    for (i, &x) in samples.iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(i as f64 / sample_rate), fmt_f64(x))?;
    }
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(w: &mut W, spec: &PowerSpectrum) -> Result<()> {
    write_meta(w, "rbw_hz", fmt_f64(spec.rbw))?;
    write_meta(w, "vbw_hz", fmt_f64(spec.vbw))?;
    write_meta(w, "segments", spec.segments)?;
    writeln!(w, "freq_hz,psd_w_per_hz")?;
    for (f, p) in spec.freqs.iter().zip(&spec.psd) {
        writeln!(w, "{},{}", fmt_f64(*f), fmt_f64(*p))?;
    }
    Ok(())
}

pub fn write_resonance_csv<W: Write>(w: &mut W, curve: &ResonanceCurve) -> Result<()> {
    writeln!(w, "mod_freq_hz,phi_p_rad,phi_q_rad")?;
    for i in 0..curve.len() {
        writeln!(
            w,
            "{},{},{}",
            fmt_f64(curve.mod_freqs[i]),
            fmt_f64(curve.phi_p_values[i]),
            fmt_f64(curve.phi_q_values[i])
        )?;
    }
    Ok(())
}

pub fn write_snl_map_csv<W: Write>(w: &mut W, rows: &[SnlMapRow]) -> Result<()> {
    writeln!(w, "freq_hz,k,p_low_w,p_high_w,nonempty")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(r.freq_hz),
            fmt_f64(r.range.k),
            fmt_f64(r.range.p_low),
            fmt_f64(r.range.p_high),
            r.range.nonempty
        )?;
    }
    Ok(())
}

/// Pretty JSON. Non-finite numbers (an unbounded `p_high`) become `null`.
pub fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| AmorError::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Parses a two-or-more-column numeric CSV, skipping `#` lines and one header row.
pub fn read_numeric_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if !header_seen && rows.is_empty() => header_seen = true,
            Err(_) => return Err(AmorError::Parse { line: n + 1, message: format!("non-numeric row: {line}") }),
        }
    }
    Ok(rows)
}
