//! Whitespace-separated plot-data files derived from a run's result files.

use crate::error::{CliError, CliResult};
use amor_core::export::{fmt_f64, write_json};
use amor_core::fitting::LorentzianFit;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const SIDECAR: &str = "plotdata.json";

/// A CSV with a named header; `#` lines are skipped.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| CliError::io(format!("{}: no header", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let rows = lines.map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::io(format!("missing column `{name}`")))
    }

    fn num(&self, name: &str) -> CliResult<Vec<f64>> {
        let j = self.col(name)?;
        self.rows
            .iter()
            .map(|r| {
                r.get(j)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| CliError::io(format!("bad value in column `{name}`")))
            })
            .collect()
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Non-finite values that mean "no range" are written as `nan`, unbounded ones as `inf`.
fn cell(v: f64) -> String {
    if v.is_nan() { "nan".into() } else { fmt_f64(v) }
}

fn write_dat(dir: &Path, name: &str, seed: u64, source: &str, columns: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    let path = dir.join(name);
    let mut text = format!("# source = {source}\n# seed = {seed}\n# {}\n", columns.join(" "));
    for r in rows {
        text.push_str(&r.iter().map(|&v| cell(v)).collect::<Vec<_>>().join(" "));
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn fig2(dir: &Path, seed: u64) -> CliResult<Vec<&'static str>> {
    let t = Table::read(&dir.join("resonance.csv"))?;
    let fit: Option<LorentzianFit> = read_json(&dir.join("fit.json"))?
        .get("fit")
        .and_then(|v| serde_json::from_value(v.clone()).ok());
    let (f, p, q) = (t.num("mod_freq_hz")?, t.num("phi_p_rad")?, t.num("phi_q_rad")?);
    let rows: Vec<Vec<f64>> = f
        .iter()
        .zip(p.iter().zip(&q))
        .map(|(&f, (&p, &q))| {
            let (fp, fq) = fit.as_ref().map_or((f64::NAN, f64::NAN), |m| m.eval(f));
            vec![f, p, q, fp, fq]
        })
        .collect();
    let cols = ["mod_freq_hz", "phi_p_rad", "phi_q_rad", "fit_p_rad", "fit_q_rad"];
    write_dat(dir, "fig2_resonance.dat", seed, "resonance.csv fit.json", &cols, &rows)?;
    Ok(cols.to_vec())
}

fn fig3(dir: &Path, seed: u64) -> CliResult<Vec<&'static str>> {
    let on = Table::read(&dir.join("spectrum.csv"))?;
    let off = Table::read(&dir.join("spectrum_background.csv"))?;
    let (f, s, b) = (on.num("freq_hz")?, on.num("psd_w_per_hz")?, off.num("psd_w_per_hz")?);
    if b.len() != s.len() {
        return Err(CliError::io("signal and background traces differ in length"));
    }
    let rows: Vec<Vec<f64>> = (0..f.len()).map(|i| vec![f[i], s[i], b[i]]).collect();
    let cols = ["freq_hz", "psd_signal_w_per_hz", "psd_background_w_per_hz"];
    write_dat(dir, "fig3_spectrum.dat", seed, "spectrum.csv spectrum_background.csv", &cols, &rows)?;
    Ok(cols.to_vec())
}

fn fig4(dir: &Path, seed: u64) -> CliResult<Vec<(&'static str, Vec<&'static str>)>> {
    let t = Table::read(&dir.join("sensitivity.csv"))?;
    let p = t.num("power_w")?;
    let snr = t.num("snr")?;
    let (db, da) = (t.num("delta_b_t_per_rthz")?, t.num("delta_b_atomic_t_per_rthz")?);
    let keep: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let a_cols = ["power_w", "snr_per_rthz"];
    let b_cols = ["power_w", "delta_b_t_per_rthz", "delta_b_atomic_t_per_rthz"];
    write_dat(dir, "fig4a_snr.dat", seed, "sensitivity.csv", &a_cols, &keep.iter().map(|&i| vec![p[i], snr[i]]).collect::<Vec<_>>())?;
    write_dat(
        dir,
        "fig4b_sensitivity.dat",
        seed,
        "sensitivity.csv",
        &b_cols,
        &keep.iter().map(|&i| vec![p[i], db[i], da[i]]).collect::<Vec<_>>(),
    )?;
    Ok(vec![("fig4a_snr.dat", a_cols.to_vec()), ("fig4b_sensitivity.dat", b_cols.to_vec())])
}

/// Pivots the long SNL table into one row per frequency with `p_low, p_high` per k.
fn snl_fig(dir: &Path, seed: u64, source: &str, name: &str) -> CliResult<Vec<String>> {
    let t = Table::read(&dir.join(source))?;
    let (f, k, lo, hi) = (t.num("freq_hz")?, t.num("k")?, t.num("p_low_w")?, t.num("p_high_w")?);
    let ne = t.col("nonempty")?;
    let mut ks: Vec<f64> = k.clone();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let mut by_freq: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for i in 0..f.len() {
        let row = by_freq.entry(f[i].to_bits()).or_insert_with(|| {
            let mut r = vec![f[i]];
            r.resize(1 + 2 * ks.len(), f64::NAN);
            r
        });
        let j = ks.iter().position(|&x| x == k[i]).unwrap_or(0);
        if t.rows[i][ne] == "true" {
            row[1 + 2 * j] = lo[i];
            row[2 + 2 * j] = hi[i];
        }
    }
    let mut rows: Vec<Vec<f64>> = by_freq.into_values().collect();
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut cols = vec!["freq_hz".to_string()];
    for k in &ks {
        cols.push(format!("p_low_k{k}_w"));
        cols.push(format!("p_high_k{k}_w"));
    }
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    write_dat(dir, name, seed, source, &refs, &rows)?;
    Ok(cols)
}

fn fig8(dir: &Path, seed: u64) -> CliResult<Vec<&'static str>> {
    let t = Table::read(&dir.join("noise_scan.csv"))?;
    let budgets = read_json(&dir.join("budget.json"))?;
    let first = budgets
        .get("budgets")
        .and_then(|b| b.get(0))
        .ok_or_else(|| CliError::io("budget.json has no budgets"))?;
    let coef = |k: &str| first["fit"]["budget"][k].as_f64().unwrap_or(0.0);
    let (a, b, c) = (coef("coef_elec"), coef("coef_shot"), coef("coef_tech"));
    let f0 = first["detection_freq_hz"].as_f64().unwrap_or(f64::NAN);
    let (f, p, n) = (t.num("freq_hz")?, t.num("power_w")?, t.num("psd_w_per_hz")?);
    let rows: Vec<Vec<f64>> = (0..f.len())
        .filter(|&i| f[i] == f0)
        .map(|i| vec![p[i], n[i], a + b * p[i] + c * p[i] * p[i], a, b * p[i], c * p[i] * p[i]])
        .collect();
    let cols = ["power_w", "psd_measured_w_per_hz", "psd_fit_w_per_hz", "electronic_w_per_hz", "shot_w_per_hz", "technical_w_per_hz"];
    write_dat(dir, "fig8_noise.dat", seed, "noise_scan.csv budget.json", &cols, &rows)?;
    Ok(cols.to_vec())
}

/// Writes every plot file whose inputs are present in `dir`, plus a sidecar
/// describing the columns. Returns the names written.
pub fn emit_plotdata(dir: &Path, seed: u64) -> CliResult<Vec<String>> {
    let mut described: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let owned = |c: Vec<&str>| c.into_iter().map(String::from).collect::<Vec<_>>();
    if dir.join("resonance.csv").exists() && dir.join("fit.json").exists() {
        described.insert("fig2_resonance.dat".into(), owned(fig2(dir, seed)?));
    }
    if dir.join("spectrum.csv").exists() && dir.join("spectrum_background.csv").exists() {
        described.insert("fig3_spectrum.dat".into(), owned(fig3(dir, seed)?));
    }
    if dir.join("sensitivity.csv").exists() {
        for (name, cols) in fig4(dir, seed)? {
            described.insert(name.into(), owned(cols));
        }
    }
    if dir.join("snl_map_low.csv").exists() {
        described.insert("fig6_snl.dat".into(), snl_fig(dir, seed, "snl_map_low.csv", "fig6_snl.dat")?);
    }
    if dir.join("snl_map_high.csv").exists() {
        described.insert("fig7_snl.dat".into(), snl_fig(dir, seed, "snl_map_high.csv", "fig7_snl.dat")?);
    }
    if dir.join("noise_scan.csv").exists() && dir.join("budget.json").exists() {
        described.insert("fig8_noise.dat".into(), owned(fig8(dir, seed)?));
    }
    if described.is_empty() {
        return Err(CliError::io(format!("{}: no result files to derive plot data from", dir.display())));
    }
    let mut names: Vec<String> = described.keys().cloned().collect();
    let sidecar = json!({ "seed": seed, "files": described, "missing_value": "nan" });
    let path = dir.join(SIDECAR);
    let mut f = fs::File::create(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    write_json(&mut f, &sidecar)?;
    f.flush().map_err(|e| CliError::io(e.to_string()))?;
    names.push(SIDECAR.into());
    Ok(names)
}
