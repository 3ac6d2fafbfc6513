//! Nonnegative fit of `N(P) = A + B·P + C·P²` to measured noise levels.
//!
//! Rows are weighted by `1/N` so each point counts by its relative error.
//! Nonnegativity is enforced exactly by trying every active set.

use crate::detector::NoiseBudget;
use crate::error::{AmorError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const MIN_DISTINCT_POWERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePolyFit {
    pub budget: NoiseBudget,
    /// Standard errors of `[A, B, C]`; zero for fixed or clamped terms.
    pub coef_stderr: [f64; 3],
    pub fixed_elec: bool,
    /// Terms held at zero by the nonnegativity constraint.
    pub clamped: [bool; 3],
    /// RMS of `(N_fit − N)/N`.
    pub relative_rms: f64,
}

/// Fits `(power_w, psd_w_per_hz)` pairs taken at `detection_freq`.
///
/// With `fixed_elec` the electronic term is pinned to that value and only
/// `B` and `C` are free.
pub fn fit_noise_polynomial(points: &[(f64, f64)], fixed_elec: Option<f64>, detection_freq: f64) -> Result<NoisePolyFit> {
    for &(p, n) in points {
        if !(p >= 0.0 && p.is_finite()) || !(n >= 0.0 && n.is_finite()) {
            return Err(AmorError::InvalidInput(format!("noise point ({p}, {n})")));
        }
    }
    if let Some(a) = fixed_elec {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(AmorError::InvalidInput(format!("fixed electronic level {a}")));
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_DISTINCT_POWERS {
        return Err(AmorError::InvalidInput(format!(
            "{} distinct powers; need at least {MIN_DISTINCT_POWERS}",
            distinct.len()
        )));
    }
    let floor = points.iter().map(|p| p.1).filter(|&n| n > 0.0).fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(AmorError::Degenerate("all noise levels are zero".into()));
    }

    // Columns are normalised by their largest entry before solving.
    let free: Vec<usize> = if fixed_elec.is_some() { vec![1, 2] } else { vec![0, 1, 2] };
    let offset = fixed_elec.unwrap_or(0.0);
    let rows = points.len();
    let weight: Vec<f64> = points.iter().map(|p| 1.0 / p.1.max(floor)).collect();
    let basis = |p: f64, k: usize| p.powi(k as i32);
    let mut col_scale = [1.0f64; 3];
    for &k in &free {
        let m = points.iter().zip(&weight).map(|(p, w)| (basis(p.0, k) * w).abs()).fold(0.0, f64::max);
        col_scale[k] = if m > 0.0 { m } else { 1.0 };
    }
    let target = DVector::from_iterator(rows, points.iter().zip(&weight).map(|(p, w)| (p.1 - offset) * w));

    let design = |set: &[usize]| {
        DMatrix::from_fn(rows, set.len(), |i, j| basis(points[i].0, set[j]) * weight[i] / col_scale[set[j]])
    };

    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    for mask in 0u32..(1 << free.len()) {
        let set: Vec<usize> = free.iter().enumerate().filter(|(b, _)| mask & (1 << b) != 0).map(|(_, &k)| k).collect();
        let (beta, resid) = if set.is_empty() {
            (DVector::zeros(0), target.norm_squared())
        } else {
            let x = design(&set);
            let Ok(beta) = x.clone().svd(true, true).solve(&target, 1e-14) else {
                continue;
            };
            let r = &x * &beta - &target;
            (beta, r.norm_squared())
        };
        if beta.iter().any(|&b| b < 0.0) {
            continue;
        }
        if best.as_ref().is_none_or(|b| resid < b.0) {
            best = Some((resid, set, beta));
        }
    }
    let (ssr, set, beta) = best.expect("empty active set is always feasible");

    let mut coef = [0.0f64; 3];
    let mut stderr = [0.0f64; 3];
    for (j, &k) in set.iter().enumerate() {
        coef[k] = beta[j] / col_scale[k];
    }
    let dof = rows.saturating_sub(set.len());
    if !set.is_empty() && dof > 0 {
        let x = design(&set);
        let xtx = x.transpose() * &x;
        let s2 = ssr / dof as f64;
        if let Some(inv) = xtx.try_inverse() {
            for (j, &k) in set.iter().enumerate() {
                stderr[k] = (inv[(j, j)].max(0.0) * s2).sqrt() / col_scale[k];
            }
        }
    }
    if let Some(a) = fixed_elec {
        coef[0] = a;
    }
    let clamped = std::array::from_fn(|k| free.contains(&k) && !set.contains(&k));
    let budget = NoiseBudget::new(coef[0], coef[1], coef[2], detection_freq)?;
    let relative_rms = (points
        .iter()
        .map(|&(p, n)| {
            let e = budget.eval(p) - n;
            (e / n.max(floor)).powi(2)
        })
        .sum::<f64>()
        / rows as f64)
        .sqrt();
    Ok(NoisePolyFit { budget, coef_stderr: stderr, fixed_elec: fixed_elec.is_some(), clamped, relative_rms })
}
