//! Joint fit of both lock-in quadratures to a complex Lorentzian.
//!
//! Model, with `u = f − f₀` and `h = iγ/2`:
//! `w(f) = φ₀ e^{iθ} h/(u + h)`, `φ_P = Re w + b_P`, `φ_Q = −Im w + b_Q`.
//! At θ = 0 this is the absorptive/dispersive pair of the signal model.

use super::lm::{levenberg_marquardt, LeastSquaresProblem, LmOptions, Termination};
use crate::dsp::ResonanceCurve;
use crate::error::{AmorError, Result};
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MIN_POINTS: usize = 7;
const N_PARAMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub center_freq: f64,
    pub gamma_fwhm: f64,
    pub phi0: f64,
    pub phase_offset: f64,
    pub baseline_p: f64,
    pub baseline_q: f64,
    /// Set when the peak sat on a grid edge and a generic guess was used instead.
    pub fallback: bool,
}

impl InitialGuess {
    fn params(&self) -> [f64; N_PARAMS] {
        [self.center_freq, self.gamma_fwhm, self.phi0, self.phase_offset, self.baseline_p, self.baseline_q]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center_freq: f64,
    pub gamma_fwhm: f64,
    pub phi0: f64,
    pub phase_offset: f64,
    pub baseline_p: f64,
    pub baseline_q: f64,
    /// Parameter covariance in the order above.
    pub covariance: [[f64; N_PARAMS]; N_PARAMS],
    pub residual_rms: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Centre lies outside the swept range.
    pub extrapolated: bool,
    pub guess_fallback: bool,
}

impl LorentzianFit {
    pub fn stderr(&self) -> [f64; N_PARAMS] {
        std::array::from_fn(|i| self.covariance[i][i].max(0.0).sqrt())
    }

    /// Model quadratures at `f` with the fitted parameters.
    pub fn eval(&self, f: f64) -> (f64, f64) {
        lorentzian_model(f, &[self.center_freq, self.gamma_fwhm, self.phi0, self.phase_offset, self.baseline_p, self.baseline_q])
    }
}

/// `(φ_P, φ_Q)` for parameters `[f₀, γ, φ₀, θ, b_P, b_Q]`.
pub fn lorentzian_model(f: f64, p: &[f64]) -> (f64, f64) {
    let w = rotated(p) * shape(f - p[0], p[1]);
    (w.re + p[4], -w.im + p[5])
}

fn rotated(p: &[f64]) -> Complex<f64> {
    Complex::from_polar(p[2], p[3])
}

fn shape(u: f64, gamma: f64) -> Complex<f64> {
    let h = Complex::new(0.0, gamma / 2.0);
    h / (u + h)
}

struct Problem<'a> {
    curve: &'a ResonanceCurve,
}

impl LeastSquaresProblem for Problem<'_> {
    fn n_params(&self) -> usize {
        N_PARAMS
    }

    fn n_residuals(&self) -> usize {
        2 * self.curve.len()
    }

    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let m = self.curve.len();
        let mut r = DVector::zeros(2 * m);
        for i in 0..m {
            let (mp, mq) = lorentzian_model(self.curve.mod_freqs[i], p);
            r[i] = mp - self.curve.phi_p_values[i];
            r[m + i] = mq - self.curve.phi_q_values[i];
        }
        r
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let m = self.curve.len();
        let a = rotated(p);
        let h = Complex::new(0.0, p[1] / 2.0);
        let mut j = DMatrix::zeros(2 * m, N_PARAMS);
        for i in 0..m {
            let u = self.curve.mod_freqs[i] - p[0];
            let d = u + h;
            let c = h / d;
            let d2 = d * d;
            let dz = [
                a * h / d2,
                a * Complex::new(0.0, 0.5) * u / d2,
                Complex::from_polar(1.0, p[3]) * c,
                Complex::<f64>::i() * a * c,
            ];
            for (k, z) in dz.iter().enumerate() {
                j[(i, k)] = z.re;
                j[(m + i, k)] = -z.im;
            }
            j[(i, 4)] = 1.0;
            j[(m + i, 5)] = 1.0;
        }
        j
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p[1] > 0.0 && p.iter().all(|v| v.is_finite())
    }
}

/// Heuristic starting point from the in-phase trace.
///
/// Centre at the φ_P maximum, width from the half-maximum crossings above the
/// trace minimum. If the maximum sits on a grid edge the grid midpoint and a
/// tenth of the span are used and `fallback` is set.
pub fn auto_initial_guess(curve: &ResonanceCurve) -> Result<InitialGuess> {
    let f = &curve.mod_freqs;
    let p = &curve.phi_p_values;
    let m = f.len();
    if m < 3 {
        return Err(AmorError::InvalidInput(format!("{m} points; need at least 3 for a guess")));
    }
    let (imax, &pmax) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let pmin = p.iter().copied().fold(f64::INFINITY, f64::min);
    let span = f[m - 1] - f[0];
    if imax == 0 || imax == m - 1 {
        return Ok(InitialGuess {
            center_freq: 0.5 * (f[0] + f[m - 1]),
            gamma_fwhm: span / 10.0,
            phi0: (pmax - pmin).max(f64::MIN_POSITIVE),
            phase_offset: 0.0,
            baseline_p: 0.0,
            baseline_q: 0.0,
            fallback: true,
        });
    }
    let half = pmin + 0.5 * (pmax - pmin);
    let crossing = |range: &mut dyn Iterator<Item = usize>, toward: isize| -> Option<f64> {
        for i in range {
            let j = (i as isize + toward) as usize;
            if p[i] >= half && p[j] < half {
                let t = (p[i] - half) / (p[i] - p[j]);
                return Some(f[i] + t * (f[j] - f[i]));
            }
        }
        None
    };
    let left = crossing(&mut (1..=imax).rev(), -1);
    let right = crossing(&mut (imax..m - 1), 1);
    let fc = f[imax];
    let gamma = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (fc - l),
        (None, Some(r)) => 2.0 * (r - fc),
        (None, None) => span / 10.0,
    };
    let min_step = f.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    Ok(InitialGuess {
        center_freq: fc,
        gamma_fwhm: gamma.max(min_step / 2.0),
        phi0: pmax,
        phase_offset: 0.0,
        baseline_p: 0.0,
        baseline_q: 0.0,
        fallback: false,
    })
}

/// Fits centre, width, amplitude, phase and two baselines to a resonance sweep.
pub fn fit_lorentzian(curve: &ResonanceCurve, guess: Option<InitialGuess>) -> Result<LorentzianFit> {
    let m = curve.len();
    if m < MIN_POINTS {
        return Err(AmorError::InvalidInput(format!("{m} sweep points; need at least {MIN_POINTS}")));
    }
    let values = curve.phi_p_values.iter().chain(&curve.phi_q_values);
    if values.clone().any(|v| !v.is_finite()) {
        return Err(AmorError::InvalidInput("non-finite lock-in values".into()));
    }
    let first = curve.phi_p_values[0];
    if curve.phi_p_values.iter().all(|&v| v == first) && curve.phi_q_values.iter().all(|&v| v == curve.phi_q_values[0]) {
        return Err(AmorError::Degenerate("flat resonance curve".into()));
    }
    let guess = match guess {
        Some(g) => g,
        None => auto_initial_guess(curve)?,
    };
    if !(guess.gamma_fwhm > 0.0) {
        return Err(AmorError::InvalidInput(format!("initial width {}", guess.gamma_fwhm)));
    }

    let problem = Problem { curve };
    let rep = levenberg_marquardt(&problem, &guess.params(), &LmOptions::default())?;
    let mut x = rep.params;
    if x[2] < 0.0 {
        x[2] = -x[2];
        x[3] += PI;
    }
    x[3] = wrap_phase(x[3]);

    let dof = (2 * m).saturating_sub(N_PARAMS);
    let s2 = if dof > 0 { rep.ssr / dof as f64 } else { 0.0 };
    let jtj = problem_jtj(&problem, &x);
    let inv = jtj.clone().try_inverse().unwrap_or_else(|| jtj.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::zeros(N_PARAMS, N_PARAMS)));
    let covariance = std::array::from_fn(|i| std::array::from_fn(|k| 0.5 * (inv[(i, k)] + inv[(k, i)]) * s2));

    let (lo, hi) = (curve.mod_freqs[0], curve.mod_freqs[m - 1]);
    Ok(LorentzianFit {
        center_freq: x[0],
        gamma_fwhm: x[1],
        phi0: x[2],
        phase_offset: x[3],
        baseline_p: x[4],
        baseline_q: x[5],
        covariance,
        residual_rms: (rep.ssr / (2 * m) as f64).sqrt(),
        iterations: rep.iterations,
        termination: rep.termination,
        extrapolated: !(lo <= x[0] && x[0] <= hi),
        guess_fallback: guess.fallback,
    })
}

fn problem_jtj(problem: &Problem<'_>, x: &[f64]) -> DMatrix<f64> {
    let j = problem.jacobian(x);
    j.transpose() * j
}

fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{lorentzian_quadratures, ResonanceParams};
    use proptest::prelude::*;

    fn analytic_curve(res: &ResonanceParams, lo: f64, hi: f64, n: usize) -> ResonanceCurve {
        let f: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let (p, q): (Vec<f64>, Vec<f64>) = f.iter().map(|&x| lorentzian_quadratures(res.detuning_at(x), res)).unzip();
        ResonanceCurve::new(f, p, q).unwrap()
    }

    #[test]
    fn model_matches_signal_quadratures() {
        let res = ResonanceParams::new(2e-3, 12.0, 70_900.0).unwrap();
        for f in [70_880.0, 70_894.0, 70_900.0, 70_913.0] {
            let (p, q) = lorentzian_quadratures(res.detuning_at(f), &res);
            let (mp, mq) = lorentzian_model(f, &[70_900.0, 12.0, 2e-3, 0.0, 0.0, 0.0]);
            assert!((p - mp).abs() < 1e-15 && (q - mq).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let curve = analytic_curve(&ResonanceParams::new(1e-3, 10.0, 71e3).unwrap(), 70_970.0, 71_030.0, 9);
        let prob = Problem { curve: &curve };
        let x = [71_002.0, 9.0, 1.1e-3, 0.2, 1e-5, -2e-5];
        let j = prob.jacobian(&x);
        for k in 0..N_PARAMS {
            let h = if k < 2 { 1e-4 } else { 1e-6 * x[k].abs().max(1e-6) };
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (prob.residuals(&xp) - prob.residuals(&xm)) / (2.0 * h);
            for i in 0..fd.len() {
                assert!((fd[i] - j[(i, k)]).abs() < 1e-5 * j.column(k).amax(), "param {k} row {i}: {} vs {}", fd[i], j[(i, k)]);
            }
        }
    }

    #[test]
    fn noiseless_recovery() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let curve = analytic_curve(&res, 70_975.0, 71_025.0, 41);
        let fit = fit_lorentzian(&curve, None).unwrap();
        assert!(fit.residual_rms < 1e-10);
        assert!((fit.center_freq - 71e3).abs() < 1e-6);
        assert!((fit.gamma_fwhm - 10.0).abs() < 1e-6);
        assert!((fit.phi0 - 1e-3).abs() < 1e-12);
        assert!(fit.phase_offset.abs() < 1e-6);
        assert!(!fit.extrapolated);
    }

    #[test]
    fn guess_from_half_maximum() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let g = auto_initial_guess(&analytic_curve(&res, 70_975.0, 71_025.0, 51)).unwrap();
        assert!(!g.fallback);
        assert_eq!(g.center_freq, 71e3);
        assert!((g.gamma_fwhm - 10.0).abs() < 0.5, "{}", g.gamma_fwhm);
    }

    #[test]
    fn guess_within_a_fifth_of_truth() {
        for (phi0, gamma, f0) in [(1e-3, 10.0, 71e3), (5e-4, 25.0, 70_914.0), (2e-3, 60.0, 699_812.0)] {
            let res = ResonanceParams::new(phi0, gamma, f0).unwrap();
            let g = auto_initial_guess(&analytic_curve(&res, f0 - 5.0 * gamma, f0 + 5.0 * gamma, 41)).unwrap();
            assert!((g.center_freq - f0).abs() < 0.2 * gamma, "{g:?}");
            assert!((g.gamma_fwhm / gamma - 1.0).abs() < 0.2, "{g:?}");
            assert!((g.phi0 / phi0 - 1.0).abs() < 0.2, "{g:?}");
        }
    }

    #[test]
    fn guess_tolerates_baseline_offset() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let mut curve = analytic_curve(&res, 70_950.0, 71_050.0, 41);
        curve.phi_p_values.iter_mut().for_each(|v| *v += 0.5e-3);
        let g = auto_initial_guess(&curve).unwrap();
        assert!((g.center_freq - 71e3).abs() < 10.0, "{g:?}");
    }

    #[test]
    fn edge_peak_falls_back() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let curve = analytic_curve(&res, 71_010.0, 71_070.0, 13);
        let g = auto_initial_guess(&curve).unwrap();
        assert!(g.fallback);
        assert_eq!(g.center_freq, 71_040.0);
        assert!((g.gamma_fwhm - 6.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_span_centre_is_flagged_or_fails() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let curve = analytic_curve(&res, 71_010.0, 71_070.0, 25);
        match fit_lorentzian(&curve, None) {
            Ok(fit) => assert!(fit.extrapolated),
            Err(e) => assert!(matches!(e, AmorError::NonConvergence { .. })),
        }
    }

    #[test]
    fn rejects_short_and_flat_curves() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let short = analytic_curve(&res, 70_990.0, 71_010.0, 6);
        assert!(matches!(fit_lorentzian(&short, None), Err(AmorError::InvalidInput(_))));
        let flat = ResonanceCurve::new((0..9).map(|i| i as f64).collect(), vec![1.0; 9], vec![0.0; 9]).unwrap();
        assert!(matches!(fit_lorentzian(&flat, None), Err(AmorError::Degenerate(_))));
    }

    #[test]
    fn negative_amplitude_is_folded_into_phase() {
        let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
        let curve = analytic_curve(&res, 70_975.0, 71_025.0, 41);
        let guess = InitialGuess {
            center_freq: 71_001.0,
            gamma_fwhm: 8.0,
            phi0: -0.9e-3,
            phase_offset: PI + 0.1,
            baseline_p: 0.0,
            baseline_q: 0.0,
            fallback: false,
        };
        let fit = fit_lorentzian(&curve, Some(guess)).unwrap();
        assert!(fit.phi0 > 0.0);
        assert!(fit.phase_offset.abs() < 1e-6, "{}", fit.phase_offset);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn refit_is_idempotent(gamma in 4.0f64..20.0, offset in -3.0f64..3.0, phi0 in 1e-4f64..1e-2) {
            let res = ResonanceParams::new(phi0, gamma, 71e3 + offset).unwrap();
            let curve = analytic_curve(&res, 71e3 - 3.0 * gamma, 71e3 + 3.0 * gamma, 31);
            let a = fit_lorentzian(&curve, None).unwrap();
            let g = InitialGuess {
                center_freq: a.center_freq,
                gamma_fwhm: a.gamma_fwhm,
                phi0: a.phi0,
                phase_offset: a.phase_offset,
                baseline_p: a.baseline_p,
                baseline_q: a.baseline_q,
                fallback: false,
            };
            let b = fit_lorentzian(&curve, Some(g)).unwrap();
            prop_assert!((a.center_freq - b.center_freq).abs() <= 1e-9 * gamma);
            prop_assert!((a.gamma_fwhm - b.gamma_fwhm).abs() <= 1e-9 * gamma);
            prop_assert!((a.phi0 - b.phi0).abs() <= 1e-9 * phi0);
        }

        #[test]
        fn amplitude_scaling_is_equivariant(scale in 0.1f64..10.0) {
            let res = ResonanceParams::new(1e-3, 10.0, 71e3).unwrap();
            let curve = analytic_curve(&res, 70_975.0, 71_025.0, 41);
            let scaled = ResonanceCurve::new(
                curve.mod_freqs.clone(),
                curve.phi_p_values.iter().map(|v| v * scale).collect(),
                curve.phi_q_values.iter().map(|v| v * scale).collect(),
            ).unwrap();
            let a = fit_lorentzian(&curve, None).unwrap();
            let b = fit_lorentzian(&scaled, None).unwrap();
            prop_assert!((b.phi0 - scale * a.phi0).abs() <= 1e-9 * scale * a.phi0);
            prop_assert!((a.center_freq - b.center_freq).abs() < 1e-6);
            prop_assert!((a.gamma_fwhm - b.gamma_fwhm).abs() < 1e-6);
        }
    }
}
