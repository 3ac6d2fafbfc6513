//! Damped least squares (Levenberg–Marquardt with Marquardt diagonal scaling).

use crate::error::{AmorError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Residuals `model − data`.
    fn residuals(&self, params: &[f64]) -> DVector<f64>;
    /// Jacobian of the residuals, `n_residuals × n_params`.
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
    /// Parameter sets outside the model's domain are rejected as steps.
    fn feasible(&self, _params: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when ‖Jᵀr‖∞ falls below this fraction of its starting value.
    pub gradient_tol: f64,
    /// Stop when every relative parameter step is below this.
    pub step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, gradient_tol: 1e-10, step_tol: 1e-13, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    /// No damping level reduces the cost further; the point is a minimum to rounding.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub initial_gradient: f64,
    pub final_gradient: f64,
    /// JᵀJ at the solution.
    pub jtj: DMatrix<f64>,
}

pub fn levenberg_marquardt<P: LeastSquaresProblem>(problem: &P, x0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.n_params();
    if x0.len() != n {
        return Err(AmorError::InvalidInput(format!("{} starting values for {n} parameters", x0.len())));
    }
    if !problem.feasible(x0) {
        return Err(AmorError::InvalidInput("infeasible starting point".into()));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut r = problem.residuals(x.as_slice());
    let mut ssr = r.norm_squared();
    if !ssr.is_finite() {
        return Err(AmorError::InvalidInput("non-finite residuals at start".into()));
    }
    let mut lambda = opts.initial_lambda;
    let mut j = problem.jacobian(x.as_slice());
    let mut jtj = j.transpose() * &j;
    let mut g = j.transpose() * &r;
    let g0 = g.amax();

    let finish = |x: &DVector<f64>, ssr, iterations, termination, gnorm, jtj: DMatrix<f64>| LmReport {
        params: x.as_slice().to_vec(),
        ssr,
        iterations,
        termination,
        initial_gradient: g0,
        final_gradient: gnorm,
        jtj,
    };

    if g0 == 0.0 {
        return Ok(finish(&x, ssr, 0, Termination::Gradient, 0.0, jtj));
    }

    for iter in 1..=opts.max_iterations {
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                let d = jtj[(i, i)];
                a[(i, i)] += lambda * if d > 0.0 { d } else { 1.0 };
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            if !problem.feasible(trial.as_slice()) {
                lambda *= 10.0;
                continue;
            }
            let r_trial = problem.residuals(trial.as_slice());
            let ssr_trial = r_trial.norm_squared();
            if ssr_trial.is_finite() && ssr_trial <= ssr {
                let small_step = step.iter().zip(trial.iter()).all(|(s, v)| s.abs() <= opts.step_tol * (v.abs() + opts.step_tol));
                x = trial;
                r = r_trial;
                ssr = ssr_trial;
                j = problem.jacobian(x.as_slice());
                jtj = j.transpose() * &j;
                g = j.transpose() * &r;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                let gnorm = g.amax();
                if gnorm <= opts.gradient_tol * g0 {
                    return Ok(finish(&x, ssr, iter, Termination::Gradient, gnorm, jtj));
                }
                if small_step {
                    return Ok(finish(&x, ssr, iter, Termination::Step, gnorm, jtj));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            let gnorm = g.amax();
            return Ok(finish(&x, ssr, iter, Termination::Stalled, gnorm, jtj));
        }
    }
    Err(AmorError::NonConvergence { iterations: opts.max_iterations })
}
