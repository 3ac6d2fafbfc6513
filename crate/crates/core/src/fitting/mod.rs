//! Resonance and noise-law fitting.

mod lm;
mod lorentzian;
mod noise_poly;

pub use lm::{levenberg_marquardt, LeastSquaresProblem, LmOptions, LmReport, Termination};
pub use lorentzian::{auto_initial_guess, fit_lorentzian, lorentzian_model, InitialGuess, LorentzianFit, MIN_POINTS};
pub use noise_poly::{fit_noise_polynomial, NoisePolyFit, MIN_DISTINCT_POWERS};
