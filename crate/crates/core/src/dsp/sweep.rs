use super::lockin::lock_in_demodulate;
use crate::config::FieldConfig;
use crate::error::{AmorError, Result};
use crate::rng::derive_seed;
use crate::signal::{synthesize_rotation, ResonanceParams, SynthesisSettings};
use serde::{Deserialize, Serialize};

/// Lock-in outputs versus modulation frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCurve {
    pub mod_freqs: Vec<f64>,
    pub phi_p_values: Vec<f64>,
    pub phi_q_values: Vec<f64>,
}

impl ResonanceCurve {
    /// Requires equal, nonzero lengths and strictly increasing frequencies.
    /// The fitter imposes its own minimum point count.
    pub fn new(mod_freqs: Vec<f64>, phi_p_values: Vec<f64>, phi_q_values: Vec<f64>) -> Result<Self> {
        if mod_freqs.is_empty() || mod_freqs.len() != phi_p_values.len() || mod_freqs.len() != phi_q_values.len() {
            return Err(AmorError::InvalidInput(format!(
                "curve arrays have lengths {}, {}, {}",
                mod_freqs.len(),
                phi_p_values.len(),
                phi_q_values.len()
            )));
        }
        if mod_freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(AmorError::InvalidInput("mod_freqs must be strictly increasing".into()));
        }
        Ok(ResonanceCurve { mod_freqs, phi_p_values, phi_q_values })
    }

    pub fn len(&self) -> usize {
        self.mod_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mod_freqs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Per-point record; `duration` is the dwell at each frequency.
    pub synthesis: SynthesisSettings,
    pub lockin_bandwidth: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub curve: ResonanceCurve,
    /// False when the grid does not straddle the resonance centre.
    pub brackets_resonance: bool,
}

/// Synthesizes and demodulates one sweep point. Noise stream is keyed by `(seed, index)`.
pub fn sweep_point(res: &ResonanceParams, mod_freq: f64, index: usize, settings: &SweepSettings) -> Result<(f64, f64)> {
    let field = FieldConfig::with_detuning(mod_freq, res.detuning_at(mod_freq));
    let ts = synthesize_rotation(res, &field, &settings.synthesis, derive_seed(settings.seed, index as u64))?;
    let out = lock_in_demodulate(&ts, mod_freq, settings.lockin_bandwidth)?;
    Ok((out.phi_p, out.phi_q))
}

/// Steps the modulation frequency across `grid`, demodulating at each point.
pub fn sweep_resonance(res: &ResonanceParams, grid: &[f64], settings: &SweepSettings) -> Result<SweepOutcome> {
    let mut p = Vec::with_capacity(grid.len());
    let mut q = Vec::with_capacity(grid.len());
    for (i, &f) in grid.iter().enumerate() {
        let (pi, qi) = sweep_point(res, f, i, settings)?;
        p.push(pi);
        q.push(qi);
    }
    let curve = ResonanceCurve::new(grid.to_vec(), p, q)?;
    Ok(SweepOutcome { brackets_resonance: brackets(grid, res.center_freq), curve })
}

pub(crate) fn brackets(grid: &[f64], center: f64) -> bool {
    match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) if grid.len() == 1 => lo == center && hi == center,
        (Some(&lo), Some(&hi)) => lo < center && center < hi,
        _ => false,
    }
}
