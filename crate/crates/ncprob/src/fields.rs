//! Synthetic bipartite fields: ideal and noisy twin beams plus classical
//! product fields used as soundness controls.
//!
//! All means are totals per arm (not per mode).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::mandel_rice_prefix;
use crate::pmf::{convolve, JointPmf, Pmf1};
use crate::special::ln_factorial;

/// Tail mass allowed per generated marginal at default cutoffs.
const GEN_TAIL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid field parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
}

fn nonneg(name: &'static str, value: f64) -> Result<(), FieldError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter { name, value, reason: "must be finite and nonnegative" })
    }
}

fn modes_ok(name: &'static str, value: f64) -> Result<(), FieldError> {
    if value >= 1.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter { name, value, reason: "mode count must be at least 1" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldModel {
    IdealTwin { pairs: f64, modes: f64 },
    CoherentProduct { mu_s: f64, mu_i: f64 },
    ThermalProduct { mean_s: f64, modes_s: f64, mean_i: f64, modes_i: f64 },
    NoisyTwin { pairs: f64, modes: f64, noise_s: (f64, f64), noise_i: (f64, f64) },
}

impl FieldModel {
    /// Generates the distribution; `cutoff` applies to both arms and
    /// defaults to mean + 10 standard deviations, grown until the tail is
    /// negligible.
    pub fn generate(&self, cutoff: Option<u32>) -> Result<JointPmf, FieldError> {
        match *self {
            FieldModel::IdealTwin { pairs, modes } => ideal_twin(pairs, modes, cutoff),
            FieldModel::CoherentProduct { mu_s, mu_i } => coherent_product(mu_s, mu_i, cutoff),
            FieldModel::ThermalProduct { mean_s, modes_s, mean_i, modes_i } => thermal_product(mean_s, modes_s, mean_i, modes_i, cutoff),
            FieldModel::NoisyTwin { pairs, modes, noise_s, noise_i } => noisy_twin(pairs, modes, noise_s, noise_i, cutoff),
        }
    }

    /// Whether the model can only produce classical fields.
    pub fn is_classical(&self) -> bool {
        matches!(self, FieldModel::CoherentProduct { .. } | FieldModel::ThermalProduct { .. })
    }
}

fn default_cutoff(mean: f64, var: f64) -> usize {
    (mean + 10.0 * var.sqrt()).ceil() as usize + 1
}

/// Distribution `f(0..len)` truncated at `cutoff`, or grown from the default
/// cutoff until the missing mass is below the generator tolerance.
fn grow(cutoff: Option<u32>, start: usize, f: impl Fn(usize) -> Vec<f64>) -> Pmf1 {
    if let Some(c) = cutoff {
        return Pmf1::truncated(f(c as usize + 1)).expect("nonnegative probabilities");
    }
    let mut len = start.max(1);
    loop {
        let probs = f(len);
        let total: f64 = probs.iter().sum();
        if 1.0 - total < GEN_TAIL || len > 1 << 22 {
            return Pmf1::truncated(probs).expect("nonnegative probabilities");
        }
        len *= 2;
    }
}

/// Mandel–Rice marginal with total mean `mean` spread over `modes` modes.
pub fn mandel_rice_marginal(mean: f64, modes: f64, cutoff: Option<u32>) -> Pmf1 {
    let nu = mean / modes;
    grow(cutoff, default_cutoff(mean, mean * (1.0 + nu)), |len| mandel_rice_prefix(nu, modes, len))
}

/// Poisson marginal with mean `mu`.
pub fn poisson_marginal(mu: f64, cutoff: Option<u32>) -> Pmf1 {
    let f = |len: usize| -> Vec<f64> {
        if mu == 0.0 {
            let mut v = vec![0.0; len];
            v[0] = 1.0;
            return v;
        }
        (0..len as u32).map(|n| (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()).collect()
    };
    grow(cutoff, default_cutoff(mu, mu), f)
}

/// Ideal twin beam: `p(n,n)` is Mandel–Rice with `pairs` mean pairs in `modes` modes.
pub fn ideal_twin(pairs: f64, modes: f64, cutoff: Option<u32>) -> Result<JointPmf, FieldError> {
    nonneg("pairs", pairs)?;
    modes_ok("modes", modes)?;
    let diag = mandel_rice_marginal(pairs, modes, cutoff);
    let c = diag.cutoff();
    let p = JointPmf::from_fn(c, c, |a, b| if a == b { diag.get(a) } else { 0.0 }).expect("valid diagonal");
    Ok(p)
}

/// Product of Poisson marginals.
pub fn coherent_product(mu_s: f64, mu_i: f64, cutoff: Option<u32>) -> Result<JointPmf, FieldError> {
    nonneg("mu_s", mu_s)?;
    nonneg("mu_i", mu_i)?;
    Ok(JointPmf::product(&poisson_marginal(mu_s, cutoff), &poisson_marginal(mu_i, cutoff)))
}

/// Product of Mandel–Rice marginals.
pub fn thermal_product(mean_s: f64, modes_s: f64, mean_i: f64, modes_i: f64, cutoff: Option<u32>) -> Result<JointPmf, FieldError> {
    nonneg("mean_s", mean_s)?;
    nonneg("mean_i", mean_i)?;
    modes_ok("modes_s", modes_s)?;
    modes_ok("modes_i", modes_i)?;
    Ok(JointPmf::product(&mandel_rice_marginal(mean_s, modes_s, cutoff), &mandel_rice_marginal(mean_i, modes_i, cutoff)))
}

/// Ideal twin beam convolved with independent Mandel–Rice noise on each arm;
/// `noise_*` is `(mean, modes)`.
pub fn noisy_twin(pairs: f64, modes: f64, noise_s: (f64, f64), noise_i: (f64, f64), cutoff: Option<u32>) -> Result<JointPmf, FieldError> {
    nonneg("noise_s mean", noise_s.0)?;
    nonneg("noise_i mean", noise_i.0)?;
    modes_ok("noise_s modes", noise_s.1)?;
    modes_ok("noise_i modes", noise_i.1)?;
    let twin = ideal_twin(pairs, modes, None)?;
    let ns = mandel_rice_marginal(noise_s.0, noise_s.1, None);
    let ni = mandel_rice_marginal(noise_i.0, noise_i.1, None);
    let full = convolve(&twin, &ns, &ni);
    Ok(match cutoff {
        None => full,
        Some(c) => JointPmf::from_fn(c, c, |a, b| full.get(a, b)).expect("valid truncation"),
    })
}
