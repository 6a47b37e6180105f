//! Closed-form entropy quantities: unstable entropies, the Ruelle and SRB
//! bounds, Bernoulli pressure and Friedland's formula. All values are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{JointSplitting, LyapunovSpectrum};
use crate::systems::Weights;

/// `sum_{lambda > 0} lambda m`.
pub fn unstable_entropy(spectrum: &LyapunovSpectrum) -> f64 {
    spectrum
        .exponents
        .iter()
        .zip(&spectrum.multiplicities)
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, m)| l * *m as f64)
        .sum()
}

/// Unstable entropy of each generator read off a joint splitting.
pub fn splitting_unstable_entropies(splitting: &JointSplitting) -> [f64; 2] {
    [0, 1].map(|i| {
        splitting
            .generator_exponents(i)
            .iter()
            .filter(|e| e.lambda > 0.0)
            .map(|e| e.lambda * e.m as f64)
            .sum()
    })
}

/// `nu1 h1 + nu2 h2`.
pub fn ruelle_bound(h: [f64; 2], nu: Weights) -> f64 {
    nu.get(0) * h[0] + nu.get(1) * h[1]
}

/// `sum_i nu_i sum_{lambda > 0} lambda d`, with `d` the multiplicity minus the defect dimension.
pub fn srb_lower_bound(splitting: Option<&JointSplitting>, nu: Weights) -> Result<f64> {
    let splitting = splitting.ok_or_else(|| Error::invalid("the SRB lower bound needs a joint splitting"))?;
    Ok((0..2)
        .map(|i| {
            nu.get(i)
                * splitting
                    .generator_exponents(i)
                    .iter()
                    .filter(|e| e.lambda > 0.0)
                    .map(|e| e.lambda * e.d as f64)
                    .sum::<f64>()
        })
        .sum())
}

/// `-sum nu log nu` with `0 log 0 = 0`.
pub fn shannon_entropy(nu: Weights) -> f64 {
    nu.as_array().iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// Base entropy of the shift plus the fiber entropy.
pub fn abramov_rokhlin(nu: Weights, fiber_entropy: f64) -> Result<f64> {
    if !(fiber_entropy >= 0.0) {
        return Err(Error::invalid(format!("fiber entropy {fiber_entropy} must be >= 0")));
    }
    Ok(shannon_entropy(nu) + fiber_entropy)
}

/// `log(e^J1 + e^J2)`.
pub fn pressure_bernoulli(j: [f64; 2]) -> f64 {
    let m = j[0].max(j[1]);
    m + ((j[0] - m).exp() + (j[1] - m).exp()).ln()
}

/// The equilibrium weights `nu_i = e^{J_i} / sum e^J`.
pub fn optimal_weights(j: [f64; 2]) -> Weights {
    let m = j[0].max(j[1]);
    let e = [(j[0] - m).exp(), (j[1] - m).exp()];
    let total = e[0] + e[1];
    let nu1 = e[0] / total;
    Weights::new(nu1, 1.0 - nu1).expect("softmax weights are a probability pair")
}

pub fn friedland_formula(h1: f64, h2: f64) -> f64 {
    pressure_bernoulli([h1, h2])
}

/// Shannon entropy of `nu` plus the Pesin value at `nu`.
pub fn friedland_upper_bound(nu: Weights, pesin_value: f64) -> f64 {
    shannon_entropy(nu) + pesin_value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub nu: Weights,
    pub per_generator_unstable: [f64; 2],
    pub ruelle_bound: f64,
    pub pesin_value: f64,
    /// Present when a joint splitting was available.
    pub srb_lower: Option<f64>,
    pub shift_entropy: f64,
    pub skew_entropy: f64,
    pub friedland_value: f64,
    pub friedland_upper: f64,
    /// `friedland_upper` at `nu` falls short of the value at `optimal_nu`;
    /// it is then informational only.
    pub below_optimum: bool,
    pub optimal_nu: Weights,
    pub provenance: Vec<String>,
}

/// Tolerance for deciding that `nu` is the equilibrium.
const OPTIMUM_TOLERANCE: f64 = 1e-12;

impl EntropyReport {
    /// Assembles every quantity from the generator entropies `h`.
    pub fn new(nu: Weights, h: [f64; 2], srb_lower: Option<f64>, provenance: Vec<String>) -> Result<Self> {
        if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("unstable entropies {h:?} must be finite and >= 0")));
        }
        let pesin_value = ruelle_bound(h, nu);
        let shift_entropy = shannon_entropy(nu);
        let friedland_value = friedland_formula(h[0], h[1]);
        let friedland_upper = friedland_upper_bound(nu, pesin_value);
        Ok(EntropyReport {
            nu,
            per_generator_unstable: h,
            ruelle_bound: pesin_value,
            pesin_value,
            srb_lower,
            shift_entropy,
            skew_entropy: abramov_rokhlin(nu, pesin_value)?,
            friedland_value,
            friedland_upper,
            below_optimum: friedland_upper < friedland_value - OPTIMUM_TOLERANCE,
            optimal_nu: optimal_weights(h),
            provenance,
        })
    }
}
