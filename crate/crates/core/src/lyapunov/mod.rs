//! Lyapunov spectra of single maps and of i.i.d. random compositions.
//!
//! Both estimators push an orthonormal `p`-frame along the orbit with
//! [`qr_push`] and average the logarithms of the triangular diagonal after a
//! burn-in. The top-`k` partial sums of the resulting per-direction rates
//! are the growth rates of `k`-dimensional volumes.

mod covering;
mod index;
mod splitting;

pub(crate) use covering::least_squares;
pub use covering::{covering_bounds, covering_exponent, CoveringReport, COVERING_CELL_BUDGET};
pub use index::{kuratowski_index, random_index_rate, IndexReport, RandomIndexReport};
pub use splitting::{
    block_invariance, composite_spectrum_check, exponent_invariance_check, joint_splitting,
    joint_splitting_with_threshold, projection_growth, projection_norms, unstable_determinant_rate,
    verify_weighted_exponents, CompositeResidual, DeterminantRate, GeneratorExponent, InvarianceResidual,
    JointSplitting, LabeledBlock, WeightedResidual,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_push, Frame};
use crate::systems::{sample_word_stream, CommutingSystem, DynamicalMap};

/// Seed of the initial frame shared by every spectrum run.
pub const FRAME_SEED: u64 = 0x5eed_f4a3;

/// Smallest gap that keeps two exponents apart when grouping.
pub const GROUPING_FLOOR: f64 = 1e-3;

/// Batches used for the single-orbit confidence interval.
const BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Distinct exponents, descending, in nats per iterate.
    pub exponents: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub ci_halfwidth: Vec<f64>,
    pub n_used: usize,
    pub samples: usize,
    /// Exponents at or below this value are dropped. `None` keeps everything.
    pub lambda_alpha_threshold: Option<f64>,
    /// Indices of exponents within two half-widths of the threshold (0 when unset).
    pub unresolved: Vec<usize>,
    /// Per-direction rates before grouping, i.e. exponents repeated with multiplicity.
    pub repeated: Vec<f64>,
}

impl LyapunovSpectrum {
    /// Sum of the top `p` exponents counted with multiplicity.
    pub fn partial_sum(&self, p: usize) -> f64 {
        self.repeated.iter().take(p).sum()
    }

    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    /// Drops exponents at or below `threshold` and records it.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        let keep: Vec<bool> = self.exponents.iter().map(|&l| l > threshold).collect();
        let filter = |v: &mut Vec<f64>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        filter(&mut self.exponents);
        filter(&mut self.ci_halfwidth);
        let mut it = keep.iter();
        self.multiplicities.retain(|_| *it.next().unwrap());
        self.repeated.retain(|&l| l > threshold);
        self.lambda_alpha_threshold = Some(threshold);
        self.unresolved = unresolved(&self.exponents, &self.ci_halfwidth, threshold);
        self
    }
}

fn unresolved(exponents: &[f64], ci: &[f64], threshold: f64) -> Vec<usize> {
    exponents
        .iter()
        .zip(ci)
        .enumerate()
        .filter(|(_, (l, c))| (*l - threshold).abs() <= 2.0 * *c)
        .map(|(i, _)| i)
        .collect()
}

/// Groups per-direction rates into distinct exponents with multiplicities.
///
/// Neighbours closer than `max(GROUPING_FLOOR, 3 * ci)` are merged.
pub(crate) fn group_exponents(rates: &[f64], ci: &[f64], samples: usize, n_used: usize) -> LyapunovSpectrum {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]));

    let mut exponents = Vec::new();
    let mut multiplicities = Vec::new();
    let mut halfwidths = Vec::new();
    let mut members: Vec<usize> = Vec::new();

    let mut flush = |members: &mut Vec<usize>| {
        if members.is_empty() {
            return;
        }
        let mean = members.iter().map(|&i| rates[i]).sum::<f64>() / members.len() as f64;
        let width = members.iter().map(|&i| ci[i]).fold(0.0, f64::max);
        exponents.push(mean);
        multiplicities.push(members.len());
        halfwidths.push(width);
        members.clear();
    };

    for &i in &order {
        if let Some(&last) = members.last() {
            let tol = GROUPING_FLOOR.max(3.0 * ci[last].max(ci[i]));
            if rates[last] - rates[i] >= tol {
                flush(&mut members);
            }
        }
        members.push(i);
    }
    flush(&mut members);

    let repeated = order.iter().map(|&i| rates[i]).collect();
    let unresolved = unresolved(&exponents, &halfwidths, 0.0);
    LyapunovSpectrum {
        exponents,
        multiplicities,
        ci_halfwidth: halfwidths,
        n_used,
        samples,
        lambda_alpha_threshold: None,
        unresolved,
        repeated,
    }
}

/// Per-direction log-growth totals of a frame pushed along an orbit.
struct FrameRun {
    totals: Vec<f64>,
    batch_means: Vec<Vec<f64>>,
}

fn push_frame<'a>(
    generator: impl Fn(usize) -> &'a DynamicalMap,
    x0: &[f64],
    p: usize,
    burn_in: usize,
    n: usize,
) -> Result<FrameRun> {
    let dim = generator(0).dim();
    let mut frame = Frame::random_orthonormal(dim, p, FRAME_SEED)?;
    let mut x = x0.to_vec();
    let mut totals = vec![0.0; p];
    let batch_len = (n / BATCHES).max(1);
    let mut batch = vec![0.0; p];
    let mut batch_means = Vec::new();
    let mut in_batch = 0;

    for step in 0..burn_in + n {
        let map = generator(step);
        let jac = map.jacobian(&x).map_err(|e| Error::Orbit {
            index: step,
            source: Box::new(e),
        })?;
        let (next, logs) = qr_push(&frame, &jac).map_err(|e| e.at_step(step))?;
        frame = next;
        if step >= burn_in {
            for (k, l) in logs.iter().enumerate() {
                totals[k] += l;
                batch[k] += l;
            }
            in_batch += 1;
            if in_batch == batch_len {
                batch_means.push(batch.iter().map(|b| b / batch_len as f64).collect());
                batch.iter_mut().for_each(|b| *b = 0.0);
                in_batch = 0;
            }
        }
        x = map.apply(&x).map_err(|e| Error::Orbit {
            index: step,
            source: Box::new(e),
        })?;
    }
    Ok(FrameRun { totals, batch_means })
}

fn check_sizes(dim: usize, p: usize, n: usize) -> Result<()> {
    if p == 0 || p > dim {
        return Err(Error::invalid(format!("frame size p = {p} must lie in 1..={dim}")));
    }
    if n < 100 {
        return Err(Error::invalid(format!("orbit length n = {n} must be at least 100")));
    }
    Ok(())
}

/// Default burn-in: a tenth of the averaging window.
pub fn default_burn_in(n: usize) -> usize {
    n / 10
}

/// Sample mean and `2 sd / sqrt(k)` with the unbiased sample variance.
pub(crate) fn mean_and_halfwidth(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, 2.0 * var.sqrt() / k.sqrt())
}

/// Lyapunov spectrum of a single map along the orbit of `x0`.
///
/// The half-widths come from batch means over ten equal blocks of the
/// averaging window.
pub fn lyapunov_spectrum(map: &DynamicalMap, x0: &[f64], p: usize, n: usize, burn_in: usize) -> Result<LyapunovSpectrum> {
    check_sizes(map.dim(), p, n)?;
    let run = push_frame(|_| map, x0, p, burn_in, n)?;
    let rates: Vec<f64> = run.totals.iter().map(|t| t / n as f64).collect();
    let ci: Vec<f64> = (0..p)
        .map(|k| {
            let per_batch: Vec<f64> = run.batch_means.iter().map(|b| b[k]).collect();
            mean_and_halfwidth(&per_batch).1
        })
        .collect();
    Ok(group_exponents(&rates, &ci, 1, n))
}

/// Lyapunov spectrum of the random composition `f(n, w)` averaged over
/// `samples` independent words.
///
/// Sample `s` uses word stream `s` of `seed`; the half-width is
/// `2 * sd / sqrt(samples)`. Samples run in parallel and are reduced in
/// index order.
pub fn random_lyapunov_spectrum(
    system: &CommutingSystem,
    x0: &[f64],
    p: usize,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<LyapunovSpectrum> {
    check_sizes(system.dim(), p, n)?;
    if samples == 0 {
        return Err(Error::invalid("samples must be >= 1"));
    }
    let burn_in = default_burn_in(n);
    let per_sample: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let word = sample_word_stream(system.nu(), burn_in + n, seed, s);
            let run = push_frame(|m| system.generator(word.symbols[m]), x0, p, burn_in, n)?;
            Ok(run.totals.iter().map(|t| t / n as f64).collect())
        })
        .collect::<Result<_>>()?;

    let mut rates = Vec::with_capacity(p);
    let mut ci = Vec::with_capacity(p);
    for k in 0..p {
        let column: Vec<f64> = per_sample.iter().map(|r| r[k]).collect();
        let (m, h) = mean_and_halfwidth(&column);
        rates.push(m);
        ci.push(h);
    }
    Ok(group_exponents(&rates, &ci, samples, n))
}
