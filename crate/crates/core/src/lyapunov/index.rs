//! Upper estimates of the Kuratowski index of truncated operators.
//!
//! For a truncation `T` with declared tail bound `t`, `||(I - P_N) T||_2 + t`
//! bounds the index for every `N`; the reported estimate is the infimum over
//! the requested `N`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::systems::{CommutingSystem, DynamicalMap, MapKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// `(N, ||(I - P_N) T|| + tail)` per requested truncation.
    pub per_dim: Vec<(usize, f64)>,
    pub estimate: f64,
}

fn operator_parts(map: &DynamicalMap) -> Result<(&DMatrix<f64>, f64)> {
    match map.kind() {
        MapKind::TruncatedOperator { matrix, tail_norm_bound, .. } => {
            let tail = tail_norm_bound
                .ok_or_else(|| Error::invalid(format!("{} declares no tail-norm bound", map.name())))?;
            Ok((matrix, tail))
        }
        _ => Err(Error::UnsupportedMap(format!("{} is not a truncated operator", map.name()))),
    }
}

fn check_dims(dims: &[usize], d: usize) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::invalid("truncation_dims is empty"));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("truncation_dims must be strictly ascending"));
    }
    if dims[dims.len() - 1] > d {
        return Err(Error::invalid(format!("truncation dim exceeds operator dimension {d}")));
    }
    Ok(())
}

/// Norm of the rows of `m` below the first `n`.
fn tail_rows_norm(m: &DMatrix<f64>, n: usize) -> f64 {
    let d = m.nrows();
    if n >= d {
        0.0
    } else {
        norm2(&m.rows(n, d - n).into_owned())
    }
}

pub fn kuratowski_index(map: &DynamicalMap, truncation_dims: &[usize]) -> Result<IndexReport> {
    let (t, tail) = operator_parts(map)?;
    check_dims(truncation_dims, t.nrows())?;
    let per_dim: Vec<(usize, f64)> = truncation_dims.iter().map(|&n| (n, tail_rows_norm(t, n) + tail)).collect();
    let estimate = per_dim.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(IndexReport { per_dim, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomIndexReport {
    /// `E[(1/n) log ||f(n, w)||_alpha]` over the binomial law of symbol counts.
    pub expected_rate: f64,
    /// `nu1 log ||T1||_alpha + nu2 log ||T2||_alpha`.
    pub weighted_generator_bound: f64,
    /// `(count of f1, rate)` for every count `0..=n`.
    pub per_count: Vec<(usize, f64)>,
}

fn ln_binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum();
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - p).ln() };
    ln_choose + a + b
}

/// `ln(e^a + e^b)` tolerating infinite arguments.
fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `(log-scale, normalized matrix)` for `a^k`.
fn scaled_power(a: &DMatrix<f64>, k: usize) -> (f64, DMatrix<f64>) {
    let mut m = DMatrix::identity(a.nrows(), a.ncols());
    let mut log_scale = 0.0;
    for _ in 0..k {
        m = a * m;
        let s = m.amax();
        if s > 0.0 {
            log_scale += s.ln();
            m /= s;
        }
    }
    (log_scale, m)
}

/// Exact expectation of the index rate of the random composition at time `n`.
///
/// The generators commute, so `f(n, w) = T1^a T2^b` with `a` binomially
/// distributed. The discarded block of the product is bounded by
/// `t1^a t2^b`, which holds when the truncation decouples the tails (for
/// example for diagonal operators).
pub fn random_index_rate(system: &CommutingSystem, truncation_dims: &[usize], n: usize) -> Result<RandomIndexReport> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let (t1, tail1) = operator_parts(system.f1())?;
    let (t2, tail2) = operator_parts(system.f2())?;
    check_dims(truncation_dims, t1.nrows())?;
    let nu = system.nu();

    let g1 = kuratowski_index(system.f1(), truncation_dims)?.estimate.ln();
    let g2 = kuratowski_index(system.f2(), truncation_dims)?.estimate.ln();
    let weighted_generator_bound = weighted(nu.get(0), g1) + weighted(nu.get(1), g2);

    let mut per_count = Vec::with_capacity(n + 1);
    let mut expected_rate = 0.0;
    for a in 0..=n {
        let b = n - a;
        let (s1, p1) = scaled_power(t1, a);
        let (s2, p2) = scaled_power(t2, b);
        let product = p1 * p2;
        let log_tail = weighted(a as f64, tail1.ln()) + weighted(b as f64, tail2.ln());
        let best = truncation_dims
            .iter()
            .map(|&dim| ln_add(s1 + s2 + tail_rows_norm(&product, dim).ln(), log_tail))
            .fold(f64::INFINITY, f64::min);
        let rate = best / n as f64;
        per_count.push((a, rate));
        let ln_p = ln_binomial_pmf(n, a, nu.get(0));
        if ln_p > f64::NEG_INFINITY {
            expected_rate += ln_p.exp() * rate;
        }
    }
    Ok(RandomIndexReport {
        expected_rate,
        weighted_generator_bound,
        per_count,
    })
}

/// `w * x` with `0 * (-inf) = 0`.
fn weighted(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::Weights;
    use nalgebra::DVector;

    fn diag_op(name: &str, f: impl Fn(usize) -> f64, tail: f64) -> DynamicalMap {
        let d = DVector::from_fn(64, |i, _| f(i + 1));
        DynamicalMap::truncated_operator(name, DMatrix::from_diagonal(&d), Some(tail), 10.0).unwrap()
    }

    #[test]
    fn compact_diagonal_decreases() {
        let m = diag_op("d", |k| 1.0 / k as f64, 1.0 / 65.0);
        let dims: Vec<usize> = (1..=64).collect();
        let r = kuratowski_index(&m, &dims).unwrap();
        assert!(r.per_dim.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(r.estimate <= 1.0 / 65.0 + 1e-15);
        // Explicit tail-block oracle: the largest remaining diagonal entry.
        for &(n, v) in &r.per_dim {
            let expected = if n < 64 { 1.0 / (n + 1) as f64 } else { 0.0 } + 1.0 / 65.0;
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_is_not_compact() {
        let m = diag_op("id", |_| 1.0, 0.25);
        let r = kuratowski_index(&m, &[1, 8, 32, 63]).unwrap();
        assert!((r.estimate - 1.25).abs() < 1e-14);
    }

    #[test]
    fn missing_tail_and_bad_dims() {
        let m = DynamicalMap::truncated_operator("t", DMatrix::identity(3, 3), None, 1.0).unwrap();
        assert!(matches!(kuratowski_index(&m, &[1]), Err(Error::InvalidInput(_))));
        let m = diag_op("d", |k| 1.0 / k as f64, 0.0);
        assert!(kuratowski_index(&m, &[3, 2]).is_err());
        assert!(kuratowski_index(&m, &[65]).is_err());
        let x2 = DynamicalMap::circle_expanding("x2", 2).unwrap();
        assert!(matches!(kuratowski_index(&x2, &[1]), Err(Error::UnsupportedMap(_))));
    }

    #[test]
    fn random_rate_on_compact_pair() {
        let sys = CommutingSystem::new(
            diag_op("a", |k| 1.0 / k as f64, 1.0 / 65.0),
            diag_op("b", |k| 1.0 / (k * k) as f64, 1.0 / 65f64.powi(2)),
            Weights::uniform(),
        )
        .unwrap();
        let r = random_index_rate(&sys, &[8, 32, 64], 20).unwrap();
        assert!(r.expected_rate <= r.weighted_generator_bound + 1e-9);
        assert!((r.weighted_generator_bound + 1.5 * 65f64.ln()).abs() < 1e-12);
        assert_eq!(r.per_count.len(), 21);
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        let total: f64 = (0..=30).map(|k| ln_binomial_pmf(30, k, 0.3).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(ln_binomial_pmf(5, 5, 1.0), 0.0);
        assert_eq!(ln_binomial_pmf(5, 0, 1.0), f64::NEG_INFINITY);
    }
}
