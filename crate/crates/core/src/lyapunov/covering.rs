//! Lattice covering numbers of tangent images of the unit ball.
//!
//! Cells have side `s = e^{-m beta}` and are centred on `s Z^d`. The count at
//! time `m` is the number of cells meeting the ellipsoid `D f^m (B)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::splitting::GeneratorExponent;
use crate::error::{Error, Result};
use crate::systems::DynamicalMap;

/// Largest number of columns (2-d) or cells (3-d) scanned for one count.
pub const COVERING_CELL_BUDGET: u64 = 10_000_000;

/// Counts above this no longer fit an `f64` mantissa.
const EXACT_LIMIT: f64 = 9.0e15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    /// `(m, cells)` at the evaluated times.
    pub counts: Vec<(usize, u64)>,
    /// `(1/n) log count` at the largest evaluated time.
    pub rate_at_max: f64,
    /// Least-squares slope of `log count` over the upper half of the evaluated times.
    pub slope: f64,
    pub n_max: usize,
}

/// `(sum (lambda + beta)^+ d, sum (lambda + beta)^+ m)`.
pub fn covering_bounds(exponents: &[GeneratorExponent], beta: f64) -> (f64, f64) {
    exponents.iter().fold((0.0, 0.0), |(lo, hi), e| {
        let p = (e.lambda + beta).max(0.0);
        (lo + p * e.d as f64, hi + p * e.m as f64)
    })
}

/// Work (columns or cells) a count at this cell side would scan.
fn work(c: &DMatrix<f64>, side: f64) -> f64 {
    let d = c.nrows();
    let per_axis = |i: usize| 2.0 * (c[(i, i)].sqrt() / side + 0.5).floor() + 1.0;
    match d {
        1 => 1.0,
        2 => per_axis(0),
        _ => (0..d).map(per_axis).product(),
    }
}

fn count_1d(a: f64, side: f64) -> f64 {
    2.0 * (a.abs() / side + 0.5).floor() + 1.0
}

/// Exact strip scan of the ellipse `{y : y^T C^{-1} y <= 1}`.
fn count_2d(c: &DMatrix<f64>, side: f64) -> f64 {
    let (c11, c12, c22) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
    let hx = c11.sqrt();
    let slope = c12 / c11;
    let schur = (c22 - c12 * c12 / c11).max(0.0);
    // Upper boundary of the ellipse, concave in x, maximal at x_top.
    let upper = |x: f64| slope * x + (schur * (1.0 - x * x / c11).max(0.0)).sqrt();
    let x_top = c12 / c22.sqrt();

    let reach = (hx / side + 0.5).floor() as i64;
    let mut total = 0.0;
    for j in -reach..=reach {
        let a = ((j as f64 - 0.5) * side).max(-hx);
        let b = ((j as f64 + 0.5) * side).min(hx);
        if a > b {
            continue;
        }
        let y_hi = upper(x_top.clamp(a, b));
        let y_lo = -upper(x_top.clamp(-b, -a));
        let k_min = (y_lo / side - 0.5).ceil();
        let k_max = (y_hi / side + 0.5).floor();
        if k_max >= k_min {
            total += k_max - k_min + 1.0;
        }
    }
    total
}

/// Minimum of `y^T G y` over the box `[lo, hi]`, by enumerating active sets.
fn box_min_quadratic(g: &DMatrix<f64>, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for pattern in 0..27u32 {
        // 0: at the lower face, 1: free, 2: at the upper face.
        let state = [pattern % 3, (pattern / 3) % 3, pattern / 9];
        let free: Vec<usize> = (0..3).filter(|&i| state[i] == 1).collect();
        let mut y = DVector::zeros(3);
        for i in 0..3 {
            match state[i] {
                0 => y[i] = lo[i],
                2 => y[i] = hi[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let gff = DMatrix::from_fn(k, k, |r, c| g[(free[r], free[c])]);
            let rhs = DVector::from_fn(k, |r, _| -(0..3).filter(|i| state[*i] != 1).map(|i| g[(free[r], i)] * y[i]).sum::<f64>());
            let Some(sol) = gff.lu().solve(&rhs) else { continue };
            let mut inside = true;
            for (r, &i) in free.iter().enumerate() {
                if sol[r] < lo[i] || sol[r] > hi[i] {
                    inside = false;
                }
                y[i] = sol[r];
            }
            if !inside {
                continue;
            }
        }
        best = best.min(y.dot(&(g * &y)));
    }
    best
}

fn count_3d(c: &DMatrix<f64>, side: f64) -> Result<f64> {
    let g = c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidState("tangent image of the ball is degenerate".into()))?;
    let reach: Vec<i64> = (0..3).map(|i| (c[(i, i)].sqrt() / side + 0.5).floor() as i64).collect();
    let mut total = 0.0;
    for i in -reach[0]..=reach[0] {
        for j in -reach[1]..=reach[1] {
            for k in -reach[2]..=reach[2] {
                let centre = [i as f64 * side, j as f64 * side, k as f64 * side];
                let lo = centre.map(|v| v - 0.5 * side);
                let hi = centre.map(|v| v + 0.5 * side);
                if box_min_quadratic(&g, &lo, &hi) <= 1.0 {
                    total += 1.0;
                }
            }
        }
    }
    Ok(total)
}

/// Evenly spaced times in `[1, n]`, at most `grid` of them.
fn fit_times(n: usize, grid: usize) -> Vec<usize> {
    let mut times: Vec<usize> = (0..grid)
        .map(|i| 1 + ((i as f64) * (n - 1) as f64 / (grid - 1) as f64).round() as usize)
        .collect();
    times.dedup();
    times
}

/// Least-squares slope of `y` against `x` and its standard error, which needs three points.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, Option<f64>) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (x.len() > 2).then(|| (sse / (k - 2.0) / sxx).sqrt());
    (slope, stderr)
}

/// Growth rate of lattice covering numbers of `D_x f^m (unit ball)` at scale `e^{-m beta}`.
///
/// `grid` evenly spaced times in `[1, n]` are evaluated; the slope is
/// fitted over the upper half of them.
pub fn covering_exponent(map: &DynamicalMap, x0: &[f64], beta: f64, n: usize, grid: usize) -> Result<CoveringReport> {
    let dim = map.dim();
    if dim > 3 {
        return Err(Error::UnsupportedMap(format!(
            "lattice covering supports dimension <= 3, {} has {dim}",
            map.name()
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta = {beta} must be positive")));
    }
    if n < 2 || grid < 2 {
        return Err(Error::invalid("n and grid must both be >= 2"));
    }

    // Derivative cocycle along the orbit, and the covariance C = M M^T per time.
    let mut x = x0.to_vec();
    let mut m = DMatrix::identity(dim, dim);
    let mut cov = Vec::with_capacity(n + 1);
    cov.push(DMatrix::identity(dim, dim));
    for _ in 0..n {
        m = map.jacobian(&x)? * m;
        x = map.apply(&x)?;
        cov.push(&m * m.transpose());
    }

    let side = |t: usize| (-(t as f64) * beta).exp();
    let feasible = |t: usize| {
        let w = work(&cov[t], side(t));
        w <= COVERING_CELL_BUDGET as f64 && w.is_finite()
    };
    let times = fit_times(n, grid);
    if let Some(&bad) = times.iter().find(|&&t| !feasible(t)) {
        let feasible_n = (1..bad).rev().find(|&t| feasible(t));
        return Err(Error::Resource {
            message: format!("covering at n = {bad} needs more than {COVERING_CELL_BUDGET} cells"),
            feasible_n,
        });
    }

    let mut counts = Vec::with_capacity(times.len());
    for &t in &times {
        let s = side(t);
        let c = match dim {
            1 => count_1d(m_entry(&cov[t]), s),
            2 => count_2d(&cov[t], s),
            _ => count_3d(&cov[t], s)?,
        };
        if c > EXACT_LIMIT {
            return Err(Error::Resource {
                message: format!("covering count at n = {t} exceeds exact integer range"),
                feasible_n: None,
            });
        }
        counts.push((t, c as u64));
    }

    let half = counts.len() / 2;
    let upper = &counts[half.min(counts.len() - 2)..];
    let xs: Vec<f64> = upper.iter().map(|c| c.0 as f64).collect();
    let ys: Vec<f64> = upper.iter().map(|c| (c.1 as f64).ln()).collect();
    let (slope, _) = least_squares(&xs, &ys);
    let (n_max, last) = *counts.last().unwrap();
    Ok(CoveringReport {
        counts,
        rate_at_max: (last as f64).ln() / n_max as f64,
        slope,
        n_max,
    })
}

/// `|a|` recovered from the 1x1 covariance `a^2`.
fn m_entry(c: &DMatrix<f64>) -> f64 {
    c[(0, 0)].sqrt()
}
