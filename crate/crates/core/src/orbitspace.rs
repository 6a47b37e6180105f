//! Orbit space of a pair of expanding circle maps and brute-force Friedland entropy.
//!
//! Candidates for separated sets are the midpoints of the inverse-branch
//! cylinders: every backward path of length `L` from `x_L = 1/2` under the
//! branches `z -> (b + z)/k` gives an orbit segment `x_0, ..., x_L`, and all
//! candidates share the same continuation after time `L`, so the metric
//! below is evaluated without truncation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::least_squares;
use crate::systems::{circle_distance, compose_orbit, CommutingSystem, DynamicalMap, MapKind, PhaseSpace, RandomWord};

/// Limit on `L * K^L`, the work of one separated-set count.
pub const LEAF_BUDGET: u128 = 4_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitPoint {
    /// Symbols `1` or `2`; `word[m]` maps `trajectory[m]` to `trajectory[m + 1]`.
    pub word: Vec<u8>,
    pub trajectory: Vec<Vec<f64>>,
    pub truncation_depth: usize,
    pub space: PhaseSpace,
}

impl OrbitPoint {
    /// Drops the first coordinate: the shift on the orbit space.
    pub fn shift(&self) -> Result<OrbitPoint> {
        if self.word.is_empty() {
            return Err(Error::invalid("cannot shift an orbit point of length 0"));
        }
        Ok(OrbitPoint {
            word: self.word[1..].to_vec(),
            trajectory: self.trajectory[1..].to_vec(),
            truncation_depth: self.truncation_depth.saturating_sub(1),
            space: self.space,
        })
    }
}

/// The factor map `(w, x) -> (f(m, w) x)_m`, truncated to the length of `word`.
pub fn project(system: &CommutingSystem, word: &RandomWord, x0: &[f64]) -> Result<OrbitPoint> {
    Ok(OrbitPoint {
        word: word.symbols.clone(),
        trajectory: compose_orbit(system, word, x0)?,
        truncation_depth: word.len(),
        space: system.f1().phase_space(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarDistance {
    pub value: f64,
    /// Bound on the omitted terms: `diam(K) 2^-depth`.
    pub truncation_error: f64,
}

fn diameter(space: PhaseSpace, dim: usize) -> f64 {
    match space {
        PhaseSpace::Torus => (dim as f64).sqrt() / 2.0,
        PhaseSpace::Ball(r) => 2.0 * r,
    }
}

fn point_distance(space: PhaseSpace, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| match space {
            PhaseSpace::Torus => circle_distance(x, y).powi(2),
            PhaseSpace::Ball(_) => (x - y).powi(2),
        })
        .sum();
    sq.sqrt()
}

/// `sum_{m=0}^{depth} d(x_m, y_m) / 2^m`.
pub fn bar_distance(a: &OrbitPoint, b: &OrbitPoint, depth: usize) -> Result<BarDistance> {
    let available = a.trajectory.len().min(b.trajectory.len());
    if depth >= available {
        return Err(Error::invalid(format!(
            "depth {depth} needs {} coordinates, the orbit points have {available}",
            depth + 1
        )));
    }
    if a.space != b.space || a.trajectory[0].len() != b.trajectory[0].len() {
        return Err(Error::invalid("orbit points live in different phase spaces"));
    }
    let mut value = 0.0;
    let mut scale = 1.0;
    for m in 0..=depth {
        value += scale * point_distance(a.space, &a.trajectory[m], &b.trajectory[m]);
        scale *= 0.5;
    }
    Ok(BarDistance {
        value,
        truncation_error: diameter(a.space, a.trajectory[0].len()) * 0.5f64.powi(depth as i32),
    })
}

fn expanding_factors(generators: &[DynamicalMap]) -> Result<Vec<u32>> {
    if generators.is_empty() || generators.len() > 2 {
        return Err(Error::invalid(format!("expected 1 or 2 generators, got {}", generators.len())));
    }
    generators
        .iter()
        .map(|g| match g.kind() {
            MapKind::CircleExpanding(k) => Ok(*k),
            _ => Err(Error::UnsupportedMap(format!(
                "{} is not an expanding circle map; exact enumeration needs inverse branches",
                g.name()
            ))),
        })
        .collect()
}

/// Number of depth-`n` inverse-branch cylinders, `sum over words of prod k`.
pub fn cylinder_count(generators: &[DynamicalMap], n: usize) -> Result<u128> {
    let ks = expanding_factors(generators)?;
    let g = ks.len() as u128;
    if n > 40 {
        return Err(Error::Resource {
            message: format!("enumerating {g}^{n} words"),
            feasible_n: Some(40),
        });
    }
    let mut total = 0u128;
    for code in 0..g.pow(n as u32) {
        let mut c = code;
        let mut product = 1u128;
        for _ in 0..n {
            product *= ks[(c % g) as usize] as u128;
            c /= g;
        }
        total += product;
    }
    Ok(total)
}

#[derive(Clone, Copy)]
struct Partner {
    z: f64,
    /// `D_t = sum_{j >= 0} d(x_{t+j}, y_{t+j}) / 2^j`.
    d: f64,
    index: u64,
}

struct Search<'a> {
    branches: &'a [(f64, f64)],
    bounds: Vec<f64>,
    /// `marked[t]`: nodes at time `t` with a selected leaf below them.
    marked: Vec<Vec<u64>>,
    count: u64,
    levels: Vec<Vec<Partner>>,
}

impl Search<'_> {
    fn is_marked(&self, t: usize, i: u64) -> bool {
        self.marked[t][(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    fn select(&mut self, leaf: u64) {
        let k = self.branches.len() as u64;
        let mut i = leaf;
        for t in 0..self.marked.len() {
            if self.is_marked(t, i) {
                break;
            }
            self.marked[t][(i / 64) as usize] |= 1 << (i % 64);
            i /= k;
        }
        self.count += 1;
    }

    /// Visits the node at time `t` with position `z`; `levels[t]` holds the
    /// close earlier nodes that have a selected leaf below them.
    fn visit(&mut self, t: usize, z: f64, index: u64) {
        if t == 0 {
            if self.levels[0].is_empty() {
                self.select(index);
            }
            return;
        }
        let k = self.branches.len();
        let child_z: Vec<f64> = self.branches.iter().map(|&(b, f)| (b + z) / f).collect();
        let bound = self.bounds[t - 1];
        let parents = std::mem::take(&mut self.levels[t]);
        for (c, &zc) in child_z.iter().enumerate() {
            let mut out = std::mem::take(&mut self.levels[t - 1]);
            out.clear();
            for p in &parents {
                for (c2, &(b, f)) in self.branches.iter().enumerate() {
                    let z2 = (b + p.z) / f;
                    let d = circle_distance(zc, z2) + 0.5 * p.d;
                    let i = p.index * k as u64 + c2 as u64;
                    if d < bound && self.is_marked(t - 1, i) {
                        out.push(Partner { z: z2, d, index: i });
                    }
                }
            }
            for (c2, &z2) in child_z[..c].iter().enumerate() {
                let d = circle_distance(zc, z2);
                let i = index * k as u64 + c2 as u64;
                if d < bound && self.is_marked(t - 1, i) {
                    out.push(Partner { z: z2, d, index: i });
                }
            }
            self.levels[t - 1] = out;
            self.visit(t - 1, zc, index * k as u64 + c as u64);
        }
        self.levels[t] = parents;
    }
}

fn work(depth: usize, k: usize) -> u128 {
    (depth as u128).saturating_mul((k as u128).saturating_pow(depth as u32))
}

/// Size of a greedy maximal `(n, epsilon)`-separated set of orbit points.
///
/// Candidates are the cylinder midpoints at depth `n + shift_steps`, taken in
/// depth-first order of their backward branch paths; a candidate is kept
/// unless some earlier kept candidate stays within `epsilon` of it under the
/// first `n` iterates of the shift.
pub fn separated_count_generators(generators: &[DynamicalMap], n: usize, epsilon: f64, shift_steps: usize) -> Result<u64> {
    let ks = expanding_factors(generators)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
    }
    if n == 0 {
        return Ok(1);
    }
    let k_total: usize = ks.iter().map(|&k| k as usize).sum();
    let depth = n + shift_steps;
    if work(depth, k_total) > LEAF_BUDGET {
        let feasible_n = (0..n).rev().find(|&m| work(m + shift_steps, k_total) <= LEAF_BUDGET);
        return Err(Error::Resource {
            message: format!("{k_total}^{depth} candidate orbit points"),
            feasible_n,
        });
    }

    let branches: Vec<(f64, f64)> = ks
        .iter()
        .flat_map(|&k| (0..k).map(move |b| (b as f64, k as f64)))
        .collect();
    // Necessary bound on D_t for a pair to stay within epsilon up to time n - 1.
    let bounds = (0..depth)
        .map(|t| if t < n { epsilon } else { epsilon * 2f64.powi((t + 1 - n) as i32) })
        .collect();
    let marked = (0..=depth)
        .map(|t| vec![0; (k_total as u64).pow((depth - t) as u32).div_ceil(64) as usize])
        .collect();
    let mut search = Search {
        branches: &branches,
        bounds,
        marked,
        count: 0,
        levels: vec![Vec::new(); depth + 1],
    };
    search.visit(depth, 0.5, 0);
    Ok(search.count)
}

pub fn separated_count(system: &CommutingSystem, n: usize, epsilon: f64, shift_steps: usize) -> Result<u64> {
    separated_count_generators(&[system.f1().clone(), system.f2().clone()], n, epsilon, shift_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub n: usize,
    pub count: u64,
    pub log_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedlandEstimate {
    pub table: Vec<CountRow>,
    pub slope: f64,
    /// Standard error of the slope; absent with fewer than three fitted points.
    pub stderr: Option<f64>,
    pub formula_value: f64,
    pub epsilon: f64,
    /// Smallest depth with `2^-depth < epsilon / 10`.
    pub depth: usize,
}

impl FriedlandEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,count,log_count\n");
        for r in &self.table {
            s.push_str(&format!("{},{},{}\n", r.n, r.count, r.log_count));
        }
        s
    }
}

/// Least-squares growth rate of separated-set sizes over `n_range`,
/// fitted on its upper half.
pub fn friedland_estimate_generators(
    generators: &[DynamicalMap],
    n_range: std::ops::RangeInclusive<usize>,
    epsilon: f64,
    shift_steps: usize,
) -> Result<FriedlandEstimate> {
    let ks = expanding_factors(generators)?;
    let ns: Vec<usize> = n_range.collect();
    if ns.len() < 4 {
        return Err(Error::invalid("n_range must contain at least 4 values"));
    }
    let table = ns
        .iter()
        .map(|&n| {
            let count = separated_count_generators(generators, n, epsilon, shift_steps)?;
            Ok(CountRow {
                n,
                count,
                log_count: (count as f64).ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let upper = &table[table.len() / 2..];
    let xs: Vec<f64> = upper.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = upper.iter().map(|r| r.log_count).collect();
    let (slope, stderr) = least_squares(&xs, &ys);

    let h: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let formula_value = match h[..] {
        [a] => a,
        [a, b] => crate::entropy::friedland_formula(a, b),
        _ => unreachable!("expanding_factors checks the count"),
    };
    let depth = ((10.0 / epsilon).log2().floor() as usize) + 1;
    Ok(FriedlandEstimate {
        table,
        slope,
        stderr,
        formula_value,
        epsilon,
        depth,
    })
}

pub fn friedland_estimate(
    system: &CommutingSystem,
    n_range: std::ops::RangeInclusive<usize>,
    epsilon: f64,
    shift_steps: usize,
) -> Result<FriedlandEstimate> {
    friedland_estimate_generators(&[system.f1().clone(), system.f2().clone()], n_range, epsilon, shift_steps)
}
