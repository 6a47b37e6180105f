//! Joint splittings of commuting constant cocycles and the identities they satisfy.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, gram_volume, norm2, principal_angles, qr_push, Frame, Subspace};
use crate::systems::{sample_word_stream, CommutingSystem, DynamicalMap, MapKind, COMMUTATION_TOLERANCE};

/// Eigenvalues whose log-moduli differ by less than this share a spectral group.
const MODULUS_GROUPING: f64 = 1e-6;

/// Pass slack on Monte Carlo residuals, so zero-spread estimates can pass.
const NUMERICAL_FLOOR: f64 = 1e-9;

const INVARIANCE_SEED: u64 = 0x1a7a;

/// A piece of the joint splitting with its exponent pair under (f1, f2).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBlock {
    pub subspace: Subspace,
    pub pair: (f64, f64),
}

impl LabeledBlock {
    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }

    /// `nu1 * lambda1 + nu2 * lambda2`.
    pub fn weighted(&self, nu: [f64; 2]) -> f64 {
        nu[0] * self.pair.0 + nu[1] * self.pair.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSplitting {
    /// Both labels above the threshold.
    pub blocks: Vec<LabeledBlock>,
    /// Expanding for f1 only.
    pub defect_blocks_f1: Vec<LabeledBlock>,
    /// Expanding for f2 only.
    pub defect_blocks_f2: Vec<LabeledBlock>,
    /// Span of the pieces with both labels at or below the threshold.
    pub alpha_block: Option<Subspace>,
    /// The labeled pieces that make up `alpha_block`.
    pub alpha_parts: Vec<LabeledBlock>,
    pub lambda_alpha: f64,
    pub dim: usize,
}

/// Exponent of one generator with its multiplicity `m` and defect-corrected dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorExponent {
    pub lambda: f64,
    pub m: usize,
    pub d: usize,
}

impl JointSplitting {
    /// Joint blocks followed by both defect lists.
    pub fn labeled(&self) -> impl Iterator<Item = &LabeledBlock> {
        self.blocks.iter().chain(&self.defect_blocks_f1).chain(&self.defect_blocks_f2)
    }

    /// Every piece, including those merged into the alpha block.
    pub fn pieces(&self) -> impl Iterator<Item = &LabeledBlock> {
        self.labeled().chain(&self.alpha_parts)
    }

    pub fn alpha_dim(&self) -> usize {
        self.alpha_block.as_ref().map_or(0, Subspace::dim)
    }

    /// Exponents of generator `i` (0 or 1) above the threshold, descending.
    pub fn generator_exponents(&self, i: usize) -> Vec<GeneratorExponent> {
        let label = |b: &LabeledBlock| if i == 0 { b.pair.0 } else { b.pair.1 };
        let defects = if i == 0 { &self.defect_blocks_f1 } else { &self.defect_blocks_f2 };
        let mut out: Vec<GeneratorExponent> = Vec::new();
        let mut add = |lambda: f64, dim: usize, defect: bool| {
            let slot = match out.iter_mut().find(|e| (e.lambda - lambda).abs() < MODULUS_GROUPING) {
                Some(e) => e,
                None => {
                    out.push(GeneratorExponent { lambda, m: 0, d: 0 });
                    out.last_mut().unwrap()
                }
            };
            slot.m += dim;
            if !defect {
                slot.d += dim;
            }
        };
        for b in &self.blocks {
            add(label(b), b.dim(), false);
        }
        for b in defects {
            add(label(b), b.dim(), true);
        }
        out.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
        out
    }

    /// Span of the pieces on which generator `i` expands.
    pub fn unstable_subspace(&self, i: usize) -> Result<Option<Subspace>> {
        let parts: Vec<&LabeledBlock> = self
            .pieces()
            .filter(|b| if i == 0 { b.pair.0 > 0.0 } else { b.pair.1 > 0.0 })
            .collect();
        span_of(&parts, self.dim, &format!("Eu(f{})", i + 1))
    }

    /// Largest principal angle between the unstable subspaces of f1 and f2.
    ///
    /// `pi/2` when their dimensions differ or only one is non-trivial.
    pub fn h3_angle(&self) -> Result<f64> {
        match (self.unstable_subspace(0)?, self.unstable_subspace(1)?) {
            (None, None) => Ok(0.0),
            (Some(u), Some(v)) if u.dim() == v.dim() => {
                Ok(principal_angles(&u, &v)?.into_iter().fold(0.0, f64::max))
            }
            _ => Ok(std::f64::consts::FRAC_PI_2),
        }
    }
}

fn span_of(parts: &[&LabeledBlock], dim: usize, label: &str) -> Result<Option<Subspace>> {
    if parts.is_empty() {
        return Ok(None);
    }
    let cols: usize = parts.iter().map(|b| b.dim()).sum();
    let mut m = DMatrix::zeros(dim, cols);
    let mut at = 0;
    for b in parts {
        let q = b.subspace.basis().matrix();
        m.columns_mut(at, q.ncols()).copy_from(q);
        at += q.ncols();
    }
    Ok(Some(Subspace::span(&Frame::from_matrix(m)?, label)?))
}

fn linear_jacobian(map: &DynamicalMap) -> Result<DMatrix<f64>> {
    match map.kind() {
        MapKind::Custom { .. } => Err(Error::UnsupportedMap(format!(
            "{} has a point-dependent derivative; joint splittings need constant cocycles",
            map.name()
        ))),
        _ => Ok(map.constant_jacobian().expect("non-custom maps have constant jacobians")),
    }
}

/// Spectral subspaces of `a` grouped by eigenvalue modulus, largest first.
///
/// Each group's basis is the null space of the product of `(a - mu I)` over
/// its eigenvalues, i.e. the real generalized eigenspace.
fn modulus_groups(a: &DMatrix<f64>) -> Result<Vec<(f64, DMatrix<f64>)>> {
    let k = a.nrows();
    let mut eig = eigenvalues(a)?;
    eig.sort_by(|x, y| y.norm().total_cmp(&x.norm()));

    let mut groups: Vec<Vec<Complex<f64>>> = Vec::new();
    for mu in eig {
        match groups.last_mut() {
            Some(g) if (g[0].norm().ln() - mu.norm().ln()).abs() < MODULUS_GROUPING => g.push(mu),
            _ => groups.push(vec![mu]),
        }
    }

    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    Ok(groups
        .into_iter()
        .map(|g| {
            let log_mod = g.iter().map(|mu| mu.norm().ln()).sum::<f64>() / g.len() as f64;
            if g.len() == k {
                return (log_mod, DMatrix::identity(k, k));
            }
            let mut poly = DMatrix::<Complex<f64>>::identity(k, k);
            for mu in &g {
                let shifted = &ac - DMatrix::<Complex<f64>>::identity(k, k) * *mu;
                poly = shifted * poly;
            }
            let real = poly.map(|c| c.re);
            (log_mod, null_space(&real, g.len()))
        })
        .collect())
}

/// Right singular vectors of the `count` smallest singular values.
fn null_space(m: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let k = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    DMatrix::from_fn(k, count, |r, c| v_t[(order[c], r)])
}

/// Joint splitting with the threshold `lambda_alpha = 0`.
pub fn joint_splitting(f1: &DynamicalMap, f2: &DynamicalMap) -> Result<JointSplitting> {
    joint_splitting_with_threshold(f1, f2, 0.0)
}

/// Common refinement of the spectral splittings of two commuting linear maps.
///
/// Each modulus group of `A1` is invariant under `A2`; it is split again by
/// the modulus groups of the restriction of `A2`. Pieces are sorted into
/// joint blocks, the two defect lists and the alpha block by comparing both
/// labels with `lambda_alpha`.
pub fn joint_splitting_with_threshold(f1: &DynamicalMap, f2: &DynamicalMap, lambda_alpha: f64) -> Result<JointSplitting> {
    if f1.dim() != f2.dim() {
        return Err(Error::invalid(format!("generators have dimensions {} and {}", f1.dim(), f2.dim())));
    }
    let a1 = linear_jacobian(f1)?;
    let a2 = linear_jacobian(f2)?;
    let commutator = (&a1 * &a2 - &a2 * &a1).amax();
    if commutator > COMMUTATION_TOLERANCE {
        return Err(Error::invalid(format!(
            "{} and {} do not commute: residual {commutator:e}",
            f1.name(),
            f2.name()
        )));
    }
    let dim = f1.dim();

    let mut split = JointSplitting {
        blocks: Vec::new(),
        defect_blocks_f1: Vec::new(),
        defect_blocks_f2: Vec::new(),
        alpha_block: None,
        alpha_parts: Vec::new(),
        lambda_alpha,
        dim,
    };

    for (l1, q) in modulus_groups(&a1)? {
        let restricted = q.transpose() * &a2 * &q;
        for (l2, w) in modulus_groups(&restricted)? {
            let basis = &q * w;
            let label = format!("E({l1:.6},{l2:.6})");
            let block = LabeledBlock {
                subspace: Subspace::span(&Frame::from_matrix(basis)?, label)?,
                pair: (l1, l2),
            };
            match (l1 > lambda_alpha, l2 > lambda_alpha) {
                (true, true) => split.blocks.push(block),
                (true, false) => split.defect_blocks_f1.push(block),
                (false, true) => split.defect_blocks_f2.push(block),
                (false, false) => split.alpha_parts.push(block),
            }
        }
    }
    let parts: Vec<&LabeledBlock> = split.alpha_parts.iter().collect();
    split.alpha_block = span_of(&parts, dim, "E_alpha")?;
    Ok(split)
}

fn check_linear_system(system: &CommutingSystem) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((linear_jacobian(system.f1())?, linear_jacobian(system.f2())?))
}

fn restrict(a: &DMatrix<f64>, block: &LabeledBlock) -> DMatrix<f64> {
    let q = block.subspace.basis().matrix();
    q.transpose() * a * q
}

/// Largest principal angle between a block and its image, over all pieces and both generators.
pub fn block_invariance(system: &CommutingSystem, splitting: &JointSplitting) -> Result<f64> {
    let (a1, a2) = check_linear_system(system)?;
    let mut worst: f64 = 0.0;
    for block in splitting.pieces() {
        for a in [&a1, &a2] {
            let image = Subspace::span(&Frame::from_matrix(a * block.subspace.basis().matrix())?, "image")?;
            let angle = principal_angles(&image, &block.subspace)?.into_iter().fold(0.0, f64::max);
            worst = worst.max(angle);
        }
    }
    Ok(worst)
}

/// Operator norms of the projections onto each piece along the others,
/// in the order of [`JointSplitting::pieces`].
pub fn projection_norms(splitting: &JointSplitting) -> Result<Vec<f64>> {
    let pieces: Vec<&LabeledBlock> = splitting.pieces().collect();
    let dim = splitting.dim;
    let mut v = DMatrix::zeros(dim, dim);
    let mut ranges = Vec::new();
    let mut at = 0;
    for b in &pieces {
        let q = b.subspace.basis().matrix();
        v.columns_mut(at, q.ncols()).copy_from(q);
        ranges.push((at, q.ncols()));
        at += q.ncols();
    }
    if at != dim {
        return Err(Error::InvalidState(format!("pieces span {at} of {dim} dimensions")));
    }
    let inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidState("splitting pieces are linearly dependent".into()))?;
    Ok(ranges
        .into_iter()
        .map(|(start, len)| norm2(&(v.columns(start, len) * inv.rows(start, len))))
        .collect())
}

/// Per-step log-growth of the projection norms along `n` iterates of each generator.
///
/// A constant cocycle has the same splitting at every point, so the norms
/// are evaluated from that one splitting at both ends of the orbit.
pub fn projection_growth(system: &CommutingSystem, splitting: &JointSplitting, n: usize) -> Result<Vec<f64>> {
    check_linear_system(system)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let start = projection_norms(splitting)?;
    let end = projection_norms(splitting)?;
    Ok(start.iter().zip(&end).map(|(a, b)| (b.ln() - a.ln()) / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeResidual {
    pub label: String,
    pub pair: (f64, f64),
    pub s: (u32, u32),
    pub measured: f64,
    pub target: f64,
    pub residual: f64,
}

fn matrix_power(a: &DMatrix<f64>, s: u32) -> DMatrix<f64> {
    let mut m = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..s {
        m = a * m;
    }
    m
}

/// Growth rate of `b^n e1`, renormalized at every step.
fn vector_growth(b: &DMatrix<f64>, n: usize) -> f64 {
    let mut w = DVector::zeros(b.nrows());
    w[0] = 1.0;
    let mut acc = 0.0;
    for _ in 0..n {
        w = b * w;
        let r = w.norm();
        acc += r.ln();
        w /= r;
    }
    acc / n as f64
}

/// Growth rate of `(f1^s1 f2^s2)^n` on every piece of the splitting against `s1 l1 + s2 l2`.
pub fn composite_spectrum_check(
    system: &CommutingSystem,
    splitting: &JointSplitting,
    s1: u32,
    s2: u32,
    n: usize,
) -> Result<Vec<CompositeResidual>> {
    if s1 == 0 && s2 == 0 {
        return Err(Error::invalid("s1 and s2 cannot both be 0"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let (a1, a2) = check_linear_system(system)?;
    let m = matrix_power(&a1, s1) * matrix_power(&a2, s2);
    Ok(splitting
        .pieces()
        .map(|block| {
            let measured = vector_growth(&restrict(&m, block), n);
            let target = s1 as f64 * block.pair.0 + s2 as f64 * block.pair.1;
            CompositeResidual {
                label: block.subspace.label.clone(),
                pair: block.pair,
                s: (s1, s2),
                measured,
                target,
                residual: (measured - target).abs(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedResidual {
    pub label: String,
    pub pair: (f64, f64),
    pub target: f64,
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub residual: f64,
    pub pass: bool,
}

/// `(1/n) log ||B_w||` for the product of restricted generators along a word.
fn restricted_product_rate(b: [&DMatrix<f64>; 2], symbols: &[u8]) -> f64 {
    let k = b[0].nrows();
    let mut p = DMatrix::identity(k, k);
    let mut log_scale = 0.0;
    for &s in symbols {
        p = b[(s - 1) as usize] * p;
        let m = p.amax();
        log_scale += m.ln();
        p /= m;
    }
    (log_scale + norm2(&p).ln()) / symbols.len() as f64
}

fn check_mc(n: usize, samples: usize) -> Result<()> {
    if n == 0 || samples == 0 {
        return Err(Error::invalid("n and samples must be >= 1"));
    }
    Ok(())
}

/// Monte Carlo growth rate of the random product on every piece of the splitting
/// against `nu1 l1 + nu2 l2`.
///
/// Sample `s` uses word stream `s` of `seed`. A block passes when the
/// residual is within the half-width `2 sd / sqrt(samples)`.
pub fn verify_weighted_exponents(
    system: &CommutingSystem,
    splitting: &JointSplitting,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<WeightedResidual>> {
    check_mc(n, samples)?;
    let (a1, a2) = check_linear_system(system)?;
    let nu = system.nu();
    Ok(splitting
        .pieces()
        .map(|block| {
            let b1 = restrict(&a1, block);
            let b2 = restrict(&a2, block);
            let rates: Vec<f64> = (0..samples as u64)
                .into_par_iter()
                .map(|s| restricted_product_rate([&b1, &b2], &sample_word_stream(nu, n, seed, s).symbols))
                .collect();
            let (estimate, ci) = super::mean_and_halfwidth(&rates);
            let target = block.weighted(nu.as_array());
            let residual = estimate - target;
            WeightedResidual {
                label: block.subspace.label.clone(),
                pair: block.pair,
                target,
                estimate,
                ci_halfwidth: ci,
                residual,
                pass: residual.abs() <= ci + NUMERICAL_FLOOR,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminantRate {
    pub rate: f64,
    pub ci_halfwidth: f64,
    /// Defect-corrected sum over both generators.
    pub lower: f64,
    /// Sum with full multiplicities.
    pub upper: f64,
    pub unstable_dim: usize,
}

impl DeterminantRate {
    pub fn within_bounds(&self) -> bool {
        let slack = self.ci_halfwidth + NUMERICAL_FLOOR;
        self.rate >= self.lower - slack && self.rate <= self.upper + slack
    }
}

/// Monte Carlo average of the log volume change of the unstable subspace
/// under one random step.
///
/// The unstable subspace is the span of the labeled blocks whose weighted
/// exponent is positive; it does not depend on the word.
pub fn unstable_determinant_rate(
    system: &CommutingSystem,
    splitting: &JointSplitting,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<DeterminantRate> {
    check_mc(n, samples)?;
    let (a1, a2) = check_linear_system(system)?;
    let nu = system.nu();
    let nu_arr = nu.as_array();

    let mut lower = 0.0;
    let mut upper = 0.0;
    for (i, w) in nu_arr.iter().enumerate() {
        for e in splitting.generator_exponents(i).into_iter().filter(|e| e.lambda > 0.0) {
            lower += w * e.lambda * e.d as f64;
            upper += w * e.lambda * e.m as f64;
        }
    }

    let parts: Vec<&LabeledBlock> = splitting
        .labeled()
        .filter(|b| b.weighted(nu_arr) > MODULUS_GROUPING)
        .collect();
    let Some(eu) = span_of(&parts, splitting.dim, "Eu")? else {
        return Ok(DeterminantRate {
            rate: 0.0,
            ci_halfwidth: 0.0,
            lower,
            upper,
            unstable_dim: 0,
        });
    };

    let rates: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let word = sample_word_stream(nu, n, seed, s);
            let mut frame = eu.basis().clone();
            let mut acc = 0.0;
            for &sym in &word.symbols {
                let a = if sym == 1 { &a1 } else { &a2 };
                let before = gram_volume(&frame)?;
                let after = gram_volume(&Frame::from_matrix(a * frame.matrix())?)?;
                acc += (after / before).ln();
                frame = qr_push(&frame, a)?.0;
            }
            Ok(acc / n as f64)
        })
        .collect::<Result<_>>()?;
    let (rate, ci) = super::mean_and_halfwidth(&rates);
    Ok(DeterminantRate {
        rate,
        ci_halfwidth: ci,
        lower,
        upper,
        unstable_dim: eu.dim(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceResidual {
    /// Generator pushed through first.
    pub i: u8,
    /// Generator whose exponent is measured.
    pub j: u8,
    pub max_residual: f64,
}

/// Finite-n growth rate of `v` along the orbit of `x` under `map`, after a tenth-of-n burn-in.
///
/// A constant derivative does not depend on the orbit, so the point is not
/// moved; truncated operators would otherwise leave their ball.
fn finite_exponent(map: &DynamicalMap, x: &[f64], v: &DVector<f64>, n: usize) -> Result<f64> {
    let constant = map.constant_jacobian();
    let mut x = x.to_vec();
    let mut w = v / v.norm();
    let burn = n / 10;
    let mut acc = 0.0;
    for step in 0..burn + n {
        w = match &constant {
            Some(a) => a * w,
            None => map.jacobian(&x)? * w,
        };
        let r = w.norm();
        if step >= burn {
            acc += r.ln();
        }
        w /= r;
        if constant.is_none() {
            x = map.apply(&x)?;
        }
    }
    Ok(acc / n as f64)
}

/// Compares the exponent of `v` at `x` under `f_j` with that of `d f_i(x) v` at `f_i(x)`.
pub fn exponent_invariance_check(system: &CommutingSystem, n: usize, sample_points: usize) -> Result<Vec<InvarianceResidual>> {
    for f in [system.f1(), system.f2()] {
        if matches!(f.kind(), MapKind::Custom { .. }) {
            return Err(Error::UnsupportedMap(format!(
                "{} is not linear or an expanding circle map",
                f.name()
            )));
        }
    }
    if n == 0 || sample_points == 0 {
        return Err(Error::invalid("n and sample_points must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(INVARIANCE_SEED);
    let dim = system.dim();
    let points: Vec<(Vec<f64>, DVector<f64>)> = (0..sample_points)
        .map(|_| {
            let x = system.f1().sample_point(&mut rng);
            let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            (x, v)
        })
        .collect();

    let mut out = Vec::new();
    for i in 1..=2u8 {
        for j in 1..=2u8 {
            let fi = system.generator(i);
            let fj = system.generator(j);
            let mut worst: f64 = 0.0;
            for (x, v) in &points {
                let here = finite_exponent(fj, x, v, n)?;
                let pushed = fi.jacobian(x)? * v;
                let image = if fj.constant_jacobian().is_some() { x.clone() } else { fi.apply(x)? };
                let there = finite_exponent(fj, &image, &pushed, n)?;
                worst = worst.max((here - there).abs());
            }
            out.push(InvarianceResidual { i, j, max_residual: worst });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::Weights;

    fn lp() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }

    fn cat() -> DynamicalMap {
        DynamicalMap::linear_toral("cat", vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn cat_sq() -> DynamicalMap {
        DynamicalMap::linear_toral("cat2", vec![vec![5, 3], vec![3, 2]]).unwrap()
    }

    fn diag(name: &str, a: f64, b: f64) -> DynamicalMap {
        DynamicalMap::truncated_operator(name, DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])), Some(0.0), 10.0)
            .unwrap()
    }

    fn total_dim(s: &JointSplitting) -> usize {
        s.labeled().map(LabeledBlock::dim).sum::<usize>() + s.alpha_dim()
    }

    #[test]
    fn cat_and_square_blocks() {
        let s = joint_splitting(&cat(), &cat_sq()).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert!(s.defect_blocks_f1.is_empty() && s.defect_blocks_f2.is_empty());
        assert_eq!(s.alpha_dim(), 1);
        assert_eq!(total_dim(&s), 2);
        let (l1, l2) = s.blocks[0].pair;
        assert!((l1 - lp()).abs() < 1e-12 && (l2 - 2.0 * lp()).abs() < 1e-12);

        // Shared eigenvector oracle: (phi, 1) with phi the golden ratio.
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let eu = Subspace::from_vectors(&[vec![phi, 1.0]], "eu").unwrap();
        assert!(principal_angles(&eu, &s.blocks[0].subspace).unwrap()[0] < 1e-10);
        assert!(s.h3_angle().unwrap() < 1e-10);
    }

    #[test]
    fn lowered_threshold_exposes_stable_block() {
        let s = joint_splitting_with_threshold(&cat(), &cat_sq(), -10.0).unwrap();
        assert_eq!(s.blocks.len(), 2);
        assert!(s.alpha_block.is_none());
        let (l1, l2) = s.blocks[1].pair;
        assert!((l1 + lp()).abs() < 1e-12 && (l2 + 2.0 * lp()).abs() < 1e-12);
    }

    #[test]
    fn diag_mixed_is_all_defect() {
        let s = joint_splitting(&diag("a", 2.0, 0.5), &diag("b", 0.5, 2.0)).unwrap();
        assert!(s.blocks.is_empty());
        assert_eq!(s.defect_blocks_f1.len(), 1);
        assert_eq!(s.defect_blocks_f2.len(), 1);
        let e1 = Subspace::from_vectors(&[vec![1.0, 0.0]], "e1").unwrap();
        let e2 = Subspace::from_vectors(&[vec![0.0, 1.0]], "e2").unwrap();
        assert!(principal_angles(&e1, &s.defect_blocks_f1[0].subspace).unwrap()[0] < 1e-12);
        assert!(principal_angles(&e2, &s.defect_blocks_f2[0].subspace).unwrap()[0] < 1e-12);
        let g1 = s.generator_exponents(0);
        assert_eq!(g1.len(), 1);
        assert_eq!((g1[0].m, g1[0].d), (1, 0));
    }

    #[test]
    fn identity_pair_is_alpha() {
        let id = DynamicalMap::linear_toral("id", vec![vec![1, 0], vec![0, 1]]).unwrap();
        let s = joint_splitting(&id, &id).unwrap();
        assert!(s.blocks.is_empty() && s.defect_blocks_f1.is_empty() && s.defect_blocks_f2.is_empty());
        assert_eq!(s.alpha_dim(), 2);
    }

    #[test]
    fn rejects_non_commuting_and_nonlinear() {
        let shear = DynamicalMap::linear_toral("shear", vec![vec![1, 1], vec![0, 1]]).unwrap();
        assert!(matches!(joint_splitting(&cat(), &shear), Err(Error::InvalidInput(_))));
        let custom = DynamicalMap::custom(
            "c",
            1,
            crate::systems::PhaseSpace::Torus,
            std::sync::Arc::new(|x: &[f64]| vec![2.0 * x[0]]),
            std::sync::Arc::new(|_: &[f64]| DMatrix::from_element(1, 1, 2.0)),
        )
        .unwrap();
        let x2 = DynamicalMap::circle_expanding("x2", 2).unwrap();
        assert!(matches!(joint_splitting(&custom, &x2), Err(Error::UnsupportedMap(_))));
    }

    #[test]
    fn defective_generator_groups_generalized_eigenspace() {
        let shear = DynamicalMap::linear_toral("shear", vec![vec![1, 1], vec![0, 1]]).unwrap();
        let s = joint_splitting_with_threshold(&shear, &shear, -1.0).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert_eq!(s.blocks[0].dim(), 2);
    }

    #[test]
    fn composite_on_cat_and_square() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::uniform()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let r = composite_spectrum_check(&sys, &s, 1, 1, 200).unwrap();
        // Oracle: log of the top eigenvalue of A^3 = [[13, 8], [8, 5]].
        let a3 = DMatrix::<f64>::from_row_slice(2, 2, &[13.0, 8.0, 8.0, 5.0]);
        let top = a3.symmetric_eigenvalues().max().ln();
        assert!((r[0].measured - top).abs() < 1e-6);
        assert!(r[0].residual < 1e-6);
        let r10 = composite_spectrum_check(&sys, &s, 1, 0, 200).unwrap();
        assert!((r10[0].measured - lp()).abs() < 1e-9);
        assert!(composite_spectrum_check(&sys, &s, 0, 0, 10).is_err());
    }

    #[test]
    fn composite_on_circle_pair() {
        let sys = CommutingSystem::new(
            DynamicalMap::circle_expanding("x2", 2).unwrap(),
            DynamicalMap::circle_expanding("x3", 3).unwrap(),
            Weights::uniform(),
        )
        .unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let r = composite_spectrum_check(&sys, &s, 2, 1, 50).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].measured - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_exponents_cat_and_square() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::uniform()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let r = verify_weighted_exponents(&sys, &s, 2000, 20, 5).unwrap();
        assert!((r[0].target - 1.5 * lp()).abs() < 1e-12);
        // Direct oracle: each step multiplies the unstable vector by the symbol's eigenvalue.
        let direct: f64 = (0..20u64)
            .map(|st| {
                let w = sample_word_stream(sys.nu(), 2000, 5, st);
                (w.counts[0] as f64 * lp() + w.counts[1] as f64 * 2.0 * lp()) / 2000.0
            })
            .sum::<f64>()
            / 20.0;
        assert!((r[0].estimate - direct).abs() < 1e-9);
    }

    #[test]
    fn weighted_exponents_degenerate_weights_are_exact() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::new(1.0, 0.0).unwrap()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let r = verify_weighted_exponents(&sys, &s, 500, 5, 1).unwrap();
        assert!(r[0].pass);
        assert!(r[0].residual.abs() < 1e-9);
        assert!(r[0].ci_halfwidth < 1e-12);
    }

    #[test]
    fn determinant_rate_examples() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::uniform()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let d = unstable_determinant_rate(&sys, &s, 1000, 10, 2).unwrap();
        assert!((d.lower - 1.5 * lp()).abs() < 1e-12);
        assert!((d.upper - d.lower).abs() < 1e-12);
        // Oracle: each symbol scales the unstable line by its eigenvalue.
        let direct: f64 = (0..10u64)
            .map(|st| {
                let w = sample_word_stream(sys.nu(), 1000, 2, st);
                (w.counts[0] as f64 + 2.0 * w.counts[1] as f64) * lp() / 1000.0
            })
            .sum::<f64>()
            / 10.0;
        assert!((d.rate - direct).abs() < 1e-9);

        let one = sys.with_nu(Weights::new(1.0, 0.0).unwrap());
        let d1 = unstable_determinant_rate(&one, &s, 300, 3, 2).unwrap();
        assert!((d1.rate - lp()).abs() < 1e-9);
        assert!(d1.ci_halfwidth < 1e-12);
        assert!(d1.within_bounds());
    }

    #[test]
    fn determinant_rate_without_unstable_directions() {
        let sys = CommutingSystem::new(cat(), cat().toral_inverse("inv").unwrap(), Weights::uniform()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let d = unstable_determinant_rate(&sys, &s, 100, 4, 0).unwrap();
        assert_eq!(d.unstable_dim, 0);
        assert_eq!(d.rate, 0.0);
        assert!((d.upper - lp()).abs() < 1e-12);
        assert!(d.within_bounds());
        assert!((s.h3_angle().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn invariance_checks() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::uniform()).unwrap();
        for r in exponent_invariance_check(&sys, 300, 5).unwrap() {
            assert!(r.max_residual < 1e-6, "{r:?}");
        }
        let id = DynamicalMap::linear_toral("id", vec![vec![1, 0], vec![0, 1]]).unwrap();
        let sys = CommutingSystem::new(id.clone(), id, Weights::uniform()).unwrap();
        for r in exponent_invariance_check(&sys, 100, 3).unwrap() {
            assert_eq!(r.max_residual, 0.0);
        }
    }

    #[test]
    fn projections_and_block_invariance() {
        let sys = CommutingSystem::new(cat(), cat_sq(), Weights::uniform()).unwrap();
        let s = joint_splitting(sys.f1(), sys.f2()).unwrap();
        assert!(block_invariance(&sys, &s).unwrap() < 1e-6);
        let norms = projection_norms(&s).unwrap();
        // Symmetric generators give orthogonal pieces.
        assert!(norms.iter().all(|n| (n - 1.0).abs() < 1e-10));
        assert!(projection_growth(&sys, &s, 50).unwrap().iter().all(|g| *g == 0.0));
    }
}
