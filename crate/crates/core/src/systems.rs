//! Generator maps, commuting pairs, Bernoulli words and skew-product orbits.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Frame;

/// Largest commutation residual accepted for a [`CommutingSystem`].
pub const COMMUTATION_TOLERANCE: f64 = 1e-9;

const TORUS_GRID: f64 = 1.0 / (1u64 << 40) as f64;

/// Sample size used when a [`CommutingSystem`] verifies its generators.
const VERIFICATION_SAMPLES: usize = 64;

pub type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type TangentFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Where the points of a map live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseSpace {
    /// `[0,1)^d` with wrap-around.
    Torus,
    /// Closed Euclidean ball of the given radius about the origin.
    Ball(f64),
}

#[derive(Clone)]
pub enum MapKind {
    /// Integer matrix acting on the torus.
    LinearToral(Vec<Vec<i64>>),
    /// `x -> k x mod 1` on the circle.
    CircleExpanding(u32),
    /// Finite compression of a sequence-space operator, acting linearly on
    /// the declared ball.
    TruncatedOperator {
        matrix: DMatrix<f64>,
        tail_norm_bound: Option<f64>,
        ball_radius: f64,
    },
    Custom {
        point: PointFn,
        tangent: TangentFn,
        space: PhaseSpace,
    },
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::LinearToral(m) => f.debug_tuple("LinearToral").field(m).finish(),
            MapKind::CircleExpanding(k) => f.debug_tuple("CircleExpanding").field(k).finish(),
            MapKind::TruncatedOperator {
                matrix,
                tail_norm_bound,
                ball_radius,
            } => f
                .debug_struct("TruncatedOperator")
                .field("dim", &matrix.nrows())
                .field("tail_norm_bound", tail_norm_bound)
                .field("ball_radius", ball_radius)
                .finish(),
            MapKind::Custom { space, .. } => f.debug_struct("Custom").field("space", space).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicalMap {
    name: String,
    dim: usize,
    kind: MapKind,
}

/// Reduces to `[0,1)`. `rem_euclid` may round tiny negatives up to exactly 1.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub(crate) fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

impl DynamicalMap {
    pub fn linear_toral(name: impl Into<String>, matrix: Vec<Vec<i64>>) -> Result<Self> {
        let dim = matrix.len();
        if dim == 0 || matrix.iter().any(|row| row.len() != dim) {
            return Err(Error::invalid("toral matrix must be square and non-empty"));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| matrix[i][j] as f64);
        if m.determinant().round() == 0.0 {
            return Err(Error::invalid("toral matrix must have nonzero determinant"));
        }
        Ok(DynamicalMap {
            name: name.into(),
            dim,
            kind: MapKind::LinearToral(matrix),
        })
    }

    pub fn circle_expanding(name: impl Into<String>, factor: u32) -> Result<Self> {
        if factor < 2 {
            return Err(Error::invalid(format!("expanding factor must be >= 2, got {factor}")));
        }
        Ok(DynamicalMap {
            name: name.into(),
            dim: 1,
            kind: MapKind::CircleExpanding(factor),
        })
    }

    pub fn truncated_operator(
        name: impl Into<String>,
        matrix: DMatrix<f64>,
        tail_norm_bound: Option<f64>,
        ball_radius: f64,
    ) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || matrix.ncols() != dim {
            return Err(Error::invalid("operator matrix must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("operator matrix has non-finite entries"));
        }
        if let Some(t) = tail_norm_bound {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid("tail norm bound must be finite and >= 0"));
            }
        }
        if !(ball_radius > 0.0) {
            return Err(Error::invalid("ball radius must be positive"));
        }
        let smallest = matrix.singular_values().min();
        if smallest < crate::linalg::RANK_TOLERANCE {
            return Err(Error::invalid("operator must be injective on the truncation"));
        }
        Ok(DynamicalMap {
            name: name.into(),
            dim,
            kind: MapKind::TruncatedOperator {
                matrix,
                tail_norm_bound,
                ball_radius,
            },
        })
    }

    pub fn custom(name: impl Into<String>, dim: usize, space: PhaseSpace, point: PointFn, tangent: TangentFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("custom map needs positive dimension"));
        }
        Ok(DynamicalMap {
            name: name.into(),
            dim,
            kind: MapKind::Custom { point, tangent, space },
        })
    }

    /// The integer matrix inverse of a unimodular toral map.
    pub fn toral_inverse(&self, name: impl Into<String>) -> Result<Self> {
        let MapKind::LinearToral(m) = &self.kind else {
            return Err(Error::UnsupportedMap(format!("{} is not linear-toral", self.name)));
        };
        let a = DMatrix::from_fn(self.dim, self.dim, |i, j| m[i][j] as f64);
        let det = a.determinant().round();
        if det.abs() != 1.0 {
            return Err(Error::invalid("only unimodular toral maps have toral inverses"));
        }
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::invalid("matrix not invertible"))?;
        let rows = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| inv[(i, j)].round() as i64).collect())
            .collect();
        DynamicalMap::linear_toral(name, rows)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn phase_space(&self) -> PhaseSpace {
        match &self.kind {
            MapKind::LinearToral(_) | MapKind::CircleExpanding(_) => PhaseSpace::Torus,
            MapKind::TruncatedOperator { ball_radius, .. } => PhaseSpace::Ball(*ball_radius),
            MapKind::Custom { space, .. } => *space,
        }
    }

    pub fn tail_norm_bound(&self) -> Option<f64> {
        match &self.kind {
            MapKind::TruncatedOperator { tail_norm_bound, .. } => *tail_norm_bound,
            _ => None,
        }
    }

    /// Jacobian when it does not depend on the point.
    pub fn constant_jacobian(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            MapKind::LinearToral(m) => Some(DMatrix::from_fn(self.dim, self.dim, |i, j| m[i][j] as f64)),
            MapKind::CircleExpanding(k) => Some(DMatrix::from_element(1, 1, *k as f64)),
            MapKind::TruncatedOperator { matrix, .. } => Some(matrix.clone()),
            MapKind::Custom { .. } => None,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {}, map {} has {}",
                x.len(),
                self.name,
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite coordinates {x:?}")));
        }
        if let PhaseSpace::Ball(r) = self.phase_space() {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > r {
                return Err(Error::InvalidState(format!(
                    "point of norm {norm} outside the ball of radius {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let y = match &self.kind {
            MapKind::LinearToral(m) => m
                .iter()
                .map(|row| wrap_unit(row.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum()))
                .collect(),
            MapKind::CircleExpanding(k) => vec![wrap_unit(*k as f64 * x[0])],
            MapKind::TruncatedOperator { matrix, .. } => {
                (matrix * DVector::from_column_slice(x)).iter().copied().collect()
            }
            MapKind::Custom { point, space, .. } => {
                let y = point(x);
                match space {
                    PhaseSpace::Torus => y.into_iter().map(wrap_unit).collect(),
                    PhaseSpace::Ball(_) => y,
                }
            }
        };
        self.check_point(&y)?;
        Ok(y)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.kind {
            MapKind::Custom { tangent, .. } => {
                self.check_point(x)?;
                let j = tangent(x);
                if j.nrows() != self.dim || j.ncols() != self.dim {
                    return Err(Error::InvalidState(format!("jacobian of {} has wrong shape", self.name)));
                }
                if j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidState(format!("jacobian of {} is not finite", self.name)));
                }
                Ok(j)
            }
            _ => Ok(self.constant_jacobian().expect("non-custom maps have constant jacobians")),
        }
    }

    /// Multiplies every frame vector by the Jacobian at `x`.
    pub fn tangent_apply(&self, x: &[f64], frame: &Frame) -> Result<Frame> {
        if frame.dim() != self.dim {
            return Err(Error::invalid(format!(
                "frame dimension {} does not match map dimension {}",
                frame.dim(),
                self.dim
            )));
        }
        let j = self.jacobian(x)?;
        Frame::from_matrix(j * frame.matrix())
    }

    /// Distance in the phase space: wrap-around on the torus, Euclidean otherwise.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.phase_space() {
            PhaseSpace::Torus => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| circle_distance(x, y).powi(2))
                .sum::<f64>()
                .sqrt(),
            PhaseSpace::Ball(_) => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// Uniform point on the torus, or in the cube inscribed in the ball.
    ///
    /// Torus coordinates lie on the grid `2^-40 Z`, where small integer
    /// matrices act without rounding.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.phase_space() {
            PhaseSpace::Torus => (0..self.dim)
                .map(|_| (rng.random::<u64>() >> 24) as f64 * TORUS_GRID)
                .collect(),
            PhaseSpace::Ball(r) => {
                let half = r / (self.dim as f64).sqrt();
                (0..self.dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half).collect()
            }
        }
    }

    /// A point from which orbit-based estimators start: the origin.
    pub fn base_point(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Probability pair `(nu(f1), nu(f2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Weights([f64; 2]);

impl Weights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(nu1: f64, nu2: f64) -> Result<Self> {
        if !(nu1.is_finite() && nu2.is_finite()) || nu1 < 0.0 || nu2 < 0.0 {
            return Err(Error::invalid(format!("weights ({nu1}, {nu2}) must be finite and >= 0")));
        }
        if (nu1 + nu2 - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("weights ({nu1}, {nu2}) sum to {}", nu1 + nu2)));
        }
        Ok(Weights([nu1, nu2]))
    }

    pub fn uniform() -> Self {
        Weights([0.5, 0.5])
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_array(&self) -> [f64; 2] {
        self.0
    }
}

impl TryFrom<[f64; 2]> for Weights {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Weights::new(v[0], v[1])
    }
}

impl From<Weights> for [f64; 2] {
    fn from(w: Weights) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutationReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples `dist(f1 f2 x, f2 f1 x)` at uniformly drawn points.
pub fn check_commutation(f1: &DynamicalMap, f2: &DynamicalMap, sample_count: usize, seed: u64) -> Result<CommutationReport> {
    if f1.dim() != f2.dim() {
        return Err(Error::invalid(format!("generators have dimensions {} and {}", f1.dim(), f2.dim())));
    }
    if sample_count == 0 {
        return Err(Error::invalid("sample_count must be >= 1"));
    }
    // On a ball, both compositions must stay inside it. For linear generators
    // shrinking the sample by the product of Frobenius norms guarantees that;
    // rounding up to a power of two keeps the scaling exact.
    let shrink = match (f1.phase_space(), f1.constant_jacobian(), f2.constant_jacobian()) {
        (PhaseSpace::Ball(_), Some(a), Some(b)) => {
            let bound = (a.norm() * b.norm()).max(a.norm()).max(b.norm()).max(1.0);
            2f64.powi(bound.log2().ceil() as i32)
        }
        _ => 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for _ in 0..sample_count {
        let x: Vec<f64> = f1.sample_point(&mut rng).into_iter().map(|v| v / shrink).collect();
        let a = f1.apply(&f2.apply(&x)?)?;
        let b = f2.apply(&f1.apply(&x)?)?;
        let r = f1.distance(&a, &b);
        max = max.max(r);
        sum += r;
    }
    Ok(CommutationReport {
        max_residual: max,
        mean_residual: sum / sample_count as f64,
        samples: sample_count,
        pass: max <= COMMUTATION_TOLERANCE,
    })
}

#[derive(Debug, Clone)]
pub struct CommutingSystem {
    f1: DynamicalMap,
    f2: DynamicalMap,
    nu: Weights,
    commutation_residual: f64,
}

impl CommutingSystem {
    pub fn new(f1: DynamicalMap, f2: DynamicalMap, nu: Weights) -> Result<Self> {
        let report = check_commutation(&f1, &f2, VERIFICATION_SAMPLES, 0)?;
        if !report.pass {
            return Err(Error::invalid(format!(
                "{} and {} do not commute (residual {:e})",
                f1.name(),
                f2.name(),
                report.max_residual
            )));
        }
        Ok(CommutingSystem {
            f1,
            f2,
            nu,
            commutation_residual: report.max_residual,
        })
    }

    pub fn f1(&self) -> &DynamicalMap {
        &self.f1
    }

    pub fn f2(&self) -> &DynamicalMap {
        &self.f2
    }

    /// Generator for symbol 1 or 2.
    pub fn generator(&self, symbol: u8) -> &DynamicalMap {
        match symbol {
            1 => &self.f1,
            2 => &self.f2,
            _ => panic!("symbol {symbol} is not 1 or 2"),
        }
    }

    pub fn nu(&self) -> Weights {
        self.nu
    }

    pub fn with_nu(&self, nu: Weights) -> Self {
        CommutingSystem { nu, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.f1.dim()
    }

    pub fn commutation_residual(&self) -> f64 {
        self.commutation_residual
    }
}

/// Finite prefix of a Bernoulli sequence over `{1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomWord {
    pub symbols: Vec<u8>,
    pub seed: u64,
    pub stream: u64,
    pub counts: [usize; 2],
}

impl RandomWord {
    pub fn from_symbols(symbols: Vec<u8>) -> Result<Self> {
        if let Some(bad) = symbols.iter().find(|&&s| s != 1 && s != 2) {
            return Err(Error::invalid(format!("symbol {bad} is not 1 or 2")));
        }
        let ones = symbols.iter().filter(|&&s| s == 1).count();
        Ok(RandomWord {
            counts: [ones, symbols.len() - ones],
            symbols,
            seed: 0,
            stream: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// i.i.d. word with law `nu`, stream 0 of `seed`.
pub fn sample_word(nu: Weights, n: usize, seed: u64) -> RandomWord {
    sample_word_stream(nu, n, seed, 0)
}

/// i.i.d. word from an independent ChaCha stream; Monte Carlo sample `s`
/// uses stream `s` so samples can be drawn in any order.
pub fn sample_word_stream(nu: Weights, n: usize, seed: u64, stream: u64) -> RandomWord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let threshold = nu.get(0);
    let symbols: Vec<u8> = (0..n)
        .map(|_| if rng.random::<f64>() < threshold { 1 } else { 2 })
        .collect();
    let ones = symbols.iter().filter(|&&s| s == 1).count();
    RandomWord {
        counts: [ones, n - ones],
        symbols,
        seed,
        stream,
    }
}

/// `[x0, f(1,w) x0, ..., f(n,w) x0]`.
pub fn compose_orbit(system: &CommutingSystem, word: &RandomWord, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut orbit = Vec::with_capacity(word.len() + 1);
    orbit.push(x0.to_vec());
    let mut x = x0.to_vec();
    for (m, &s) in word.symbols.iter().enumerate() {
        x = system.generator(s).apply(&x).map_err(|e| Error::Orbit {
            index: m,
            source: Box::new(e),
        })?;
        orbit.push(x.clone());
    }
    Ok(orbit)
}
