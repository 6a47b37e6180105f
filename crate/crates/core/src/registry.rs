//! Named example systems, each runnable from a config by `system.builtin`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::systems::{CommutingSystem, DynamicalMap, Weights};

/// Dimension of the truncated operators in the registry.
pub const OPERATOR_DIM: usize = 64;

/// Radius of the ball the truncated operators act on.
const OPERATOR_BALL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    LinearToral,
    ExpandingCircle,
    TruncatedOperator,
}

/// One generator or an ordered commuting pair, with default weights.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub f1: DynamicalMap,
    pub f2: Option<DynamicalMap>,
    pub nu: Weights,
}

impl SystemSpec {
    pub fn single(name: impl Into<String>, f1: DynamicalMap) -> Self {
        SystemSpec {
            name: name.into(),
            f1,
            f2: None,
            nu: Weights::uniform(),
        }
    }

    pub fn pair(name: impl Into<String>, f1: DynamicalMap, f2: DynamicalMap) -> Self {
        SystemSpec {
            name: name.into(),
            f1,
            f2: Some(f2),
            nu: Weights::uniform(),
        }
    }

    pub fn generators(&self) -> Vec<&DynamicalMap> {
        std::iter::once(&self.f1).chain(self.f2.as_ref()).collect()
    }

    /// The commuting pair, or an error naming the system when it has one generator.
    pub fn commuting(&self) -> Result<CommutingSystem> {
        let f2 = self
            .f2
            .clone()
            .ok_or_else(|| Error::invalid(format!("system {} has a single generator; a pair is required", self.name)))?;
        CommutingSystem::new(self.f1.clone(), f2, self.nu)
    }

    /// Family shared by every generator, if they agree.
    pub fn family(&self) -> Option<Family> {
        let mut families = self.generators().into_iter().map(family_of);
        let first = families.next()??;
        families.all(|f| f == Some(first)).then_some(first)
    }
}

pub fn family_of(map: &DynamicalMap) -> Option<Family> {
    use crate::systems::MapKind;
    match map.kind() {
        MapKind::LinearToral(_) => Some(Family::LinearToral),
        MapKind::CircleExpanding(_) => Some(Family::ExpandingCircle),
        MapKind::TruncatedOperator { .. } => Some(Family::TruncatedOperator),
        MapKind::Custom { .. } => None,
    }
}

pub const BUILTIN_NAMES: [&str; 9] = [
    "cat",
    "cat-and-square",
    "cat-and-inverse",
    "times2-times3",
    "times2",
    "times3",
    "diag-mixed",
    "compact-diag",
    "shift-finite-rank",
];

fn cat() -> Result<DynamicalMap> {
    DynamicalMap::linear_toral("cat", vec![vec![2, 1], vec![1, 1]])
}

fn diagonal(name: &str, entries: impl Fn(usize) -> f64, tail: f64) -> Result<DynamicalMap> {
    let d = DVector::from_fn(OPERATOR_DIM, |i, _| entries(i + 1));
    DynamicalMap::truncated_operator(name, DMatrix::from_diagonal(&d), Some(tail), OPERATOR_BALL)
}

fn diag2(name: &str, a: f64, b: f64) -> Result<DynamicalMap> {
    // The whole operator is two-dimensional, so nothing is discarded.
    DynamicalMap::truncated_operator(name, DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])), Some(0.0), OPERATOR_BALL)
}

/// `0.5 S + e_1 e_d^T` with `S` the forward shift; the rank-one term closes the shift into a cycle.
fn shift_finite_rank() -> Result<DynamicalMap> {
    let d = OPERATOR_DIM;
    let mut t = DMatrix::zeros(d, d);
    for i in 1..d {
        t[(i, i - 1)] = 0.5;
    }
    t[(0, d - 1)] = 1.0;
    DynamicalMap::truncated_operator("shift-finite-rank", t, Some(0.0), OPERATOR_BALL)
}

pub fn builtin(name: &str) -> Result<SystemSpec> {
    let spec = match name {
        "cat" => SystemSpec::single(name, cat()?),
        "cat-and-square" => SystemSpec::pair(
            name,
            cat()?,
            DynamicalMap::linear_toral("cat-squared", vec![vec![5, 3], vec![3, 2]])?,
        ),
        "cat-and-inverse" => {
            let a = cat()?;
            let inv = a.toral_inverse("cat-inverse")?;
            SystemSpec::pair(name, a, inv)
        }
        "times2-times3" => SystemSpec::pair(
            name,
            DynamicalMap::circle_expanding("times2", 2)?,
            DynamicalMap::circle_expanding("times3", 3)?,
        ),
        "times2" => SystemSpec::single(name, DynamicalMap::circle_expanding("times2", 2)?),
        "times3" => SystemSpec::single(name, DynamicalMap::circle_expanding("times3", 3)?),
        "diag-mixed" => SystemSpec::pair(name, diag2("diag(2,1/2)", 2.0, 0.5)?, diag2("diag(1/2,2)", 0.5, 2.0)?),
        "compact-diag" => {
            let tail = 1.0 / (OPERATOR_DIM + 1) as f64;
            SystemSpec::pair(
                name,
                diagonal("diag(1/k)", |k| 1.0 / k as f64, tail)?,
                diagonal("diag(1/k^2)", |k| 1.0 / (k * k) as f64, tail * tail)?,
            )
        }
        "shift-finite-rank" => SystemSpec::single(name, shift_finite_rank()?),
        other => {
            return Err(Error::invalid(format!(
                "unknown built-in system {other:?}; known: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(spec)
}
