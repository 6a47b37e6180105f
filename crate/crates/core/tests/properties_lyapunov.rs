mod common;

use common::cases;
use ergodyn::linalg::eigenvalues;
use ergodyn::lyapunov::{
    block_invariance, composite_spectrum_check, joint_splitting, lyapunov_spectrum, projection_growth,
    random_index_rate, verify_weighted_exponents,
};
use ergodyn::registry::builtin;
use ergodyn::systems::{CommutingSystem, DynamicalMap, Weights};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const LINEAR_PAIRS: [&str; 5] = ["cat-and-square", "cat-and-inverse", "times2-times3", "diag-mixed", "compact-diag"];

fn pair(name: &str) -> CommutingSystem {
    builtin(name).unwrap().commuting().unwrap()
}

fn toral(rows: &[Vec<i64>]) -> DynamicalMap {
    DynamicalMap::linear_toral("m", rows.to_vec()).unwrap()
}

fn as_real(rows: &[Vec<i64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j] as f64)
}

/// Square integer matrices of size 2 or 3 with entries in `-3..=3`.
fn integer_matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (2usize..=3).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-3i64..=3, d), d))
}

/// Products of elementary shears, which have determinant 1.
fn unimodular() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (2usize..=3).prop_flat_map(|d| {
        prop::collection::vec((0..d, 0..d, prop::bool::ANY), 1..8).prop_map(move |shears| {
            let mut m: Vec<Vec<i64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as i64).collect()).collect();
            for (i, j, up) in shears {
                if i == j {
                    continue;
                }
                let s = if up { 1 } else { -1 };
                for k in 0..d {
                    m[i][k] += s * m[j][k];
                }
            }
            m
        })
    })
}

/// Smallest gap between distinct eigenvalue log-moduli, or infinity when there is only one.
fn modulus_gap(a: &DMatrix<f64>) -> f64 {
    let mut l: Vec<f64> = eigenvalues(a).unwrap().iter().map(|z| z.norm().ln()).collect();
    l.sort_by(f64::total_cmp);
    l.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn partial_sums_nest(rows in integer_matrix(), p in 1usize..3) {
        let a = as_real(&rows);
        prop_assume!(a.determinant().abs() > 0.5 && modulus_gap(&a) > 0.05);
        let map = toral(&rows);
        let q = map.dim();
        prop_assume!(p < q);
        let x0 = vec![0.0; q];
        let full = lyapunov_spectrum(&map, &x0, q, 2000, 200).unwrap();
        let part = lyapunov_spectrum(&map, &x0, p, 2000, 200).unwrap();
        let total: f64 = part.repeated.iter().sum();
        prop_assert!((full.partial_sum(p) - total).abs() <= 1e-6, "{} vs {total}", full.partial_sum(p));
    }

    #[test]
    fn volume_preserving_spectra_sum_to_zero(rows in unimodular()) {
        let map = toral(&rows);
        let d = map.dim();
        let s = lyapunov_spectrum(&map, &vec![0.0; d], d, 2000, 200).unwrap();
        let total: f64 = s.exponents.iter().zip(&s.multiplicities).map(|(l, &m)| l * m as f64).sum();
        prop_assert!(total.abs() <= 1e-8, "{rows:?}: {total}");
    }

    #[test]
    fn random_index_is_subadditive(
        d1 in prop::collection::vec(0.05f64..2.0, 4),
        d2 in prop::collection::vec(0.05f64..2.0, 4),
        tails in (0.0f64..0.5, 0.0f64..0.5),
        nu1 in 0.0f64..=1.0,
    ) {
        let op = |name: &str, d: &[f64], tail: f64| {
            DynamicalMap::truncated_operator(name, DMatrix::from_diagonal(&DVector::from_column_slice(d)), Some(tail), 10.0)
                .unwrap()
        };
        let sys = CommutingSystem::new(
            op("T1", &d1, tails.0),
            op("T2", &d2, tails.1),
            Weights::new(nu1, 1.0 - nu1).unwrap(),
        )
        .unwrap();
        let r = random_index_rate(&sys, &[1, 2, 4], 32).unwrap();
        prop_assert!(
            r.expected_rate <= r.weighted_generator_bound + 1e-9,
            "{} > {}",
            r.expected_rate,
            r.weighted_generator_bound
        );
    }
}

#[test]
fn composite_exponents_add() {
    for name in LINEAR_PAIRS {
        let sys = pair(name);
        let split = joint_splitting(sys.f1(), sys.f2()).unwrap();
        for s1 in 0..=3 {
            for s2 in 0..=3 {
                if (s1, s2) == (0, 0) {
                    continue;
                }
                for r in composite_spectrum_check(&sys, &split, s1, s2, 500).unwrap() {
                    assert!(r.residual <= 1e-6, "{name} {r:?}");
                }
            }
        }
    }
}

#[test]
fn blocks_are_invariant() {
    for name in LINEAR_PAIRS {
        let sys = pair(name);
        let split = joint_splitting(sys.f1(), sys.f2()).unwrap();
        let angle = block_invariance(&sys, &split).unwrap();
        assert!(angle <= 1e-6, "{name}: {angle}");
    }
}

#[test]
fn projection_norms_do_not_grow_for_constant_cocycles() {
    for name in LINEAR_PAIRS {
        let sys = pair(name);
        let split = joint_splitting(sys.f1(), sys.f2()).unwrap();
        for g in projection_growth(&sys, &split, 100).unwrap() {
            assert_eq!(g, 0.0, "{name}");
        }
    }
}

/// Nominal coverage of `mean +- 2 sd / sqrt(50)` under a t law with 49 degrees of freedom.
const NOMINAL_COVERAGE: f64 = 0.949;

/// Fraction of (seed, piece) trials whose estimate lies within the half-width.
fn coverage(name: &str, seeds: u64, n: usize) -> f64 {
    let sys = pair(name);
    let split = joint_splitting(sys.f1(), sys.f2()).unwrap();
    let (mut hits, mut trials) = (0usize, 0usize);
    for seed in 1..=seeds {
        for r in verify_weighted_exponents(&sys, &split, n, 50, seed).unwrap() {
            hits += r.pass as usize;
            trials += 1;
        }
    }
    hits as f64 / trials as f64
}

// The half-width fixed for these intervals covers about 94.9% of seeds, so a
// finite seed set passes "at least 95%" only with probability near one half.
// What is asserted is agreement with the nominal coverage, three standard
// errors computed from the seed count (pieces of one seed are correlated).
#[test]
fn weighted_exponents_reach_nominal_coverage() {
    for (name, seeds, n) in [("cat-and-square", 200, 1000), ("cat-and-inverse", 200, 1000), ("diag-mixed", 200, 1000), ("compact-diag", 40, 200)] {
        let c = coverage(name, seeds, n);
        let se = (NOMINAL_COVERAGE * (1.0 - NOMINAL_COVERAGE) / seeds as f64).sqrt();
        assert!(c >= NOMINAL_COVERAGE - 3.0 * se, "{name}: coverage {c} over {seeds} seeds");
        eprintln!("{name}: coverage {c:.3} over {seeds} seeds");
    }
}
