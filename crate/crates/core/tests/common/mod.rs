#![allow(dead_code)]

use ergodyn::linalg::Frame;
use nalgebra::{DMatrix, DVector};
use proptest::test_runner::{Config, FileFailurePersistence};

/// `cases` per property; shrunk failures are kept beside each test file as `<name>.proptest-regressions`.
pub fn cases(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("proptest-regressions"))),
        ..Config::default()
    }
}

/// Distance from `v` to the span of `others`, by least squares on the normal equations.
fn distance_to_span(v: &DVector<f64>, others: &[DVector<f64>]) -> f64 {
    if others.is_empty() {
        return v.norm();
    }
    let b = DMatrix::from_columns(others);
    let gram = b.transpose() * &b;
    let rhs = b.transpose() * v;
    let coeffs = gram.lu().solve(&rhs).expect("independent vectors");
    (v - b * coeffs).norm()
}

/// `V_p(xi_1, ..., xi_p) = prod_i dist(xi_i, span{xi_{i+1}, ..., xi_p})`.
pub fn recursive_volume(f: &Frame) -> f64 {
    let cols: Vec<DVector<f64>> = (0..f.count()).map(|i| f.vector(i)).collect();
    (0..cols.len()).map(|i| distance_to_span(&cols[i], &cols[i + 1..])).product()
}
