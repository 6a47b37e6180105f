//! Dense linear algebra for frames, parallelotope volumes and subspaces.
//!
//! A [`Frame`] is an ordered list of `p` vectors in `R^d` stored as the
//! columns of a `d x p` matrix. Frames are pushed through tangent maps with
//! [`qr_push`], which re-orthonormalizes after every step and returns the
//! logarithms of the triangular diagonal. Summed over an orbit those logs
//! telescope into the log-volume growth of the pushed parallelotope, which
//! is what the Lyapunov estimators in [`crate::lyapunov`] average.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Smallest admissible diagonal entry of the triangular factor in [`qr_push`].
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Pivots at or below this (relative to the largest diagonal, in ulps) count as zero.
const PIVOT_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    vectors: DMatrix<f64>,
}

impl Frame {
    pub fn from_matrix(vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.ncols() == 0 || vectors.nrows() == 0 {
            return Err(Error::invalid("frame needs at least one vector of positive dimension"));
        }
        if vectors.ncols() > vectors.nrows() {
            return Err(Error::invalid(format!(
                "frame has {} vectors in dimension {}",
                vectors.ncols(),
                vectors.nrows()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frame contains non-finite entries"));
        }
        Ok(Frame { vectors })
    }

    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("frame needs at least one vector"))?;
        let dim = first.len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("frame vectors have differing dimensions"));
        }
        let m = DMatrix::from_fn(dim, vectors.len(), |i, j| vectors[j][i]);
        Frame::from_matrix(m)
    }

    /// The first `p` standard basis vectors of `R^dim`.
    pub fn standard(dim: usize, p: usize) -> Result<Self> {
        Frame::from_matrix(DMatrix::identity(dim, p))
    }

    /// Orthonormal frame obtained by Gram-Schmidt on Gaussian vectors.
    ///
    /// The first `p` columns of the frame for `(dim, q, seed)` with `q > p`
    /// coincide with the frame for `(dim, p, seed)`.
    pub fn random_orthonormal(dim: usize, p: usize, seed: u64) -> Result<Self> {
        if p == 0 || p > dim {
            return Err(Error::invalid(format!("cannot draw {p} vectors in dimension {dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(dim, p, |_, _| StandardNormal.sample(&mut rng));
        let frame = Frame::from_matrix(raw)?;
        let identity = DMatrix::identity(dim, dim);
        Ok(qr_push(&frame, &identity)?.0)
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.vectors
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.vectors
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    /// Largest deviation of `V^T V` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let p = g.nrows();
        (g - DMatrix::<f64>::identity(p, p)).amax()
    }
}

/// Orthonormal basis of a subspace plus an opaque label.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Frame,
    pub label: String,
}

impl Subspace {
    /// Orthonormalizes the spanning frame. Fails if it is rank deficient.
    pub fn span(frame: &Frame, label: impl Into<String>) -> Result<Self> {
        let identity = DMatrix::identity(frame.dim(), frame.dim());
        let (basis, _) = qr_push(frame, &identity)?;
        Ok(Subspace {
            basis,
            label: label.into(),
        })
    }

    pub fn from_vectors(vectors: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        Subspace::span(&Frame::from_vectors(vectors)?, label)
    }

    pub fn basis(&self) -> &Frame {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.count()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.dim()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        let q = self.basis.matrix();
        q * q.transpose()
    }
}

/// `|xi_1 ^ ... ^ xi_p|`, the square root of the Gram determinant.
pub fn gram_volume(frame: &Frame) -> Result<f64> {
    let m = frame.matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("frame contains non-finite entries"));
    }
    let gram = m.transpose() * m;
    Ok(pivoted_cholesky_det(gram).sqrt())
}

/// Determinant of a symmetric positive semi-definite matrix by Cholesky with
/// symmetric (diagonal) pivoting. Stops at the first non-positive pivot.
fn pivoted_cholesky_det(mut a: DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut det = 1.0;
    for k in 0..n {
        let (piv, _) = (k..n)
            .map(|i| (i, a[(i, i)]))
            .fold((k, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv != k {
            a.swap_rows(k, piv);
            a.swap_columns(k, piv);
        }
        let d = a[(k, k)];
        if d <= PIVOT_CLAMP * scale * f64::EPSILON {
            // Gram matrices are PSD: what is left is rounding noise.
            return 0.0;
        }
        det *= d;
        let root = d.sqrt();
        for i in k + 1..n {
            a[(i, k)] /= root;
        }
        for j in k + 1..n {
            for i in j..n {
                let v = a[(i, j)] - a[(i, k)] * a[(j, k)];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }
    det
}

/// Applies `action` to every frame vector and re-orthonormalizes.
///
/// Uses modified Gram-Schmidt with one reorthogonalization pass and a
/// positive-diagonal convention. Returns the new orthonormal frame and
/// `log r_ii` for each column.
pub fn qr_push(frame: &Frame, action: &DMatrix<f64>) -> Result<(Frame, Vec<f64>)> {
    if action.nrows() != action.ncols() || action.ncols() != frame.dim() {
        return Err(Error::invalid(format!(
            "action of shape {}x{} cannot act on frame of dimension {}",
            action.nrows(),
            action.ncols(),
            frame.dim()
        )));
    }
    let mut w = action * frame.matrix();
    let p = w.ncols();
    let mut logs = Vec::with_capacity(p);
    for j in 0..p {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = w.column(i).dot(&w.column(j));
                let qi = w.column(i).into_owned();
                w.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let r = w.column(j).norm();
        if !r.is_finite() {
            return Err(Error::InvalidState(format!("frame column {j} overflowed")));
        }
        if r < RANK_TOLERANCE {
            return Err(Error::DegenerateFrame {
                index: j,
                value: r,
                step: None,
            });
        }
        w.column_mut(j).unscale_mut(r);
        logs.push(r.ln());
    }
    Ok((Frame { vectors: w }, logs))
}

/// Principal angles between two subspaces, ascending, in `[0, pi/2]`.
pub fn principal_angles(u: &Subspace, v: &Subspace) -> Result<Vec<f64>> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(Error::invalid(format!(
            "subspaces live in dimensions {} and {}",
            u.ambient_dim(),
            v.ambient_dim()
        )));
    }
    // Larger subspace first so the residual below has the right count.
    let (big, small) = if u.dim() >= v.dim() { (u, v) } else { (v, u) };
    let qb = big.basis().matrix();
    let qs = small.basis().matrix();
    let k = small.dim();

    let overlap = qb.transpose() * qs;
    let mut cosines: Vec<f64> = overlap.singular_values().iter().copied().collect();
    cosines.sort_by(|a, b| b.total_cmp(a));

    let residual = qs - qb * &overlap;
    let mut sines: Vec<f64> = residual.singular_values().iter().copied().collect();
    sines.sort_by(|a, b| a.total_cmp(b));

    Ok((0..k)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            if c * c < 0.5 {
                c.acos()
            } else {
                sines[i].clamp(0.0, 1.0).asin()
            }
        })
        .collect())
}

/// QR sweeps allowed per matrix row before a Schur attempt is abandoned.
const SCHUR_SWEEPS_PER_ROW: usize = 200;

/// Eigenvalues of a square matrix.
///
/// Shifted QR can stall when many eigenvalues share a modulus (cyclic
/// matrices are the classic case). A failed attempt is retried on
/// `a + c I` for a few shifts `c`, which separates the moduli, and the
/// shift is subtracted again.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let k = a.nrows();
    if k == 0 || a.ncols() != k {
        return Err(Error::invalid("eigenvalues need a non-empty square matrix"));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for c in [0.0, 0.618, -0.854, 1.272] {
        let shifted = a + DMatrix::identity(k, k) * (c * scale);
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, SCHUR_SWEEPS_PER_ROW * k) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - Complex::new(c * scale, 0.0))
                .collect());
        }
    }
    Err(Error::InvalidState("eigenvalue iteration did not converge".into()))
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}
