//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here is a thin contract layer over `nalgebra`: decompositions
//! are sorted, residual-checked and mapped onto [`Error`] so that callers
//! never deal with `Option`s from the backend.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Tolerance for structural checks (Hermiticity, completeness, unitarity).
pub const STRUCTURAL_TOL: f64 = 1e-9;
/// Tolerance used when comparing duality certificates.
pub const CERTIFICATE_TOL: f64 = 1e-6;
/// Default cap on any Hilbert-space dimension built by `kron`.
pub const DEFAULT_MAX_DIM: usize = 4096;

const MAX_SWEEPS: usize = 10_000;

/// Dimension cap, overridable through `QMETRO_MAX_DIM`.
pub fn max_dim() -> usize {
    std::env::var("QMETRO_MAX_DIM")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

pub fn check_dim(dim: usize) -> Result<()> {
    let cap = max_dim();
    if dim > cap {
        return Err(Error::CapacityError { dim, cap });
    }
    Ok(())
}

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn diag(entries: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_column_slice(entries))
}

pub fn real_diag(entries: &[f64]) -> ComplexMatrix {
    let v: Vec<Complex64> = entries.iter().map(|&x| c(x, 0.0)).collect();
    diag(&v)
}

/// Build a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<ComplexMatrix> {
    if entries.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} entries cannot fill a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = ComplexMatrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::DomainError("matrix has non-finite entries".into()))
    }
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let k = a.ncols();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..k {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `||U^dag U - I||_F`.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    frobenius(&(u.adjoint() * u - identity(u.nrows())))
}

pub fn ensure_unitary(u: &ComplexMatrix) -> Result<()> {
    let residual = unitarity_residual(u);
    if residual > STRUCTURAL_TOL {
        return Err(Error::NotUnitary { residual });
    }
    Ok(())
}

/// Singular value decomposition `m = U diag(s) V^dag` (thin for rectangular input).
#[derive(Debug, Clone)]
pub struct SingularValueDecomposition {
    pub u: ComplexMatrix,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SingularValueDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let s = real_diag(&self.singular_values);
        &self.u * s * self.v.adjoint()
    }
}

pub fn svd(m: &ComplexMatrix) -> Result<SingularValueDecomposition> {
    if m.is_empty() {
        return Err(Error::ShapeMismatch("svd of an empty matrix".into()));
    }
    ensure_finite(m)?;
    let dec = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("svd did not converge".into()))?;
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let singular_values = order.iter().map(|&i| dec.singular_values[i].max(0.0)).collect();
    let u = ComplexMatrix::from_fn(u.nrows(), order.len(), |r, k| u[(r, order[k])]);
    let v = ComplexMatrix::from_fn(v_t.ncols(), order.len(), |r, k| v_t[(order[k], r)].conj());
    Ok(SingularValueDecomposition { u, singular_values, v })
}

pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::ShapeMismatch("svd of an empty matrix".into()));
    }
    ensure_finite(m)?;
    let dec = nalgebra::linalg::SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("svd did not converge".into()))?;
    let mut s: Vec<f64> = dec.singular_values.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Largest singular value.
pub fn operator_norm(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Non-decreasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn vector(&self, k: usize) -> ComplexVector {
        self.eigenvectors.column(k).into_owned()
    }
}

pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEig> {
    if !h.is_square() || h.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "hermitian_eig needs a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    ensure_finite(h)?;
    let skew = frobenius(&(h - h.adjoint()));
    let scale = frobenius(h);
    if skew > STRUCTURAL_TOL * scale.max(1e-300) && skew > 1e-300 {
        return Err(Error::DomainError(format!(
            "matrix is not Hermitian (||H - H^dag||_F = {skew:.3e})"
        )));
    }
    let sym = hermitian_part(h);
    let dec = nalgebra::linalg::SymmetricEigen::try_new(sym, f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolver did not converge".into()))?;
    let n = dec.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[a].total_cmp(&dec.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, k| dec.eigenvectors[(r, order[k])]);
    Ok(HermitianEig { eigenvalues, eigenvectors })
}

/// Rotate `v` by a global phase so that its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut ComplexVector) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        // ties resolved towards the lowest index, with a little slack so that
        // rounding noise does not flip the choice
        if z.norm() > best_abs * (1.0 + 1e-9) {
            best_abs = z.norm();
            best = i;
        }
    }
    if best_abs > 0.0 {
        let phase = v[best].conj() / v[best].norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::ShapeMismatch("kron of an empty matrix".into()));
    }
    check_dim(a.nrows() * b.nrows())?;
    check_dim(a.ncols() * b.ncols())?;
    Ok(a.kronecker(b))
}

/// `exp(-i h s)` for Hermitian `h`.
pub fn unitary_from_hamiltonian(h: &ComplexMatrix, s: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(h)?;
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&l| Complex64::from_polar(1.0, -l * s))
        .collect();
    Ok(&eig.eigenvectors * diag(&phases) * eig.eigenvectors.adjoint())
}

pub fn pauli_x() -> ComplexMatrix {
    from_rows(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    from_rows(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    real_diag(&[1.0, -1.0])
}

/// Seeded random matrices for tests, sweeps and the random-channel suites.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
        hermitian_part(&gaussian(n, n, rng))
    }

    /// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
    pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
        isometry(n, n, rng)
    }

    /// Random `rows x cols` matrix with orthonormal columns (`rows >= cols`).
    pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
        let g = gaussian(rows, cols, rng);
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..cols {
            let d = r[(k, k)];
            if d.norm() > 0.0 {
                let phase = d / d.norm();
                for i in 0..rows {
                    q[(i, k)] *= phase;
                }
            }
        }
        q
    }

    pub fn density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
        let g = gaussian(n, n, rng);
        let p = &g * g.adjoint();
        let t = trace(&p).re;
        p.unscale(t)
    }

    pub fn pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexVector {
        let g = gaussian(n, 1, rng);
        let v = g.column(0).into_owned();
        let norm = v.norm();
        v.unscale(norm)
    }
}
