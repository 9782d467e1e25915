use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix, ComplexVector, STRUCTURAL_TOL};

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() || m.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "density matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        numkit::ensure_finite(&m)?;
        let skew = numkit::frobenius(&(&m - m.adjoint()));
        if skew > STRUCTURAL_TOL {
            return Err(Error::DomainError(format!(
                "density matrix is not Hermitian ({skew:.3e})"
            )));
        }
        let tr = numkit::trace(&m);
        if (tr.re - 1.0).abs() > STRUCTURAL_TOL || tr.im.abs() > STRUCTURAL_TOL {
            return Err(Error::DomainError(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let herm = numkit::hermitian_part(&m);
        let lmin = numkit::hermitian_eig(&herm)?.min();
        if lmin < -STRUCTURAL_TOL {
            return Err(Error::DomainError(format!(
                "density matrix has negative eigenvalue {lmin:.3e}"
            )));
        }
        Ok(Self(herm))
    }

    /// Project an approximately valid matrix onto the density-matrix set:
    /// Hermitian part, negative eigenvalues clipped, trace renormalized.
    pub fn nearest(m: &ComplexMatrix) -> Result<Self> {
        let eig = numkit::hermitian_eig(&numkit::hermitian_part(m))?;
        let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(Error::NumericalFailure(
                "cannot normalize a matrix with no positive spectrum".into(),
            ));
        }
        let d = numkit::real_diag(&clipped.iter().map(|l| l / total).collect::<Vec<_>>());
        let p = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
        Ok(Self(numkit::hermitian_part(&p)))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self(numkit::identity(n).unscale(n as f64))
    }

    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DomainError("state vector has zero norm".into()));
        }
        let v = psi.unscale(norm);
        Ok(Self(&v * v.adjoint()))
    }

    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(numkit::real_diag(probs))
    }

    /// Maximally mixed state on the span of the given orthonormal columns.
    pub fn mixed_on_span(basis: &ComplexMatrix) -> Self {
        let k = basis.ncols() as f64;
        Self(numkit::hermitian_part(&(basis * basis.adjoint()).unscale(k)))
    }

    /// Convex combination `(1 - gamma) self + gamma other`.
    pub fn mix(&self, other: &DensityMatrix, gamma: f64) -> Self {
        Self(self.0.scale(1.0 - gamma) + other.0.scale(gamma))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn purity(&self) -> f64 {
        numkit::trace_of_product(&self.0, &self.0).re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(numkit::hermitian_eig(&self.0)?.eigenvalues)
    }

    /// Trace out the second factor of a `keep x rest` bipartition.
    pub fn partial_trace_second(&self, keep: usize, rest: usize) -> Result<DensityMatrix> {
        if keep * rest != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{keep}x{rest} bipartition does not match dimension {}",
                self.dim()
            )));
        }
        let mut out = ComplexMatrix::zeros(keep, keep);
        for i in 0..keep {
            for j in 0..keep {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..rest {
                    acc += self.0[(i * rest + k, j * rest + k)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self(out))
    }
}

/// `-sum lambda log(lambda)` with `0 log 0 = 0`; bits when `base2`, nats otherwise.
pub fn von_neumann_entropy(rho: &DensityMatrix, base2: bool) -> f64 {
    let eigs = match rho.eigenvalues() {
        Ok(e) => e,
        Err(_) => return f64::NAN,
    };
    let nats: f64 = eigs
        .iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.ln())
        .sum();
    let s = if base2 { nats / std::f64::consts::LN_2 } else { nats };
    s.max(0.0)
}

/// Reduced state of the first `keep` dimensions of a pure vector on `keep x rest`.
pub fn reduced_from_vector(psi: &ComplexVector, keep: usize, rest: usize) -> Result<DensityMatrix> {
    if psi.len() != keep * rest {
        return Err(Error::ShapeMismatch(format!(
            "vector of length {} is not a {keep}x{rest} state",
            psi.len()
        )));
    }
    let mut out = ComplexMatrix::zeros(keep, keep);
    for i in 0..keep {
        for j in 0..keep {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..rest {
                acc += psi[i * rest + k] * psi[j * rest + k].conj();
            }
            out[(i, j)] = acc;
        }
    }
    DensityMatrix::nearest(&out)
}
