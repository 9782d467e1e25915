//! When an ancillary system cannot improve the precision limit.
//!
//! If every product `F_i(x)^dag F_j(x+dx)` is diagonal in one orthonormal
//! basis, `||M(rho)||_1` only sees the diagonal of `rho` in that basis, and the
//! pure state with amplitudes `sqrt(rho_ii)` does as well as any mixed one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channels::ChannelFamily;
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix, ComplexVector};
use crate::qfi::{self, KrausProducts};
use crate::saddle::SaddleResult;
use crate::state::DensityMatrix;

/// Default tolerance for the diagonalizability test.
pub const DEFAULT_DIAG_TOL: f64 = 1e-8;
/// Default tolerance, in QFI units, when comparing extended and pure-restricted optima.
pub const DEFAULT_QFI_COMPARE_TOL: f64 = 1e-4;
const BASIS_SEED: u64 = 0x5eed_ba51;
/// Above this many matrices the pairwise commutator pass is replaced by the
/// (stronger) check that the constructed basis diagonalizes every input.
const PAIRWISE_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct DiagonalizabilityReport {
    pub simultaneous: bool,
    pub common_basis: Option<ComplexMatrix>,
    /// Largest `||offdiag(Q^dag A Q)||_F / ||A||_F`.
    pub max_offdiag_residual: f64,
    /// Largest `||[A, B]||_F` or `||[A, B^dag]||_F` seen, including `[A, A^dag]`.
    pub max_commutator_norm: f64,
}

impl DiagonalizabilityReport {
    fn rejected(max_commutator_norm: f64, max_offdiag_residual: f64) -> Self {
        Self { simultaneous: false, common_basis: None, max_offdiag_residual, max_commutator_norm }
    }
}

fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    numkit::frobenius(&(a * b - b * a))
}

fn offdiag_norm(m: &ComplexMatrix) -> f64 {
    let mut acc = 0.0;
    for (idx, z) in m.iter().enumerate() {
        if idx % m.nrows() != idx / m.nrows() {
            acc += z.norm_sqr();
        }
    }
    acc.sqrt()
}

/// Tests simultaneous unitary diagonalizability of `mats`.
pub fn simultaneously_diagonalizable(mats: &[ComplexMatrix], tol: f64) -> Result<DiagonalizabilityReport> {
    let Some(first) = mats.first() else {
        return Err(Error::ShapeMismatch("no matrices given".into()));
    };
    let n = first.nrows();
    if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(Error::ShapeMismatch("matrices must be square with equal dimensions".into()));
    }

    let mut max_comm = 0.0f64;
    for a in mats {
        max_comm = max_comm.max(commutator_norm(a, &a.adjoint()));
    }
    if max_comm > tol {
        return Ok(DiagonalizabilityReport::rejected(max_comm, f64::NAN));
    }
    if mats.len() <= PAIRWISE_LIMIT {
        for (i, a) in mats.iter().enumerate() {
            for b in &mats[i + 1..] {
                max_comm = max_comm.max(commutator_norm(a, b)).max(commutator_norm(a, &b.adjoint()));
            }
        }
        if max_comm > tol {
            return Ok(DiagonalizabilityReport::rejected(max_comm, f64::NAN));
        }
    }

    // a generic Hermitian combination separates the joint eigenspaces
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEED);
    let mut h = ComplexMatrix::zeros(n, n);
    let i = num_complex::Complex64::i();
    for a in mats {
        let herm = numkit::hermitian_part(a);
        let anti = (a - a.adjoint()) * (-0.5 * i);
        let c1: f64 = StandardNormal.sample(&mut rng);
        let c2: f64 = StandardNormal.sample(&mut rng);
        h += herm.scale(c1) + anti.scale(c2);
    }
    let eig = numkit::hermitian_eig(&numkit::hermitian_part(&h))?;
    let mut q = eig.eigenvectors;
    for k in 0..n {
        let mut col = q.column(k).into_owned();
        numkit::fix_phase(&mut col);
        q.set_column(k, &col);
    }

    let mut max_resid = 0.0f64;
    for a in mats {
        let scale = numkit::frobenius(a);
        if scale == 0.0 {
            continue;
        }
        let rotated = q.adjoint() * a * &q;
        max_resid = max_resid.max(offdiag_norm(&rotated) / scale);
    }
    if max_resid > tol {
        return Ok(DiagonalizabilityReport::rejected(max_comm, max_resid));
    }
    Ok(DiagonalizabilityReport {
        simultaneous: true,
        common_basis: Some(q),
        max_offdiag_residual: max_resid,
        max_commutator_norm: max_comm,
    })
}

pub fn ancilla_unnecessary_sufficient_pair(table: &KrausProducts, tol: f64) -> Result<DiagonalizabilityReport> {
    simultaneously_diagonalizable(table.products(), tol)
}

/// Applies [`simultaneously_diagonalizable`] to all products `F_i(x)^dag F_j(x+dx)`.
pub fn ancilla_unnecessary_sufficient(
    fam: &ChannelFamily,
    x: f64,
    dx: f64,
    tol: f64,
) -> Result<DiagonalizabilityReport> {
    ancilla_unnecessary_sufficient_pair(&KrausProducts::from_family(fam, x, dx)?, tol)
}

/// `true` when the extended optimum beats every pure probe found.
///
/// The comparison is made in QFI units at the result's step: ancilla is
/// unnecessary when `rho_opt` is pure or when
/// `J(pure_value) >= J(res) - tol`.
pub fn ancilla_needed_exact(res: &SaddleResult, pure_value: f64, tol: f64) -> Result<bool> {
    if !res.converged {
        return Err(Error::NotConverged { gap: res.gap, iterations: res.iterations });
    }
    if res.rho_opt.purity() >= 1.0 - tol {
        return Ok(false);
    }
    let j_pure = qfi::qfi_from_fidelity(pure_value, res.dx);
    let j_ext = qfi::qfi_from_fidelity(res.value(), res.dx);
    Ok(j_ext - j_pure > tol)
}

/// Pure state `sum_i sqrt(<q_i|rho|q_i>) |q_i>` over the columns of `basis`.
pub fn pure_state_in_basis(rho: &DensityMatrix, basis: &ComplexMatrix) -> Result<ComplexVector> {
    if basis.nrows() != rho.dim() || basis.ncols() != rho.dim() {
        return Err(Error::ShapeMismatch(format!(
            "basis is {}x{}, state has dimension {}",
            basis.nrows(),
            basis.ncols(),
            rho.dim()
        )));
    }
    let rotated = basis.adjoint() * rho.matrix() * basis;
    let amps = ComplexVector::from_fn(rho.dim(), |k, _| {
        num_complex::Complex64::new(rotated[(k, k)].re.max(0.0).sqrt(), 0.0)
    });
    let psi = basis * amps;
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(Error::NumericalFailure("state has zero weight in the basis".into()));
    }
    Ok(psi.unscale(norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{dephasing, spontaneous_emission, unitary_family, xy_noise};
    use crate::numkit::random;
    use crate::saddle::{pure_restricted_min_pair, solve_table, SaddleOptions};

    #[test]
    fn diagonal_inputs_pass() {
        let mats = vec![numkit::real_diag(&[1.0, 2.0, 3.0]), numkit::real_diag(&[0.5, -1.0, 0.0])];
        let rep = simultaneously_diagonalizable(&mats, 1e-10).unwrap();
        assert!(rep.simultaneous);
        let q = rep.common_basis.unwrap();
        // a permutation up to phases
        for z in q.iter() {
            assert!(z.norm() < 1e-12 || (z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pauli_pair_fails() {
        let rep = simultaneously_diagonalizable(&[numkit::pauli_x(), numkit::pauli_y()], 1e-8).unwrap();
        assert!(!rep.simultaneous);
        assert!(rep.common_basis.is_none());
        assert!(rep.max_commutator_norm > 1.0);
    }

    #[test]
    fn shape_errors() {
        assert!(simultaneously_diagonalizable(&[], 1e-8).is_err());
        let mats = vec![numkit::identity(2), numkit::identity(3)];
        assert!(matches!(simultaneously_diagonalizable(&mats, 1e-8), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zoo_sufficient_condition() {
        for &eta in &[0.2, 0.5, 0.9] {
            assert!(ancilla_unnecessary_sufficient(&dephasing(eta).unwrap(), 0.1, 0.01, DEFAULT_DIAG_TOL)
                .unwrap()
                .simultaneous);
            assert!(ancilla_unnecessary_sufficient(&xy_noise(eta).unwrap(), 0.1, 0.01, DEFAULT_DIAG_TOL)
                .unwrap()
                .simultaneous);
            let rep = ancilla_unnecessary_sufficient(&spontaneous_emission(eta).unwrap(), 0.1, 0.01, DEFAULT_DIAG_TOL)
                .unwrap();
            assert!(!rep.simultaneous);
        }
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(60);
        let h = random::hermitian(3, &mut rng);
        assert!(ancilla_unnecessary_sufficient(&unitary_family(&h, 1.0).unwrap(), 0.0, 0.01, DEFAULT_DIAG_TOL)
            .unwrap()
            .simultaneous);
    }

    #[test]
    fn basis_residuals_respect_tolerance() {
        let table = KrausProducts::from_family(&xy_noise(0.4).unwrap(), 0.3, 0.02).unwrap();
        let rep = ancilla_unnecessary_sufficient_pair(&table, 1e-9).unwrap();
        assert!(rep.simultaneous && rep.max_offdiag_residual <= 1e-9);
    }

    #[test]
    fn off_diagonal_noise_flips_report() {
        let table = KrausProducts::from_family(&dephasing(0.5).unwrap(), 0.0, 0.01).unwrap();
        let noise = numkit::from_rows(2, 2, &[numkit::c(0., 0.), numkit::c(1e-3, 0.), numkit::c(0., 0.), numkit::c(0., 0.)])
            .unwrap();
        let mut mats = table.products().to_vec();
        assert!(simultaneously_diagonalizable(&mats, 1e-6).unwrap().simultaneous);
        mats[1] += &noise;
        assert!(!simultaneously_diagonalizable(&mats, 1e-6).unwrap().simultaneous);
    }

    #[test]
    fn exact_check_examples() {
        let dx = 0.01;
        let opts = SaddleOptions::with_tol(1e-12);
        let cases: Vec<(ChannelFamily, bool)> = vec![
            (dephasing(0.6).unwrap(), false),
            (spontaneous_emission(0.5).unwrap(), true),
            (unitary_family(&numkit::pauli_z().scale(0.5), 1.0).unwrap(), false),
        ];
        for (fam, needed) in cases {
            let table = KrausProducts::from_family(&fam, 0.0, dx).unwrap();
            let res = solve_table(&table, 0.0, dx, &opts).unwrap();
            let (_, pure) = pure_restricted_min_pair(&table, 3, 2).unwrap();
            assert_eq!(ancilla_needed_exact(&res, pure, DEFAULT_QFI_COMPARE_TOL).unwrap(), needed, "{}", fam.label());
        }
    }

    #[test]
    fn pure_state_reproduces_diagonal() {
        let rho = DensityMatrix::from_diagonal(&[0.5, 0.0, 0.0, 0.5]).unwrap();
        let psi = pure_state_in_basis(&rho, &numkit::identity(4)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi[0].re - s).abs() < 1e-15 && (psi[3].re - s).abs() < 1e-15);
        assert!(psi[1].norm() == 0.0);
    }
}
