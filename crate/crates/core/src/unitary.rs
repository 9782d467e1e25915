//! Closed-form precision limits for unitary channels.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix, STRUCTURAL_TOL};

/// Phases `theta_j` in `(-pi, pi]` of the eigenvalues `e^{-i theta_j}`, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenAngles {
    pub angles: Vec<f64>,
}

impl EigenAngles {
    pub fn max(&self) -> f64 {
        self.angles[0]
    }

    pub fn min(&self) -> f64 {
        *self.angles.last().expect("non-empty")
    }

    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }
}

fn to_branch(theta: f64) -> f64 {
    // (-pi, pi], with -pi sent to pi
    let mut t = theta;
    while t <= -PI {
        t += 2.0 * PI;
    }
    while t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn eigen_angles(u: &ComplexMatrix) -> Result<EigenAngles> {
    numkit::ensure_finite(u)?;
    let residual = numkit::unitarity_residual(u);
    if residual > STRUCTURAL_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let schur = nalgebra::linalg::Schur::try_new(u.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut angles: Vec<f64> = t.diagonal().iter().map(|z| to_branch(-z.arg())).collect();
    angles.sort_by(|a, b| b.total_cmp(a));
    Ok(EigenAngles { angles })
}

/// `B(U1, U2) = (theta_max - theta_min) / 2` for the eigen-angles of `U1^dag U2`.
pub fn bures_angle_unitaries(u1: &ComplexMatrix, u2: &ComplexMatrix) -> Result<f64> {
    if u1.shape() != u2.shape() {
        return Err(Error::ShapeMismatch(format!(
            "unitaries of shapes {:?} and {:?}",
            u1.shape(),
            u2.shape()
        )));
    }
    numkit::ensure_unitary(u1)?;
    let angles = eigen_angles(&(u1.adjoint() * u2))?;
    let spread = angles.spread();
    if spread > PI + 1e-12 {
        return Err(Error::AngleSpreadExceeded { spread });
    }
    Ok(spread / 2.0)
}

/// Heisenberg-limited QFI `N^2 (lambda_max - lambda_min)^2 t^2` of `(e^{-i h t x})^{(x) N}`.
pub fn max_qfi_unitary(h: &ComplexMatrix, t: f64, n_probes: usize) -> Result<f64> {
    if n_probes == 0 {
        return Err(Error::DomainError("need at least one probe".into()));
    }
    let eig = numkit::hermitian_eig(h)?;
    let spread = eig.max() - eig.min();
    let n = n_probes as f64;
    Ok(n * n * spread * spread * t * t)
}

/// Cramer-Rao bound `1 / sqrt(n J)` on the standard deviation after `n` repetitions.
pub fn precision_bound(j: f64, n_repeats: usize) -> Result<f64> {
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::DomainError(format!(
            "Fisher information must be positive and finite, got {j}"
        )));
    }
    if n_repeats == 0 {
        return Err(Error::DomainError("need at least one repetition".into()));
    }
    Ok(1.0 / (n_repeats as f64 * j).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{c, random};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_z() -> ComplexMatrix {
        numkit::pauli_z().scale(0.5)
    }

    #[test]
    fn eigen_angle_examples() {
        let a = eigen_angles(&numkit::identity(3)).unwrap();
        assert!(a.angles.iter().all(|t| t.abs() < 1e-15));

        let u = numkit::unitary_from_hamiltonian(&half_z(), 1.0).unwrap();
        let a = eigen_angles(&u).unwrap();
        assert!((a.angles[0] - 0.5).abs() < 1e-14);
        assert!((a.angles[1] + 0.5).abs() < 1e-14);

        let u = numkit::diag(&[Complex64::from_polar(1.0, -PI), c(1.0, 0.0)]);
        let a = eigen_angles(&u).unwrap();
        assert!((a.angles[0] - PI).abs() < 1e-14);
        assert!(a.angles[1].abs() < 1e-15);

        let exact = numkit::diag(&[c(-1.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(eigen_angles(&exact).unwrap().angles[0], PI);
    }

    #[test]
    fn non_unitary_rejected() {
        assert!(matches!(
            eigen_angles(&numkit::real_diag(&[1.0, 0.5])),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn bures_angle_examples() {
        let id = numkit::identity(2);
        assert!(bures_angle_unitaries(&id, &id).unwrap().abs() < 1e-15);
        for &t in &[0.3, 1.0, 2.5, 3.0] {
            let u = numkit::unitary_from_hamiltonian(&half_z(), t).unwrap();
            assert!((bures_angle_unitaries(&id, &u).unwrap() - t / 2.0).abs() < 1e-12);
        }
        let wide = numkit::unitary_from_hamiltonian(&half_z(), 3.5).unwrap();
        assert!(matches!(
            bures_angle_unitaries(&id, &wide),
            Err(Error::AngleSpreadExceeded { .. })
        ));
    }

    #[test]
    fn heisenberg_bures_angle() {
        let dx = 1e-3;
        let t = 1.0;
        let single = numkit::unitary_from_hamiltonian(&half_z(), dx * t).unwrap();
        let mut u = single.clone();
        for _ in 1..3 {
            u = numkit::kron(&u, &single).unwrap();
        }
        let b = bures_angle_unitaries(&numkit::identity(8), &u).unwrap();
        assert!((b - 3.0 * 1.0 * dx * t / 2.0).abs() < 1e-14);
    }

    #[test]
    fn reduction_and_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h1 = random::hermitian(3, &mut rng).scale(0.2);
        let h2 = random::hermitian(3, &mut rng).scale(0.2);
        let u = numkit::unitary_from_hamiltonian(&h1, 1.0).unwrap();
        let v = numkit::unitary_from_hamiltonian(&h2, 1.0).unwrap();
        let direct = bures_angle_unitaries(&u, &v).unwrap();
        let reduced = bures_angle_unitaries(&numkit::identity(3), &(u.adjoint() * &v)).unwrap();
        assert_eq!(direct, reduced);
        let phased = (u.adjoint() * &v).map(|z| z * Complex64::from_polar(1.0, 0.4));
        let shifted = bures_angle_unitaries(&numkit::identity(3), &phased).unwrap();
        assert!((shifted - reduced).abs() < 1e-12);
    }

    #[test]
    fn max_qfi_examples() {
        assert!((max_qfi_unitary(&half_z(), 1.0, 1).unwrap() - 1.0).abs() < 1e-14);
        let r = max_qfi_unitary(&half_z(), 1.0, 4).unwrap() / max_qfi_unitary(&half_z(), 1.0, 2).unwrap();
        assert!((r - 4.0).abs() < 1e-12);
        assert_eq!(max_qfi_unitary(&numkit::identity(2), 1.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn precision_bound_examples() {
        assert_eq!(precision_bound(1.0, 1).unwrap(), 1.0);
        assert!((precision_bound(4.0, 25).unwrap() - 0.1).abs() < 1e-15);
        for n in 1..=5usize {
            let j = max_qfi_unitary(&half_z(), 1.0, n).unwrap();
            assert!((precision_bound(j, 1).unwrap() - 1.0 / n as f64).abs() < 1e-14);
        }
        assert!(precision_bound(0.0, 1).is_err());
        assert!(precision_bound(-1.0, 1).is_err());
    }
}
