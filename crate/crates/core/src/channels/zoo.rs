use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{ChannelFamily, KrausChannel};
use crate::error::{Error, Result};
use crate::numkit::{self, c, ComplexMatrix};

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::DomainError(format!("eta = {eta} must lie in [0, 1]")));
    }
    Ok(())
}

/// `exp(-i sigma_3 x / 2)`.
fn phase_rotation(x: f64) -> ComplexMatrix {
    numkit::diag(&[Complex64::from_polar(1.0, -x / 2.0), Complex64::from_polar(1.0, x / 2.0)])
}

fn eta_params(eta: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([("eta".to_string(), eta)])
}

/// Phase estimation with dephasing: `F1 = sqrt((1+eta)/2) U`, `F2 = sqrt((1-eta)/2) sigma_3 U`.
pub fn dephasing(eta: f64) -> Result<ChannelFamily> {
    check_eta(eta)?;
    let a = ((1.0 + eta) / 2.0).sqrt();
    let b = ((1.0 - eta) / 2.0).sqrt();
    ChannelFamily::new("dephasing", eta_params(eta), move |x| {
        let u = phase_rotation(x);
        KrausChannel::new_unchecked(vec![u.scale(a), numkit::pauli_z() * u.scale(b)])
    })
}

/// Phase estimation with spontaneous emission (amplitude damping after the phase).
pub fn spontaneous_emission(eta: f64) -> Result<ChannelFamily> {
    check_eta(eta)?;
    let keep = numkit::real_diag(&[1.0, eta.sqrt()]);
    let decay = numkit::from_rows(2, 2, &[c(0., 0.), c((1.0 - eta).sqrt(), 0.), c(0., 0.), c(0., 0.)])?;
    ChannelFamily::new("spontaneous-emission", eta_params(eta), move |x| {
        let u = phase_rotation(x);
        KrausChannel::new_unchecked(vec![&keep * &u, &decay * &u])
    })
}

/// Phase estimation with noise along X and Y.
pub fn xy_noise(eta: f64) -> Result<ChannelFamily> {
    check_eta(eta)?;
    let a = ((1.0 + eta) / 2.0).sqrt();
    let b = ((1.0 - eta) / 2.0).sqrt();
    ChannelFamily::new("xy-noise", eta_params(eta), move |x| {
        let u = phase_rotation(x);
        KrausChannel::new_unchecked(vec![
            numkit::pauli_x() * u.scale(a),
            numkit::pauli_y() * u.scale(b),
        ])
    })
}

/// Single-Kraus family `U(x) = exp(-i h t x)`.
pub fn unitary_family(h: &ComplexMatrix, t: f64) -> Result<ChannelFamily> {
    // validates Hermiticity up front
    let eig = numkit::hermitian_eig(h)?;
    let h = h.clone();
    let params = BTreeMap::from([
        ("t".to_string(), t),
        ("lambda_spread".to_string(), eig.max() - eig.min()),
    ]);
    ChannelFamily::new("unitary", params, move |x| {
        KrausChannel::new_unchecked(vec![numkit::unitary_from_hamiltonian(&h, t * x)?])
    })
}

fn counterexample_channel(dx: f64, second: bool) -> Result<KrausChannel> {
    if dx.abs() > 1.0 {
        return Err(Error::DomainError(format!(
            "counterexample channel needs |x| <= 1, got {dx}"
        )));
    }
    let alpha = (1.0 - dx * dx).sqrt();
    let beta = dx.abs();
    let f1 = numkit::real_diag(&[alpha; 8]);
    let f2 = if second {
        numkit::real_diag(&[beta, beta, -beta, -beta, beta, beta, -beta, -beta])
    } else {
        numkit::diag(&[
            c(beta, 0.),
            c(-beta, 0.),
            c(beta, 0.),
            c(-beta, 0.),
            c(0., beta),
            c(0., -beta),
            c(0., beta),
            c(0., -beta),
        ])
    };
    KrausChannel::new_unchecked(vec![f1, f2])
}

/// The two 8-dimensional channels `(K_1(dx), K_2(dx))` whose optimal `W` is not unitary.
pub fn counterexample_pair(dx: f64) -> Result<(KrausChannel, KrausChannel)> {
    let k1 = counterexample_channel(dx, false)?;
    let k2 = counterexample_channel(dx, true)?;
    k1.validate()?;
    k2.validate()?;
    Ok((k1, k2))
}

/// `x -> K_1(x)` for `x <= 0`, `K_2(x)` for `x > 0`.
pub fn counterexample_8d() -> Result<ChannelFamily> {
    ChannelFamily::new("counterexample", BTreeMap::new(), |x| {
        counterexample_channel(x, x > 0.0)
    })
}
