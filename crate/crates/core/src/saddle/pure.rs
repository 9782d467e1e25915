//! Local minimization of `||M(|psi><psi|)||_1` over unit vectors.
//!
//! The restricted problem is not convex, so the result is only an upper bound
//! on the minimum over pure states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{best_w_from_m, symmetrized_k};
use crate::channels::ChannelFamily;
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexVector};
use crate::qfi::KrausProducts;
use crate::state::DensityMatrix;

pub const PURE_STEPS: usize = 500;

fn objective(table: &KrausProducts, psi: &ComplexVector) -> Result<f64> {
    table.fidelity(&(psi * psi.adjoint()))
}

fn descend(table: &KrausProducts, mut psi: ComplexVector) -> Result<(ComplexVector, f64)> {
    let mut value = objective(table, &psi)?;
    let mut step = f64::NAN;
    for _ in 0..PURE_STEPS {
        let rho = &psi * psi.adjoint();
        let w = best_w_from_m(&table.m_of(&rho)?)?;
        let g = symmetrized_k(table, &w)?;
        if step.is_nan() {
            let eig = numkit::hermitian_eig(&g)?;
            let spread = eig.max() - eig.min();
            step = if spread > 0.0 { 1.0 / spread } else { 1.0 };
        }
        let gpsi = &g * &psi;
        let along = psi.dotc(&gpsi);
        let grad = gpsi - &psi * along;
        if grad.norm() < 1e-15 {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let trial = &psi - grad.scale(step);
            let trial = trial.unscale(trial.norm());
            let v = objective(table, &trial)?;
            if v < value {
                psi = trial;
                value = v;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((psi, value))
}

/// Best local minimum over `restarts` seeded random starts.
pub fn pure_restricted_min_pair(
    table: &KrausProducts,
    restarts: usize,
    seed: u64,
) -> Result<(DensityMatrix, f64)> {
    if restarts == 0 {
        return Err(Error::DomainError("need at least one restart".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(ComplexVector, f64)> = None;
    for _ in 0..restarts {
        let start = numkit::random::pure_state(table.dim(), &mut rng);
        let (psi, value) = descend(table, start)?;
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((psi, value));
        }
    }
    let (mut psi, value) = best.expect("at least one restart");
    numkit::fix_phase(&mut psi);
    Ok((DensityMatrix::from_pure(&psi)?, value))
}

pub fn pure_restricted_min(
    fam: &ChannelFamily,
    x: f64,
    dx: f64,
    restarts: usize,
    seed: u64,
) -> Result<(DensityMatrix, f64)> {
    let table = KrausProducts::from_family(fam, x, dx)?;
    pure_restricted_min_pair(&table, restarts, seed)
}
