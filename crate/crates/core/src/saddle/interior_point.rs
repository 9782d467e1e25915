//! Primal-dual interior point (HKM direction, Mehrotra predictor-corrector) on
//!
//! ```text
//! max  t/2  s.t.  [[I, W^dag], [W, I]] >= 0,   K_W + K_W^dag - t I >= 0
//! ```
//!
//! with real variables `y = (t, Re w_ab, Im w_ab)`. The primal block `X2`
//! normalized to unit trace is the probe-side iterate.

use nalgebra::{Cholesky, DMatrix, DVector, LU};
use num_complex::Complex64;

use super::{lower_certificate, upper_certificate, SaddleOptions, Tracker};
use crate::error::Result;
use crate::numkit::{self, ComplexMatrix};
use crate::qfi::KrausProducts;
use crate::state::DensityMatrix;

/// Iterations without a better gap before giving up.
const STALL_WINDOW: usize = 4;
const MIN_STEP: f64 = 1e-9;

#[derive(Clone)]
struct Blocks {
    b1: ComplexMatrix,
    b2: ComplexMatrix,
}

impl Blocks {
    fn inner(&self, other: &Blocks) -> f64 {
        numkit::trace_of_product(&self.b1, &other.b1).re + numkit::trace_of_product(&self.b2, &other.b2).re
    }

    fn axpy(&self, alpha: f64, dir: &Blocks) -> Blocks {
        Blocks { b1: &self.b1 + dir.b1.scale(alpha), b2: &self.b2 + dir.b2.scale(alpha) }
    }
}

/// Sparse entry `(row, col, value)` of a block-1 constraint matrix.
type Entry = (usize, usize, Complex64);

struct Sdp<'a> {
    table: &'a KrausProducts,
    d: usize,
    m1: usize,
    nvar: usize,
    a2: Vec<ComplexMatrix>,
    /// Row `i` holds `[Re vec A2_i, Im vec A2_i]`.
    p: DMatrix<f64>,
}

fn realvec_into(m: &ComplexMatrix, out: &mut [f64]) {
    let len = m.len();
    for (k, z) in m.iter().enumerate() {
        out[k] = z.re;
        out[len + k] = z.im;
    }
}

fn inverse(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    Cholesky::new(numkit::hermitian_part(m)).map(|c| c.inverse())
}

/// Largest `alpha` keeping `m + alpha dm` positive semidefinite (infinite if unbounded).
fn max_step(m: &ComplexMatrix, dm: &ComplexMatrix) -> Option<f64> {
    let chol = Cholesky::new(numkit::hermitian_part(m))?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dm)?;
    let s = l.solve_lower_triangular(&t.adjoint())?;
    let lmin = numkit::hermitian_eig(&numkit::hermitian_part(&s)).ok()?.min();
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(h: DMatrix<f64>) -> Option<Self> {
        let sym = (&h + h.transpose()).scale(0.5);
        if let Some(c) = Cholesky::new(sym.clone()) {
            return Some(Factor::Chol(c));
        }
        let lu = LU::new(sym);
        lu.is_invertible().then_some(Factor::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let sol = match self {
            Factor::Chol(c) => c.solve(rhs),
            Factor::Lu(l) => l.solve(rhs)?,
        };
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }
}

impl<'a> Sdp<'a> {
    fn new(table: &'a KrausProducts) -> Self {
        let d = table.kraus_rank();
        let m1 = table.dim();
        let nvar = 1 + 2 * d * d;
        let mut a2 = Vec::with_capacity(nvar);
        a2.push(numkit::identity(m1));
        let i = Complex64::i();
        for a in 0..d {
            for b in 0..d {
                let bab = table.product(a, b);
                let bdag = bab.adjoint();
                a2.push(-(bab + &bdag));
                a2.push((bab - &bdag) * (-i));
            }
        }
        let len = m1 * m1;
        let mut p = DMatrix::zeros(nvar, 2 * len);
        let mut buf = vec![0.0; 2 * len];
        for (row, a) in a2.iter().enumerate() {
            realvec_into(a, &mut buf);
            for (k, v) in buf.iter().enumerate() {
                p[(row, k)] = *v;
            }
        }
        Self { table, d, m1, nvar, a2, p }
    }

    fn block1_entries(&self, var: usize) -> [Entry; 2] {
        let k = (var - 1) / 2;
        let (a, b) = (k / self.d, k % self.d);
        let (r, c) = (self.d + a, b);
        if (var - 1).is_multiple_of(2) {
            [(r, c, Complex64::new(-1.0, 0.0)), (c, r, Complex64::new(-1.0, 0.0))]
        } else {
            [(r, c, Complex64::new(0.0, -1.0)), (c, r, Complex64::new(0.0, 1.0))]
        }
    }

    /// `A(M)_i = Re Tr(A_i M)`.
    fn op_a(&self, m: &Blocks) -> DVector<f64> {
        let mut buf = vec![0.0; 2 * self.m1 * self.m1];
        realvec_into(&m.b2, &mut buf);
        let mut out = &self.p * DVector::from_vec(buf);
        for var in 1..self.nvar {
            for (r, c, v) in self.block1_entries(var) {
                out[var] += (v * m.b1[(c, r)]).re;
            }
        }
        out
    }

    /// `A*(y) = sum_i y_i A_i`.
    fn op_at(&self, y: &DVector<f64>) -> Blocks {
        let flat = self.p.tr_mul(y);
        let len = self.m1 * self.m1;
        let b2 = ComplexMatrix::from_fn(self.m1, self.m1, |r, c| {
            let k = c * self.m1 + r;
            Complex64::new(flat[k], flat[len + k])
        });
        let mut b1 = ComplexMatrix::zeros(2 * self.d, 2 * self.d);
        for var in 1..self.nvar {
            for (r, c, v) in self.block1_entries(var) {
                b1[(r, c)] += v * y[var];
            }
        }
        Blocks { b1, b2 }
    }

    fn c_matrix(&self) -> Blocks {
        Blocks { b1: numkit::identity(2 * self.d), b2: ComplexMatrix::zeros(self.m1, self.m1) }
    }

    fn b_vector(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.nvar);
        b[0] = 0.5;
        b
    }

    fn w_from_y(&self, y: &DVector<f64>) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.d, self.d, |a, b| {
            let k = a * self.d + b;
            Complex64::new(y[1 + 2 * k], y[2 + 2 * k])
        })
    }

    /// `H_ij = Re Tr(A_i X A_j Z^-1)`.
    fn schur(&self, x: &Blocks, zi: &Blocks) -> DMatrix<f64> {
        let len = self.m1 * self.m1;
        let mut qt = DMatrix::zeros(2 * len, self.nvar);
        let mut buf = vec![0.0; 2 * len];
        for (j, a) in self.a2.iter().enumerate() {
            let g = &x.b2 * a * &zi.b2;
            realvec_into(&g, &mut buf);
            qt.column_mut(j).copy_from_slice(&buf);
        }
        let mut h = &self.p * qt;
        for i in 1..self.nvar {
            let ei = self.block1_entries(i);
            for j in 1..self.nvar {
                let ej = self.block1_entries(j);
                let mut acc = Complex64::new(0.0, 0.0);
                for &(r, c, v) in &ei {
                    for &(r2, c2, v2) in &ej {
                        acc += v * v2 * x.b1[(c, r2)] * zi.b1[(c2, r)];
                    }
                }
                h[(i, j)] += acc.re;
            }
        }
        h
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        x: &Blocks,
        zi: &Blocks,
        rp: &DVector<f64>,
        rd: &Blocks,
        sigma_mu: f64,
        corr: Option<&Blocks>,
        factor: &Factor,
    ) -> Option<(Blocks, DVector<f64>, Blocks)> {
        let partial = |xb: &ComplexMatrix, zib: &ComplexMatrix, rdb: &ComplexMatrix, cb: Option<&ComplexMatrix>| {
            let mut r = zib.scale(sigma_mu) - xb - xb * rdb * zib;
            if let Some(cb) = cb {
                r -= cb;
            }
            r
        };
        let r = Blocks {
            b1: partial(&x.b1, &zi.b1, &rd.b1, corr.map(|c| &c.b1)),
            b2: partial(&x.b2, &zi.b2, &rd.b2, corr.map(|c| &c.b2)),
        };
        let rhs = rp - self.op_a(&r);
        let dy = factor.solve(&rhs)?;
        let at = self.op_at(&dy);
        let dz = Blocks { b1: &rd.b1 - &at.b1, b2: &rd.b2 - &at.b2 };
        let full = |xb: &ComplexMatrix, zib: &ComplexMatrix, dzb: &ComplexMatrix, cb: Option<&ComplexMatrix>| {
            let mut m = zib.scale(sigma_mu) - xb - xb * dzb * zib;
            if let Some(cb) = cb {
                m -= cb;
            }
            numkit::hermitian_part(&m)
        };
        let dx = Blocks {
            b1: full(&x.b1, &zi.b1, &dz.b1, corr.map(|c| &c.b1)),
            b2: full(&x.b2, &zi.b2, &dz.b2, corr.map(|c| &c.b2)),
        };
        Some((dx, dy, dz))
    }

    fn step_lengths(&self, x: &Blocks, dx: &Blocks, z: &Blocks, dz: &Blocks) -> Option<(f64, f64)> {
        let ap = max_step(&x.b1, &dx.b1)?.min(max_step(&x.b2, &dx.b2)?);
        let ad = max_step(&z.b1, &dz.b1)?.min(max_step(&z.b2, &dz.b2)?);
        Some((ap.min(1.0), ad.min(1.0)))
    }

    /// One predictor-corrector step; `None` on numerical breakdown.
    fn step(&self, x: &Blocks, y: &DVector<f64>, z: &Blocks) -> Option<(Blocks, DVector<f64>, Blocks)> {
        let n = (2 * self.d + self.m1) as f64;
        let zi = Blocks { b1: inverse(&z.b1)?, b2: inverse(&z.b2)? };
        let mu = x.inner(z) / n;
        let rp = self.b_vector() - self.op_a(x);
        let c = self.c_matrix();
        let at = self.op_at(y);
        let rd = Blocks { b1: &c.b1 - &z.b1 - &at.b1, b2: &c.b2 - &z.b2 - &at.b2 };
        let factor = Factor::new(self.schur(x, &zi))?;

        let (dxp, _, dzp) = self.direction(x, &zi, &rp, &rd, 0.0, None, &factor)?;
        let (ap, ad) = self.step_lengths(x, &dxp, z, &dzp)?;
        let mu_aff = x.axpy(ap, &dxp).inner(&z.axpy(ad, &dzp)) / n;
        let expo = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powf(expo);
        let corr = Blocks { b1: &dxp.b1 * &dzp.b1 * &zi.b1, b2: &dxp.b2 * &dzp.b2 * &zi.b2 };

        let (dx, dy, dz) = self.direction(x, &zi, &rp, &rd, sigma * mu, Some(&corr), &factor)?;
        let (ap, ad) = self.step_lengths(x, &dx, z, &dz)?;
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < MIN_STEP && ad < MIN_STEP {
            return None;
        }
        Some((x.axpy(ap, &dx), y + dy.scale(ad), z.axpy(ad, &dz)))
    }

    fn certify(&self, x: &Blocks, y: &DVector<f64>, tracker: &mut Tracker) -> Result<()> {
        let rho = DensityMatrix::nearest(&x.b2)?;
        let (upper, w_primal) = upper_certificate(self.table, &rho)?;
        let (lower_primal, w_primal) = lower_certificate(self.table, &w_primal)?;
        let (lower_dual, w_dual) = lower_certificate(self.table, &self.w_from_y(y))?;
        if lower_dual >= lower_primal {
            tracker.record(&rho, upper, &w_dual, lower_dual);
        } else {
            tracker.record(&rho, upper, &w_primal, lower_primal);
        }
        Ok(())
    }
}

pub(super) fn solve(table: &KrausProducts, opts: &SaddleOptions) -> Result<Tracker> {
    let sdp = Sdp::new(table);
    let mut x = Blocks { b1: numkit::identity(2 * sdp.d), b2: numkit::identity(sdp.m1) };
    let mut y = DVector::zeros(sdp.nvar);
    // t = -1, W = 0 makes both slack blocks the identity
    y[0] = -1.0;
    let at = sdp.op_at(&y);
    let c = sdp.c_matrix();
    let mut z = Blocks { b1: &c.b1 - &at.b1, b2: &c.b2 - &at.b2 };

    let mut tracker = Tracker::new();
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0usize;
    for iter in 0..opts.max_iter {
        sdp.certify(&x, &y, &mut tracker)?;
        let gap = tracker.gap();
        log::trace!("ipm iter {iter}: gap {gap:.3e}, mu {:.3e}", x.inner(&z));
        if gap <= opts.tol {
            break;
        }
        if gap < best_gap * (1.0 - 1e-3) {
            best_gap = gap;
            stalled = 0;
        } else if x.inner(&z) < 0.1 * gap {
            // the central path has moved past what the certificates can resolve
            stalled += 1;
            if stalled >= STALL_WINDOW {
                break;
            }
        }
        match sdp.step(&x, &y, &z) {
            Some((nx, ny, nz)) => {
                x = nx;
                y = ny;
                z = nz;
            }
            None => {
                log::debug!("interior point stopped at iteration {iter}: numerical breakdown");
                break;
            }
        }
    }
    Ok(tracker)
}
