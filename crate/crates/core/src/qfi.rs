//! The `M(rho)` matrix, pure-probe fidelities and finite-difference QFI.
//!
//! For a pure probe (with or without ancilla) whose reduced system state is
//! `rho`, the output fidelity between `K_x` and `K_{x+dx}` is `||M(rho)||_1`
//! with `M(rho)_ij = Tr[rho F_i(x)^dag F_j(x+dx)]`, and the QFI is the limit
//! of `8 (1 - ||M||_1) / dx^2`.

use num_complex::Complex64;
use serde::Serialize;

use crate::channels::{ChannelFamily, KrausChannel};
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix};
use crate::state::DensityMatrix;

/// Smallest step accepted by the finite-difference formulas.
pub const MIN_DX: f64 = 1e-6;
/// Largest step accepted by the finite-difference formulas.
pub const MAX_DX: f64 = 0.1;
/// Default step for pure-probe QFI.
pub const DEFAULT_DX: f64 = 1e-3;
/// QFI values in `[-QFI_CLIP, 0)` are reported as zero.
pub const QFI_CLIP: f64 = 1e-6;

/// All `d^2` products `B_ij = F_{1i}^dag F_{2j}` between two channels.
#[derive(Debug, Clone)]
pub struct KrausProducts {
    d: usize,
    dim: usize,
    products: Vec<ComplexMatrix>,
}

impl KrausProducts {
    pub fn new(first: &KrausChannel, second: &KrausChannel) -> Result<Self> {
        if first.kraus_rank() != second.kraus_rank()
            || first.input_dim() != second.input_dim()
            || first.output_dim() != second.output_dim()
        {
            return Err(Error::ShapeMismatch(format!(
                "channel pair has shapes (d={}, {}x{}) and (d={}, {}x{})",
                first.kraus_rank(),
                first.output_dim(),
                first.input_dim(),
                second.kraus_rank(),
                second.output_dim(),
                second.input_dim()
            )));
        }
        let d = first.kraus_rank();
        let mut products = Vec::with_capacity(d * d);
        for fi in first.ops() {
            let fi_dag = fi.adjoint();
            for fj in second.ops() {
                products.push(&fi_dag * fj);
            }
        }
        Ok(Self { d, dim: first.input_dim(), products })
    }

    pub fn from_family(fam: &ChannelFamily, x: f64, dx: f64) -> Result<Self> {
        let (a, b) = fam.pair(x, dx)?;
        Self::new(&a, &b)
    }

    pub fn kraus_rank(&self) -> usize {
        self.d
    }

    /// Input dimension `m1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn product(&self, i: usize, j: usize) -> &ComplexMatrix {
        &self.products[i * self.d + j]
    }

    pub fn products(&self) -> &[ComplexMatrix] {
        &self.products
    }

    fn check_state(&self, rho: &ComplexMatrix) -> Result<()> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "state of dimension {} for channels with input dimension {}",
                rho.nrows(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `M(rho)_ij = Tr[rho B_ij]`.
    pub fn m_of(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_state(rho)?;
        Ok(ComplexMatrix::from_fn(self.d, self.d, |i, j| {
            numkit::trace_of_product(rho, self.product(i, j))
        }))
    }

    /// `K_W = sum_ij w_ij B_ij`.
    pub fn k_w(&self, w: &ComplexMatrix) -> Result<ComplexMatrix> {
        if w.nrows() != self.d || w.ncols() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "W is {}x{}, expected {}x{}",
                w.nrows(),
                w.ncols(),
                self.d,
                self.d
            )));
        }
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for i in 0..self.d {
            for j in 0..self.d {
                let wij = w[(i, j)];
                if wij != Complex64::new(0.0, 0.0) {
                    acc += self.product(i, j) * wij;
                }
            }
        }
        Ok(acc)
    }

    /// `||M(rho)||_1`, the objective of the probe-state side.
    pub fn fidelity(&self, rho: &ComplexMatrix) -> Result<f64> {
        numkit::trace_norm(&self.m_of(rho)?)
    }

    /// Remix both Kraus lists: `B~ = sum u*_ir v_js B_rs`.
    pub fn remixed(&self, u: &ComplexMatrix, v: &ComplexMatrix) -> Result<Self> {
        numkit::ensure_unitary(u)?;
        numkit::ensure_unitary(v)?;
        let d = self.d;
        let mut products = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
                for r in 0..d {
                    for s in 0..d {
                        acc += self.product(r, s) * (u[(i, r)].conj() * v[(j, s)]);
                    }
                }
                products.push(acc);
            }
        }
        Ok(Self { d, dim: self.dim, products })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    pub matrix: ComplexMatrix,
    pub x: f64,
    pub dx: f64,
}

impl MMatrix {
    pub fn trace_norm(&self) -> Result<f64> {
        numkit::trace_norm(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QfiEstimate {
    pub value: f64,
    pub dx_used: f64,
    pub extrapolated: bool,
    /// `|J(dx/2) - J(dx)|` when extrapolated, zero otherwise.
    pub truncation_estimate: f64,
}

pub fn m_matrix(rho_s: &DensityMatrix, fam: &ChannelFamily, x: f64, dx: f64) -> Result<MMatrix> {
    let table = KrausProducts::from_family(fam, x, dx)?;
    Ok(MMatrix { matrix: table.m_of(rho_s.matrix())?, x, dx })
}

/// Output fidelity `||M(rho_s)||_1` for a pure probe.
///
/// Without ancilla `rho_s` must itself be pure; with ancilla it is the reduced
/// system state of the pure probe. Checking that is left to the caller.
pub fn fidelity_pure_probe(rho_s: &DensityMatrix, fam: &ChannelFamily, x: f64, dx: f64) -> Result<f64> {
    m_matrix(rho_s, fam, x, dx)?.trace_norm()
}

pub fn check_step(dx: f64) -> Result<()> {
    if !dx.is_finite() || dx < MIN_DX {
        return Err(Error::DegenerateStep { dx });
    }
    if dx > MAX_DX {
        return Err(Error::DomainError(format!("dx = {dx} exceeds {MAX_DX}")));
    }
    Ok(())
}

/// `8 (1 - F) / dx^2`.
pub fn qfi_from_fidelity(fidelity: f64, dx: f64) -> f64 {
    8.0 * (1.0 - fidelity) / (dx * dx)
}

/// Clip tiny negative QFI values to zero; fail on clearly negative ones.
pub fn clip_qfi(j: f64) -> Result<f64> {
    if j >= 0.0 {
        Ok(j)
    } else if j >= -QFI_CLIP {
        Ok(0.0)
    } else {
        Err(Error::NumericalFailure(format!("negative QFI estimate {j:.3e}")))
    }
}

/// Combine `J(dx)` and `J(dx/2)` as `(4 J(dx/2) - J(dx)) / 3`.
pub fn richardson(coarse: f64, fine: f64, dx: f64) -> Result<QfiEstimate> {
    Ok(QfiEstimate {
        value: clip_qfi((4.0 * fine - coarse) / 3.0)?,
        dx_used: dx,
        extrapolated: true,
        truncation_estimate: (fine - coarse).abs(),
    })
}

pub fn qfi_pure_probe(
    rho_s: &DensityMatrix,
    fam: &ChannelFamily,
    x: f64,
    dx: f64,
    richardson_step: bool,
) -> Result<QfiEstimate> {
    check_step(dx)?;
    let coarse = qfi_from_fidelity(fidelity_pure_probe(rho_s, fam, x, dx)?, dx);
    if !richardson_step {
        return Ok(QfiEstimate {
            value: clip_qfi(coarse)?,
            dx_used: dx,
            extrapolated: false,
            truncation_estimate: 0.0,
        });
    }
    let half = dx / 2.0;
    let fine = qfi_from_fidelity(fidelity_pure_probe(rho_s, fam, x, half)?, half);
    richardson(coarse, fine, dx)
}

/// `J = 4 B^2 / dx^2`.
pub fn qfi_from_bures_angle(b: f64, dx: f64) -> Result<f64> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&b) {
        return Err(Error::DomainError(format!("Bures angle {b} outside [0, pi/2]")));
    }
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::DomainError(format!("dx = {dx} must be positive")));
    }
    Ok(4.0 * b * b / (dx * dx))
}

/// Equivalent Kraus representation `F~_i = sum_r u_ir F_r`.
pub fn representation_remix(ch: &KrausChannel, u: &ComplexMatrix) -> Result<KrausChannel> {
    let d = ch.kraus_rank();
    if u.nrows() != d || u.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "remix unitary is {}x{}, channel has Kraus rank {d}",
            u.nrows(),
            u.ncols()
        )));
    }
    numkit::ensure_unitary(u)?;
    let ops = (0..d)
        .map(|i| {
            let mut acc = ComplexMatrix::zeros(ch.output_dim(), ch.input_dim());
            for (r, f) in ch.ops().iter().enumerate() {
                acc += f * u[(i, r)];
            }
            acc
        })
        .collect();
    KrausChannel::new(ops)
}
