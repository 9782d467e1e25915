//! Certified solution of
//! `min_rho max_{||W|| <= 1} 1/2 Tr[rho (K_W + K_W^dag)]`, the cosine of the
//! Bures angle between the extended channels `K_x (x) I` and `K_{x+dx} (x) I`.
//!
//! Every iterate yields a feasible `rho` (upper bound `||M(rho)||_1`) and a
//! feasible contraction `W` (lower bound `1/2 lambda_min(K_W + K_W^dag)`).

mod frank_wolfe;
mod interior_point;
mod pure;

use serde::Serialize;

use crate::channels::{ChannelFamily, KrausChannel};
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix, ComplexVector};
use crate::qfi::{self, KrausProducts, QfiEstimate};
use crate::state::DensityMatrix;

pub use pure::{pure_restricted_min, pure_restricted_min_pair, PURE_STEPS};

/// Default duality-gap tolerance on `cos B`.
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 5000;
/// Default step for the saddle-based QFI.
pub const DEFAULT_SADDLE_DX: f64 = 1e-2;
/// Default accuracy of [`max_qfi_extended`], in QFI units.
pub const DEFAULT_QFI_TOL: f64 = 1e-5;
/// Eigenvalues of `K_W + K_W^dag` closer than this to the minimum count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Relative cut below which singular values of `M` are treated as zero in [`best_w`].
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaddleMethod {
    /// Primal-dual interior point on the semidefinite pair.
    #[default]
    InteriorPoint,
    /// Conditional gradient with SVD / bottom-eigenvector oracles.
    ConditionalGradient,
}

impl std::str::FromStr for SaddleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior-point" | "ipm" => Ok(Self::InteriorPoint),
            "conditional-gradient" | "frank-wolfe" | "fw" => Ok(Self::ConditionalGradient),
            other => Err(Error::DomainError(format!("unknown saddle method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SaddleMethod,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: SaddleMethod::default() }
    }
}

impl SaddleOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::DomainError(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::DomainError("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Certificates of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleResult {
    pub rho_opt: DensityMatrix,
    pub w_opt: ComplexMatrix,
    /// `1/2 lambda_min(K_W + K_W^dag)` at `w_opt`.
    pub lower: f64,
    /// `||M(rho_opt)||_1`.
    pub upper: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub x: f64,
    pub dx: f64,
    pub tol: f64,
    pub method: SaddleMethod,
    pub trajectory: Vec<Certificate>,
}

impl SaddleResult {
    /// Certified estimate of `cos B`, the midpoint of the bracket.
    pub fn value(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `8 (1 - cos B) / dx^2` at this result's step.
    pub fn qfi(&self) -> f64 {
        qfi::qfi_from_fidelity(self.value(), self.dx)
    }
}

#[derive(Debug, Clone)]
pub struct ProbeState {
    /// Amplitudes on system (x) ancilla, system index major.
    pub state_vector: ComplexVector,
    pub ancilla_dim: usize,
    pub reduced_system_state: DensityMatrix,
}

/// Best-so-far bookkeeping shared by the solvers.
pub(crate) struct Tracker {
    pub best_upper: f64,
    pub best_lower: f64,
    pub rho: Option<DensityMatrix>,
    pub w: Option<ComplexMatrix>,
    pub trajectory: Vec<Certificate>,
}

impl Tracker {
    pub fn new() -> Self {
        Self {
            best_upper: f64::INFINITY,
            best_lower: f64::NEG_INFINITY,
            rho: None,
            w: None,
            trajectory: Vec::new(),
        }
    }

    pub fn record(&mut self, rho: &DensityMatrix, upper: f64, w: &ComplexMatrix, lower: f64) {
        self.trajectory.push(Certificate { lower, upper });
        if upper < self.best_upper {
            self.best_upper = upper;
            self.rho = Some(rho.clone());
        }
        if lower > self.best_lower {
            self.best_lower = lower;
            self.w = Some(w.clone());
        }
    }

    /// Rounding can put the two certificates a few ulps out of order at the saddle.
    pub fn gap(&self) -> f64 {
        let raw = self.best_upper - self.best_lower;
        if raw < -1e-10 {
            log::warn!("weak duality violated by {:.3e}", -raw);
        }
        raw.max(0.0)
    }

    pub fn finish(self, x: f64, dx: f64, opts: &SaddleOptions) -> Result<SaddleResult> {
        let gap = self.gap();
        let iterations = self.trajectory.len();
        let (rho_opt, w_opt) = match (self.rho, self.w) {
            (Some(r), Some(w)) => (r, w),
            _ => return Err(Error::NumericalFailure("solver produced no certificates".into())),
        };
        Ok(SaddleResult {
            rho_opt,
            w_opt,
            lower: self.best_lower,
            upper: self.best_upper,
            gap,
            iterations,
            converged: gap <= opts.tol,
            x,
            dx,
            tol: opts.tol,
            method: opts.method,
            trajectory: self.trajectory,
        })
    }
}

/// `W` with `W^T = V^dag U^dag` from `M = U D V`, restricted to the numerical range of `M`.
///
/// On a rank-deficient `M` the kernel directions get weight zero, so `W` is a
/// partial isometry rather than an arbitrary unitary completion.
pub fn best_w_from_m(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let svd = numkit::svd(m)?;
    let s_max = svd.singular_values[0];
    let cut = RANK_TOL * s_max.max(1.0);
    let d = m.nrows();
    let mut wt = ComplexMatrix::zeros(m.ncols(), d);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cut {
            continue;
        }
        // numkit returns M = U S V^dag, so the V^dag of M = U D V is this V
        wt += svd.v.column(k) * svd.u.column(k).adjoint();
    }
    Ok(wt.transpose())
}

/// `1/2 (K_W + K_W^dag)`.
pub fn symmetrized_k(table: &KrausProducts, w: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(numkit::hermitian_part(&table.k_w(w)?))
}

/// `1/2 lambda_min(K_W + K_W^dag)`, after scaling `W` into the unit ball if needed.
pub fn lower_certificate(table: &KrausProducts, w: &ComplexMatrix) -> Result<(f64, ComplexMatrix)> {
    let norm = numkit::operator_norm(w)?;
    let w = if norm > 1.0 { w.unscale(norm) } else { w.clone() };
    let g = symmetrized_k(table, &w)?;
    Ok((numkit::hermitian_eig(&g)?.min(), w))
}

/// Upper certificate `||M(rho)||_1` and the maximizing `W`.
pub fn upper_certificate(table: &KrausProducts, rho: &DensityMatrix) -> Result<(f64, ComplexMatrix)> {
    let m = table.m_of(rho.matrix())?;
    let value = numkit::trace_norm(&m)?;
    Ok((value, best_w_from_m(&m)?))
}

/// State on the bottom eigenspace of a Hermitian matrix; mixed when degenerate.
pub fn bottom_state(g: &ComplexMatrix) -> Result<DensityMatrix> {
    let eig = numkit::hermitian_eig(g)?;
    let lmin = eig.min();
    let k = eig.eigenvalues.iter().take_while(|&&l| l - lmin <= DEGENERACY_TOL).count();
    if k == 1 {
        let mut v = eig.vector(0);
        numkit::fix_phase(&mut v);
        return DensityMatrix::from_pure(&v);
    }
    let basis = eig.eigenvectors.columns(0, k).into_owned();
    Ok(DensityMatrix::mixed_on_span(&basis))
}

/// `K_W = sum_ij w_ij F_i(x)^dag F_j(x+dx)`.
pub fn k_w(w: &ComplexMatrix, fam: &ChannelFamily, x: f64, dx: f64) -> Result<ComplexMatrix> {
    KrausProducts::from_family(fam, x, dx)?.k_w(w)
}

pub fn best_w(rho: &DensityMatrix, fam: &ChannelFamily, x: f64, dx: f64) -> Result<ComplexMatrix> {
    let table = KrausProducts::from_family(fam, x, dx)?;
    best_w_from_m(&table.m_of(rho.matrix())?)
}

pub fn best_rho(w: &ComplexMatrix, fam: &ChannelFamily, x: f64, dx: f64) -> Result<DensityMatrix> {
    let table = KrausProducts::from_family(fam, x, dx)?;
    let k = table.k_w(w)?;
    bottom_state(&(&k + k.adjoint()))
}

/// Solve the game between two fixed channels with the same shapes.
///
/// `x` and `dx` are only recorded in the result.
pub fn solve_pair(
    first: &KrausChannel,
    second: &KrausChannel,
    x: f64,
    dx: f64,
    opts: &SaddleOptions,
) -> Result<SaddleResult> {
    opts.validate()?;
    let table = KrausProducts::new(first, second)?;
    solve_table(&table, x, dx, opts)
}

pub(crate) fn solve_table(table: &KrausProducts, x: f64, dx: f64, opts: &SaddleOptions) -> Result<SaddleResult> {
    let tracker = match opts.method {
        SaddleMethod::InteriorPoint => interior_point::solve(table, opts)?,
        SaddleMethod::ConditionalGradient => frank_wolfe::solve(table, opts)?,
    };
    let res = tracker.finish(x, dx, opts)?;
    log::debug!(
        "saddle x={x} dx={dx}: [{:.15}, {:.15}] gap {:.2e} after {} iterations",
        res.lower,
        res.upper,
        res.gap,
        res.iterations
    );
    Ok(res)
}

pub fn solve_saddle(fam: &ChannelFamily, x: f64, dx: f64, tol: f64, max_iter: usize) -> Result<SaddleResult> {
    solve_saddle_with(fam, x, dx, &SaddleOptions { tol, max_iter, ..SaddleOptions::default() })
}

pub fn solve_saddle_with(fam: &ChannelFamily, x: f64, dx: f64, opts: &SaddleOptions) -> Result<SaddleResult> {
    qfi::check_step(dx)?;
    opts.validate()?;
    let table = KrausProducts::from_family(fam, x, dx)?;
    solve_table(&table, x, dx, opts)
}

/// Gap tolerance on `cos B` that keeps the QFI error at step `dx` below `qfi_tol`.
pub fn cos_tolerance(qfi_tol: f64, dx: f64) -> f64 {
    0.5 * qfi_tol * dx * dx / 8.0
}

/// Extended-channel QFI from converged saddle runs at `dx` (and `dx/2` when extrapolating).
pub fn max_qfi_extended(fam: &ChannelFamily, x: f64, dx: f64, tol: f64, richardson: bool) -> Result<QfiEstimate> {
    let opts = SaddleOptions { tol, ..SaddleOptions::default() };
    Ok(max_qfi_extended_with(fam, x, dx, richardson, &opts)?.0)
}

/// As [`max_qfi_extended`] with explicit options; `opts.tol` is in QFI units.
/// Also returns the saddle runs used (coarse step first).
pub fn max_qfi_extended_with(
    fam: &ChannelFamily,
    x: f64,
    dx: f64,
    richardson: bool,
    opts: &SaddleOptions,
) -> Result<(QfiEstimate, Vec<SaddleResult>)> {
    qfi::check_step(dx)?;
    let steps: Vec<f64> = if richardson { vec![dx, dx / 2.0] } else { vec![dx] };
    let mut runs = Vec::with_capacity(steps.len());
    for &h in &steps {
        let inner = SaddleOptions { tol: cos_tolerance(opts.tol, h), ..*opts };
        let res = solve_saddle_with(fam, x, h, &inner)?;
        if !res.converged {
            return Err(Error::NotConverged { gap: res.gap, iterations: res.iterations });
        }
        runs.push(res);
    }
    let estimate = qfi_from_runs(&runs, dx)?;
    Ok((estimate, runs))
}

/// QFI from one run at `dx` or two runs at `(dx, dx/2)`.
pub fn qfi_from_runs(runs: &[SaddleResult], dx: f64) -> Result<QfiEstimate> {
    match runs {
        [one] => Ok(QfiEstimate {
            value: qfi::clip_qfi(one.qfi())?,
            dx_used: dx,
            extrapolated: false,
            truncation_estimate: 0.0,
        }),
        [coarse, fine] => qfi::richardson(coarse.qfi(), fine.qfi(), dx),
        _ => Err(Error::DomainError("expected one or two saddle runs".into())),
    }
}

/// Purification `sum_i sqrt(a_i) |v_i> (x) |i>` of the optimal reduced state.
pub fn optimal_probe(res: &SaddleResult) -> Result<ProbeState> {
    let rho = &res.rho_opt;
    let eig = numkit::hermitian_eig(rho.matrix())?;
    let m1 = rho.dim();
    let kept: Vec<usize> = (0..m1).filter(|&k| eig.eigenvalues[k] >= 1e-12).collect();
    let anc = kept.len().max(1);
    let mut psi = ComplexVector::zeros(m1 * anc);
    for (slot, &k) in kept.iter().enumerate() {
        let mut v = eig.vector(k);
        numkit::fix_phase(&mut v);
        let amp = eig.eigenvalues[k].sqrt();
        for i in 0..m1 {
            psi[i * anc + slot] = v[i] * amp;
        }
    }
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(Error::NumericalFailure("optimal state has no spectrum above 1e-12".into()));
    }
    psi.unscale_mut(norm);
    let reduced = crate::state::reduced_from_vector(&psi, m1, anc)?;
    Ok(ProbeState { state_vector: psi, ancilla_dim: anc, reduced_system_state: reduced })
}
