//! Python bindings. Matrices cross the boundary as nested lists of complex
//! numbers (numpy arrays are accepted on input).

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use qmetro_core::channel_spec::{export_channel_spec, load_channel_spec};
use qmetro_core::numkit::{self, ComplexMatrix, ComplexVector};
use qmetro_core::saddle::{self, SaddleMethod, SaddleOptions, SaddleResult};
use qmetro_core::{ancilla, channels, qfi, unitary, ChannelFamily, DensityMatrix, Error};

create_exception!(qmetro, QmetroError, PyException);
create_exception!(qmetro, NotConvergedError, QmetroError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DomainError(_)
        | Error::ShapeMismatch(_)
        | Error::CapacityError { .. }
        | Error::DegenerateStep { .. }
        | Error::CompletenessViolation { .. }
        | Error::NotUnitary { .. }
        | Error::Schema(_) => PyValueError::new_err(e.to_string()),
        Error::NotConverged { .. } => NotConvergedError::new_err(e.to_string()),
        _ => QmetroError::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<Complex64>>;

fn matrix(rows: Rows) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
    }
    let flat: Vec<Complex64> = rows.into_iter().flatten().collect();
    numkit::from_rows(n, m, &flat).map_err(to_py)
}

fn rows(m: &ComplexMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn density(rows: Rows) -> PyResult<DensityMatrix> {
    DensityMatrix::new(matrix(rows)?).map_err(to_py)
}

/// Parametrized channel `x -> {F_j(x)}`.
#[pyclass(name = "Channel", module = "qmetro", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyChannel {
    inner: ChannelFamily,
}

#[pymethods]
impl PyChannel {
    #[staticmethod]
    fn dephasing(eta: f64) -> PyResult<Self> {
        Ok(Self { inner: channels::dephasing(eta).map_err(to_py)? })
    }

    #[staticmethod]
    fn spontaneous_emission(eta: f64) -> PyResult<Self> {
        Ok(Self { inner: channels::spontaneous_emission(eta).map_err(to_py)? })
    }

    #[staticmethod]
    fn xy_noise(eta: f64) -> PyResult<Self> {
        Ok(Self { inner: channels::xy_noise(eta).map_err(to_py)? })
    }

    /// `exp(-i h t x)` for a Hermitian generator `h`.
    #[staticmethod]
    #[pyo3(signature = (h, t=1.0))]
    fn unitary(h: Rows, t: f64) -> PyResult<Self> {
        Ok(Self { inner: channels::unitary_family(&matrix(h)?, t).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_channel_spec(path).map_err(to_py)? })
    }

    fn to_json(&self, x_grid: Vec<f64>) -> PyResult<String> {
        export_channel_spec(&self.inner, &x_grid).map_err(to_py)
    }

    fn n_fold(&self, n: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.n_fold(n).map_err(to_py)? })
    }

    fn tensor(&self, other: &PyChannel) -> PyResult<Self> {
        Ok(Self { inner: self.inner.tensor(&other.inner).map_err(to_py)? })
    }

    /// Kraus operators at `x`.
    fn kraus(&self, x: f64) -> PyResult<Vec<Rows>> {
        let ch = self.inner.evaluate(x).map_err(to_py)?;
        Ok(ch.ops().iter().map(rows).collect())
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn kraus_rank(&self) -> usize {
        self.inner.kraus_rank()
    }

    fn __repr__(&self) -> String {
        format!(
            "Channel('{}', d={}, m1={}, m2={})",
            self.inner.label(),
            self.inner.kraus_rank(),
            self.inner.input_dim(),
            self.inner.output_dim()
        )
    }
}

#[pyclass(name = "SaddleResult", module = "qmetro", frozen)]
struct PySaddleResult {
    inner: SaddleResult,
}

#[pymethods]
impl PySaddleResult {
    #[getter]
    fn lower(&self) -> f64 {
        self.inner.lower
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.inner.upper
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap
    }

    #[getter]
    fn value(&self) -> f64 {
        self.inner.value()
    }

    #[getter]
    fn qfi(&self) -> f64 {
        self.inner.qfi()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn rho(&self) -> Rows {
        rows(self.inner.rho_opt.matrix())
    }

    #[getter]
    fn w(&self) -> Rows {
        rows(&self.inner.w_opt)
    }

    /// `(lower, upper)` per iteration.
    #[getter]
    fn trajectory(&self) -> Vec<(f64, f64)> {
        self.inner.trajectory.iter().map(|c| (c.lower, c.upper)).collect()
    }

    /// Purification of the optimal state: `(amplitudes, ancilla_dim)`.
    fn optimal_probe(&self) -> PyResult<(Vec<Complex64>, usize)> {
        let p = saddle::optimal_probe(&self.inner).map_err(to_py)?;
        Ok((p.state_vector.iter().copied().collect(), p.ancilla_dim))
    }

    fn __repr__(&self) -> String {
        format!(
            "SaddleResult(lower={}, upper={}, iterations={}, converged={})",
            self.inner.lower, self.inner.upper, self.inner.iterations, self.inner.converged
        )
    }
}

#[pyfunction]
fn m_matrix(rho: Rows, channel: &PyChannel, x: f64, dx: f64) -> PyResult<Rows> {
    let m = qfi::m_matrix(&density(rho)?, &channel.inner, x, dx).map_err(to_py)?;
    Ok(rows(&m.matrix))
}

#[pyfunction]
fn fidelity_pure_probe(rho: Rows, channel: &PyChannel, x: f64, dx: f64) -> PyResult<f64> {
    qfi::fidelity_pure_probe(&density(rho)?, &channel.inner, x, dx).map_err(to_py)
}

/// QFI of the purification of `rho` sent through the extended channel.
#[pyfunction]
#[pyo3(signature = (rho, channel, x=0.0, dx=qfi::DEFAULT_DX, richardson=true))]
fn qfi_pure_probe(rho: Rows, channel: &PyChannel, x: f64, dx: f64, richardson: bool) -> PyResult<f64> {
    Ok(qfi::qfi_pure_probe(&density(rho)?, &channel.inner, x, dx, richardson).map_err(to_py)?.value)
}

#[pyfunction]
#[pyo3(signature = (channel, x=0.0, dx=saddle::DEFAULT_SADDLE_DX, tol=saddle::DEFAULT_QFI_TOL, richardson=true))]
fn max_qfi_extended(channel: &PyChannel, x: f64, dx: f64, tol: f64, richardson: bool) -> PyResult<f64> {
    Ok(saddle::max_qfi_extended(&channel.inner, x, dx, tol, richardson).map_err(to_py)?.value)
}

#[pyfunction]
#[pyo3(signature = (h, t=1.0, n_probes=1))]
fn max_qfi_unitary(h: Rows, t: f64, n_probes: usize) -> PyResult<f64> {
    unitary::max_qfi_unitary(&matrix(h)?, t, n_probes).map_err(to_py)
}

#[pyfunction]
fn bures_angle_unitaries(u1: Rows, u2: Rows) -> PyResult<f64> {
    unitary::bures_angle_unitaries(&matrix(u1)?, &matrix(u2)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (j, n_repeats=1))]
fn precision_bound(j: f64, n_repeats: usize) -> PyResult<f64> {
    unitary::precision_bound(j, n_repeats).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (channel, x=0.0, dx=saddle::DEFAULT_SADDLE_DX, tol=saddle::DEFAULT_TOL, max_iter=saddle::DEFAULT_MAX_ITER, method="interior-point"))]
fn solve_saddle(
    channel: &PyChannel,
    x: f64,
    dx: f64,
    tol: f64,
    max_iter: usize,
    method: &str,
) -> PyResult<PySaddleResult> {
    let method: SaddleMethod = method.parse().map_err(to_py)?;
    let opts = SaddleOptions { tol, max_iter, method };
    let inner = saddle::solve_saddle_with(&channel.inner, x, dx, &opts).map_err(to_py)?;
    Ok(PySaddleResult { inner })
}

/// Best ancilla-free probe found by local search: `(rho, fidelity)`.
#[pyfunction]
#[pyo3(signature = (channel, x=0.0, dx=saddle::DEFAULT_SADDLE_DX, restarts=4, seed=0))]
fn pure_restricted_min(channel: &PyChannel, x: f64, dx: f64, restarts: usize, seed: u64) -> PyResult<(Rows, f64)> {
    let (rho, f) = saddle::pure_restricted_min(&channel.inner, x, dx, restarts, seed).map_err(to_py)?;
    Ok((rows(rho.matrix()), f))
}

#[pyfunction]
#[pyo3(signature = (channel, x=0.0, dx=saddle::DEFAULT_SADDLE_DX, tol=ancilla::DEFAULT_DIAG_TOL))]
fn ancilla_unnecessary_sufficient(channel: &PyChannel, x: f64, dx: f64, tol: f64) -> PyResult<bool> {
    let report = ancilla::ancilla_unnecessary_sufficient(&channel.inner, x, dx, tol).map_err(to_py)?;
    Ok(report.simultaneous)
}

#[pyfunction]
#[pyo3(signature = (rho, base2=true))]
fn von_neumann_entropy(rho: Rows, base2: bool) -> PyResult<f64> {
    Ok(qmetro_core::von_neumann_entropy(&density(rho)?, base2))
}

/// Density matrix of a pure state.
#[pyfunction]
fn pure_state(amplitudes: Vec<Complex64>) -> PyResult<Rows> {
    let rho = DensityMatrix::from_pure(&ComplexVector::from_vec(amplitudes)).map_err(to_py)?;
    Ok(rows(rho.matrix()))
}

#[pymodule]
fn qmetro(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QmetroError", m.py().get_type::<QmetroError>())?;
    m.add("NotConvergedError", m.py().get_type::<NotConvergedError>())?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PySaddleResult>()?;
    m.add_function(wrap_pyfunction!(m_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_pure_probe, m)?)?;
    m.add_function(wrap_pyfunction!(qfi_pure_probe, m)?)?;
    m.add_function(wrap_pyfunction!(max_qfi_extended, m)?)?;
    m.add_function(wrap_pyfunction!(max_qfi_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(bures_angle_unitaries, m)?)?;
    m.add_function(wrap_pyfunction!(precision_bound, m)?)?;
    m.add_function(wrap_pyfunction!(solve_saddle, m)?)?;
    m.add_function(wrap_pyfunction!(pure_restricted_min, m)?)?;
    m.add_function(wrap_pyfunction!(ancilla_unnecessary_sufficient, m)?)?;
    m.add_function(wrap_pyfunction!(von_neumann_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(pure_state, m)?)?;
    Ok(())
}
