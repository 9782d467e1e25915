//! Configurable sweeps over the noise strength, written as CSV or JSON.
//!
//! Sweep points are independent and run on a bounded rayon pool; rows come
//! back in sweep order, so a fixed configuration always renders to the same
//! bytes.

use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::ancilla::{self, DEFAULT_DIAG_TOL, DEFAULT_QFI_COMPARE_TOL};
use crate::channel_spec::load_channel_spec;
use crate::channels::{self, ChannelFamily};
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexVector};
use crate::qfi::{self, KrausProducts, MAX_DX, MIN_DX};
use crate::saddle::{self, SaddleMethod, SaddleOptions, SaddleResult};
use crate::state::{self, von_neumann_entropy, DensityMatrix};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    QfiPoint,
    Saddle,
    SweepEta,
    ProbeEntropy,
    NqubitDephasing,
    SeWithAncilla,
    AncillaCheck,
    Counterexample,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::QfiPoint,
        Self::Saddle,
        Self::SweepEta,
        Self::ProbeEntropy,
        Self::NqubitDephasing,
        Self::SeWithAncilla,
        Self::AncillaCheck,
        Self::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::QfiPoint => "qfi-point",
            Self::Saddle => "saddle",
            Self::SweepEta => "sweep-eta",
            Self::ProbeEntropy => "probe-entropy",
            Self::NqubitDephasing => "nqubit-dephasing",
            Self::SeWithAncilla => "se-with-ancilla",
            Self::AncillaCheck => "ancilla-check",
            Self::Counterexample => "counterexample",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::DomainError(format!("unknown experiment '{s}'")))
    }
}

pub const ZOO_IDS: [&str; 5] = ["dephasing", "spontaneous-emission", "xy-noise", "unitary", "counterexample"];

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Zoo(String),
    File(PathBuf),
}

impl ChannelSource {
    /// Zoo ids are matched first; anything else is taken as a path.
    pub fn parse(s: &str) -> Self {
        if ZOO_IDS.contains(&s) {
            Self::Zoo(s.to_string())
        } else {
            Self::File(PathBuf::from(s))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::DomainError(format!("--format: unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub channel: ChannelSource,
    pub etas: Vec<f64>,
    pub t: f64,
    pub n_probes: usize,
    pub x: f64,
    pub dx: f64,
    /// Target accuracy of reported QFI values.
    pub tol: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Worker threads; 0 uses the machine's parallelism.
    pub workers: usize,
    pub max_iter: usize,
    pub method: SaddleMethod,
    pub restarts: usize,
    pub richardson: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        let (channel, n_probes, etas) = match experiment {
            ExperimentKind::NqubitDephasing => ("dephasing", 2, default_sweep()),
            ExperimentKind::ProbeEntropy => ("dephasing", 2, default_sweep()),
            ExperimentKind::SeWithAncilla => ("spontaneous-emission", 2, default_sweep()),
            ExperimentKind::SweepEta => ("dephasing", 1, default_sweep()),
            ExperimentKind::Counterexample => ("counterexample", 1, vec![f64::NAN]),
            _ => ("dephasing", 1, vec![0.5]),
        };
        let dx = if experiment == ExperimentKind::Counterexample { 0.05 } else { saddle::DEFAULT_SADDLE_DX };
        Self {
            experiment,
            channel: ChannelSource::Zoo(channel.into()),
            etas,
            t: 1.0,
            n_probes,
            x: 0.0,
            dx,
            tol: saddle::DEFAULT_QFI_TOL,
            seed: 0,
            output: None,
            format: OutputFormat::Csv,
            workers: 0,
            max_iter: saddle::DEFAULT_MAX_ITER,
            method: SaddleMethod::default(),
            restarts: 4,
            richardson: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::DomainError(format!("{name}: {msg}"));
        if !(self.dx > MIN_DX && self.dx <= MAX_DX) {
            return Err(field("--dx", format!("{} must lie in ({MIN_DX:e}, {MAX_DX}]", self.dx)));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(field("--tol", format!("{} must be positive", self.tol)));
        }
        if !self.x.is_finite() {
            return Err(field("--x", "must be finite".into()));
        }
        if !self.t.is_finite() {
            return Err(field("--t", "must be finite".into()));
        }
        if self.n_probes == 0 {
            return Err(field("--N", "must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(field("--max-iter", "must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(field("--restarts", "must be at least 1".into()));
        }
        if self.etas.is_empty() {
            return Err(field("--eta", "empty grid".into()));
        }
        if self.experiment != ExperimentKind::Counterexample {
            if let Some(bad) = self.etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return Err(field("--eta", format!("{bad} outside [0, 1]")));
            }
        }
        let uses_zoo_counterexample = matches!(&self.channel, ChannelSource::Zoo(id) if id == "counterexample");
        if uses_zoo_counterexample != (self.experiment == ExperimentKind::Counterexample) {
            return Err(field(
                "--channel",
                "the counterexample channel is only used by the counterexample experiment".into(),
            ));
        }
        // qubit zoo channels; file channels are checked once loaded
        let per_probe = 2usize;
        let system = per_probe.checked_pow(self.n_probes as u32).unwrap_or(usize::MAX);
        let total = if self.experiment == ExperimentKind::SeWithAncilla { system.saturating_mul(system) } else { system };
        if total > numkit::max_dim() {
            return Err(Error::CapacityError { dim: total, cap: numkit::max_dim() });
        }
        Ok(())
    }
}

fn default_sweep() -> Vec<f64> {
    parse_grid("0.05:0.95:0.1").expect("static grid")
}

/// `v`, `v1,v2,...` or an inclusive range `a:b:step`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::DomainError(format!("--eta: cannot parse '{t}' as a number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(num).collect(),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(Error::DomainError(format!("--eta: bad range '{s}'")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(Error::DomainError(format!("--eta: range '{s}' has too many points")));
            }
            Ok((0..count).map(|k| ((a + step * k as f64) * 1e12).round() / 1e12).collect())
        }
        _ => Err(Error::DomainError(format!("--eta: expected v, v1,v2,... or a:b:step, got '{s}'"))),
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRecord {
    pub eta: f64,
    pub n: usize,
    pub qfi_optimal: f64,
    /// QFI of the uniform superposition `|+...+>` without ancilla.
    pub qfi_reference: f64,
    pub entropy_bits: f64,
    /// Certified bound on the error of `qfi_optimal` from the duality gaps.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NqubitRecord {
    pub eta: f64,
    pub n: usize,
    pub qfi_optimal: f64,
    pub qfi_reference: f64,
    pub entropy_bits: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Amplitude `a_i` shared by basis states with `i` zeros, `;`-separated.
    pub amplitudes: String,
    /// Largest deviation from qubit-permutation and bit-flip symmetry.
    pub symmetry_residual: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SeAncillaRecord {
    pub eta: f64,
    pub n: usize,
    pub qfi_optimal: f64,
    /// Best ancilla-free probe found by local search.
    pub qfi_no_ancilla: f64,
    pub qfi_reference: f64,
    pub entropy_bits: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PointRecord {
    pub eta: f64,
    pub n: usize,
    pub x: f64,
    pub dx: f64,
    pub qfi_extended: f64,
    pub qfi_pure_restricted: f64,
    pub qfi_reference: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SaddleRecord {
    pub eta: f64,
    pub n: usize,
    pub x: f64,
    pub dx: f64,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub gap_tol: f64,
    pub iterations: usize,
    pub converged: bool,
    pub purity: f64,
    pub entropy_bits: f64,
    pub rho_eigenvalues: String,
    pub w_singular_values: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AncillaRecord {
    pub eta: f64,
    pub n: usize,
    pub sufficient_condition: bool,
    pub max_commutator_norm: f64,
    pub max_offdiag_residual: f64,
    pub purity: f64,
    pub qfi_extended: f64,
    pub qfi_pure_restricted: f64,
    pub ancilla_needed: bool,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CounterexampleRecord {
    pub dx: f64,
    pub cos_b: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub gap_tol: f64,
    pub w_singular_values: String,
    pub entangled_probe_fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Sweep(Vec<SweepRecord>),
    Nqubit(Vec<NqubitRecord>),
    SeAncilla(Vec<SeAncillaRecord>),
    Point(Vec<PointRecord>),
    Saddle(Vec<SaddleRecord>),
    Ancilla(Vec<AncillaRecord>),
    Counterexample(Vec<CounterexampleRecord>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub experiment: ExperimentKind,
    pub records: Records,
}

#[derive(Serialize)]
struct JsonDocument<'a, T: Serialize> {
    format: &'static str,
    version: u32,
    experiment: &'static str,
    records: &'a [T],
}

fn to_csv<T: Serialize>(kind: ExperimentKind, rows: &[T]) -> Result<String> {
    let mut out = format!("# qmetro {} v{SCHEMA_VERSION}\n", kind.name()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for row in rows {
            w.serialize(row).map_err(|e| Error::NumericalFailure(format!("csv: {e}")))?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| Error::NumericalFailure(e.to_string()))
}

fn to_json<T: Serialize>(kind: ExperimentKind, rows: &[T]) -> Result<String> {
    let doc = JsonDocument { format: "qmetro", version: SCHEMA_VERSION, experiment: kind.name(), records: rows };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

macro_rules! dispatch {
    ($records:expr, $f:ident, $kind:expr) => {
        match $records {
            Records::Sweep(r) => $f($kind, r),
            Records::Nqubit(r) => $f($kind, r),
            Records::SeAncilla(r) => $f($kind, r),
            Records::Point(r) => $f($kind, r),
            Records::Saddle(r) => $f($kind, r),
            Records::Ancilla(r) => $f($kind, r),
            Records::Counterexample(r) => $f($kind, r),
        }
    };
}

impl ExperimentOutput {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => dispatch!(&self.records, to_csv, self.experiment),
            OutputFormat::Json => dispatch!(&self.records, to_json, self.experiment),
        }
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Sweep(r) => r.len(),
            Records::Nqubit(r) => r.len(),
            Records::SeAncilla(r) => r.len(),
            Records::Point(r) => r.len(),
            Records::Saddle(r) => r.len(),
            Records::Ancilla(r) => r.len(),
            Records::Counterexample(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rows whose certificates did not reach the tolerance.
    pub fn unconverged(&self) -> usize {
        match &self.records {
            Records::Sweep(r) => r.iter().filter(|x| !x.converged).count(),
            Records::Nqubit(r) => r.iter().filter(|x| !x.converged).count(),
            Records::SeAncilla(r) => r.iter().filter(|x| !x.converged).count(),
            Records::Point(r) => r.iter().filter(|x| !x.converged).count(),
            Records::Saddle(r) => r.iter().filter(|x| !x.converged).count(),
            Records::Ancilla(r) => r.iter().filter(|x| !x.converged).count(),
            Records::Counterexample(r) => r.iter().filter(|x| !x.converged).count(),
        }
    }
}

/// Extended-channel QFI from one or two saddle runs, with its certified error bound.
pub struct ExtendedQfi {
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The run at the finest step.
    pub finest: SaddleResult,
}

fn saddle_options(cfg: &ExperimentConfig, h: f64) -> SaddleOptions {
    SaddleOptions { tol: saddle::cos_tolerance(cfg.tol, h), max_iter: cfg.max_iter, method: cfg.method }
}

pub fn extended_qfi(fam: &ChannelFamily, cfg: &ExperimentConfig) -> Result<ExtendedQfi> {
    let steps: Vec<f64> = if cfg.richardson { vec![cfg.dx, cfg.dx / 2.0] } else { vec![cfg.dx] };
    let mut runs = Vec::with_capacity(steps.len());
    for &h in &steps {
        let res = saddle::solve_saddle_with(fam, cfg.x, h, &saddle_options(cfg, h))?;
        if !res.converged {
            log::warn!("saddle at x={} dx={h} stopped with gap {:.3e}", cfg.x, res.gap);
        }
        runs.push(res);
    }
    let errors: Vec<f64> = runs.iter().map(|r| 8.0 * r.gap / (r.dx * r.dx)).collect();
    let gap = match errors.as_slice() {
        [e] => *e,
        [coarse, fine] => (4.0 * fine + coarse) / 3.0,
        _ => unreachable!("one or two steps"),
    };
    let estimate = saddle::qfi_from_runs(&runs, cfg.dx)?;
    let converged = runs.iter().all(|r| r.converged) && gap <= cfg.tol;
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let finest = runs.pop().expect("at least one run");
    Ok(ExtendedQfi { value: estimate.value, gap, iterations, converged, finest })
}

fn uniform_state(dim: usize) -> Result<DensityMatrix> {
    DensityMatrix::from_pure(&ComplexVector::from_element(dim, numkit::c(1.0, 0.0)))
}

fn reference_qfi(fam: &ChannelFamily, cfg: &ExperimentConfig) -> Result<f64> {
    let rho = uniform_state(fam.input_dim())?;
    Ok(qfi::qfi_pure_probe(&rho, fam, cfg.x, qfi::DEFAULT_DX, true)?.value)
}

fn pure_restricted_qfi(fam: &ChannelFamily, cfg: &ExperimentConfig) -> Result<f64> {
    let steps: Vec<f64> = if cfg.richardson { vec![cfg.dx, cfg.dx / 2.0] } else { vec![cfg.dx] };
    let mut js = Vec::new();
    for &h in &steps {
        let (_, value) = saddle::pure_restricted_min(fam, cfg.x, h, cfg.restarts, cfg.seed)?;
        js.push(qfi::qfi_from_fidelity(value, h));
    }
    match js.as_slice() {
        [j] => qfi::clip_qfi(*j),
        [coarse, fine] => Ok(qfi::richardson(*coarse, *fine, cfg.dx)?.value),
        _ => unreachable!("one or two steps"),
    }
}

fn joined(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

/// Optimal probe without ancilla when the sufficient condition holds, else `None`.
pub fn ancilla_free_probe(fam: &ChannelFamily, res: &SaddleResult) -> Result<Option<ComplexVector>> {
    let report = ancilla::ancilla_unnecessary_sufficient(fam, res.x, res.dx, DEFAULT_DIAG_TOL)?;
    match report.common_basis {
        Some(q) if report.simultaneous => Ok(Some(ancilla::pure_state_in_basis(&res.rho_opt, &q)?)),
        _ => Ok(None),
    }
}

/// Entropy of the first qubit of the optimal probe.
fn single_qubit_entropy(fam: &ChannelFamily, res: &SaddleResult) -> Result<(f64, Option<ComplexVector>)> {
    let dim = res.rho_opt.dim();
    if !dim.is_multiple_of(2) {
        return Err(Error::DomainError(format!("input dimension {dim} is not a qubit register")));
    }
    let psi = ancilla_free_probe(fam, res)?;
    let reduced = match &psi {
        Some(v) => state::reduced_from_vector(v, 2, dim / 2)?,
        // the purification's first-qubit marginal is that of rho_opt
        None => res.rho_opt.partial_trace_second(2, dim / 2)?,
    };
    Ok((von_neumann_entropy(&reduced, true), psi))
}

/// Mean amplitude per number of zeros, and the largest deviation from
/// permutation and bit-flip symmetry, for an `n`-qubit vector.
pub fn symmetric_amplitude_profile(psi: &ComplexVector, n: usize) -> Result<(Vec<f64>, f64)> {
    let dim = 1usize << n;
    if psi.len() != dim {
        return Err(Error::ShapeMismatch(format!("vector of length {} is not {n} qubits", psi.len())));
    }
    let mut lo = vec![f64::INFINITY; n + 1];
    let mut hi = vec![f64::NEG_INFINITY; n + 1];
    let mut sum = vec![0.0; n + 1];
    let mut count = vec![0usize; n + 1];
    let mut flip_resid = 0.0f64;
    for s in 0..dim {
        let zeros = n - s.count_ones() as usize;
        let a = psi[s].re;
        lo[zeros] = lo[zeros].min(a);
        hi[zeros] = hi[zeros].max(a);
        sum[zeros] += a;
        count[zeros] += 1;
        flip_resid = flip_resid.max((psi[s] - psi[!s & (dim - 1)]).norm());
        flip_resid = flip_resid.max(psi[s].im.abs());
    }
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect();
    let spread = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    Ok((means, spread.max(flip_resid)))
}

struct Context {
    file_family: Option<ChannelFamily>,
}

impl Context {
    fn family(&self, cfg: &ExperimentConfig, eta: f64) -> Result<ChannelFamily> {
        let single = match (&cfg.channel, &self.file_family) {
            (_, Some(f)) => f.clone(),
            (ChannelSource::Zoo(id), None) => match id.as_str() {
                "dephasing" => channels::dephasing(eta)?,
                "spontaneous-emission" => channels::spontaneous_emission(eta)?,
                "xy-noise" => channels::xy_noise(eta)?,
                "unitary" => channels::unitary_family(&numkit::pauli_z().scale(0.5), cfg.t)?,
                other => return Err(Error::DomainError(format!("--channel: '{other}' has no eta family"))),
            },
            (ChannelSource::File(p), None) => {
                return Err(Error::DomainError(format!("--channel: {} was not loaded", p.display())))
            }
        };
        if cfg.n_probes == 1 {
            Ok(single)
        } else {
            single.n_fold(cfg.n_probes)
        }
    }
}

fn sweep_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<SweepRecord> {
    let fam = ctx.family(cfg, eta)?;
    let ext = extended_qfi(&fam, cfg)?;
    Ok(SweepRecord {
        eta,
        n: cfg.n_probes,
        qfi_optimal: ext.value,
        qfi_reference: reference_qfi(&fam, cfg)?,
        entropy_bits: von_neumann_entropy(&ext.finest.rho_opt, true),
        gap: ext.gap,
        iterations: ext.iterations,
        converged: ext.converged,
    })
}

fn probe_entropy_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<SweepRecord> {
    let fam = ctx.family(cfg, eta)?;
    let ext = extended_qfi(&fam, cfg)?;
    let (entropy, _) = single_qubit_entropy(&fam, &ext.finest)?;
    Ok(SweepRecord {
        eta,
        n: cfg.n_probes,
        qfi_optimal: ext.value,
        qfi_reference: reference_qfi(&fam, cfg)?,
        entropy_bits: entropy,
        gap: ext.gap,
        iterations: ext.iterations,
        converged: ext.converged,
    })
}

fn nqubit_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<NqubitRecord> {
    let fam = ctx.family(cfg, eta)?;
    let ext = extended_qfi(&fam, cfg)?;
    let (entropy, psi) = single_qubit_entropy(&fam, &ext.finest)?;
    let psi = psi.ok_or_else(|| Error::NumericalFailure("no common eigenbasis for the dephasing products".into()))?;
    let (amps, resid) = symmetric_amplitude_profile(&psi, cfg.n_probes)?;
    Ok(NqubitRecord {
        eta,
        n: cfg.n_probes,
        qfi_optimal: ext.value,
        qfi_reference: reference_qfi(&fam, cfg)?,
        entropy_bits: entropy,
        gap: ext.gap,
        iterations: ext.iterations,
        converged: ext.converged,
        amplitudes: joined(&amps),
        symmetry_residual: resid,
    })
}

fn se_ancilla_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<SeAncillaRecord> {
    let fam = ctx.family(cfg, eta)?;
    let ext = extended_qfi(&fam, cfg)?;
    Ok(SeAncillaRecord {
        eta,
        n: cfg.n_probes,
        qfi_optimal: ext.value,
        qfi_no_ancilla: pure_restricted_qfi(&fam, cfg)?,
        qfi_reference: reference_qfi(&fam, cfg)?,
        entropy_bits: von_neumann_entropy(&ext.finest.rho_opt, true),
        gap: ext.gap,
        iterations: ext.iterations,
        converged: ext.converged,
    })
}

fn qfi_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<PointRecord> {
    let fam = ctx.family(cfg, eta)?;
    let ext = extended_qfi(&fam, cfg)?;
    Ok(PointRecord {
        eta,
        n: cfg.n_probes,
        x: cfg.x,
        dx: cfg.dx,
        qfi_extended: ext.value,
        qfi_pure_restricted: pure_restricted_qfi(&fam, cfg)?,
        qfi_reference: reference_qfi(&fam, cfg)?,
        gap: ext.gap,
        iterations: ext.iterations,
        converged: ext.converged,
    })
}

fn saddle_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<SaddleRecord> {
    let fam = ctx.family(cfg, eta)?;
    let opts = saddle_options(cfg, cfg.dx);
    let res = saddle::solve_saddle_with(&fam, cfg.x, cfg.dx, &opts)?;
    Ok(SaddleRecord {
        eta,
        n: cfg.n_probes,
        x: cfg.x,
        dx: cfg.dx,
        lower: res.lower,
        upper: res.upper,
        gap: res.gap,
        gap_tol: opts.tol,
        iterations: res.iterations,
        converged: res.converged,
        purity: res.rho_opt.purity(),
        entropy_bits: von_neumann_entropy(&res.rho_opt, true),
        rho_eigenvalues: joined(&res.rho_opt.eigenvalues()?),
        w_singular_values: joined(&numkit::singular_values(&res.w_opt)?),
    })
}

fn ancilla_point(ctx: &Context, cfg: &ExperimentConfig, eta: f64) -> Result<AncillaRecord> {
    let fam = ctx.family(cfg, eta)?;
    let report = ancilla::ancilla_unnecessary_sufficient(&fam, cfg.x, cfg.dx, DEFAULT_DIAG_TOL)?;
    let opts = saddle_options(cfg, cfg.dx);
    let table = KrausProducts::from_family(&fam, cfg.x, cfg.dx)?;
    let res = saddle::solve_saddle_with(&fam, cfg.x, cfg.dx, &opts)?;
    let (_, pure_value) = saddle::pure_restricted_min_pair(&table, cfg.restarts, cfg.seed)?;
    let needed = if res.converged {
        ancilla::ancilla_needed_exact(&res, pure_value, DEFAULT_QFI_COMPARE_TOL.max(cfg.tol))?
    } else {
        log::warn!("eta={eta}: saddle not converged, exact ancilla check skipped");
        false
    };
    Ok(AncillaRecord {
        eta,
        n: cfg.n_probes,
        sufficient_condition: report.simultaneous,
        max_commutator_norm: report.max_commutator_norm,
        max_offdiag_residual: report.max_offdiag_residual,
        purity: res.rho_opt.purity(),
        qfi_extended: res.qfi(),
        qfi_pure_restricted: qfi::qfi_from_fidelity(pure_value, cfg.dx),
        ancilla_needed: needed,
        gap: 8.0 * res.gap / (cfg.dx * cfg.dx),
        converged: res.converged,
    })
}

fn counterexample_record(cfg: &ExperimentConfig) -> Result<CounterexampleRecord> {
    let dx = cfg.dx;
    let (k1, k2) = channels::counterexample_pair(dx)?;
    let opts = saddle_options(cfg, dx);
    let res = saddle::solve_pair(&k1, &k2, 0.0, dx, &opts)?;
    let table = KrausProducts::new(&k1, &k2)?;
    let entangled = table.fidelity(DensityMatrix::maximally_mixed(k1.input_dim()).matrix())?;
    Ok(CounterexampleRecord {
        dx,
        cos_b: res.value(),
        expected: 1.0 - dx * dx,
        lower: res.lower,
        upper: res.upper,
        gap: res.gap,
        gap_tol: opts.tol,
        w_singular_values: joined(&numkit::singular_values(&res.w_opt)?),
        entangled_probe_fidelity: entangled,
        iterations: res.iterations,
        converged: res.converged,
    })
}

fn run_points<T, F>(cfg: &ExperimentConfig, ctx: &Context, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Context, &ExperimentConfig, f64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::DomainError(format!("--workers: {e}")))?;
    let rows: Vec<Result<T>> = pool.install(|| {
        cfg.etas
            .par_iter()
            .map(|&eta| {
                let row = f(ctx, cfg, eta);
                if let Err(e) = &row {
                    log::error!("eta={eta}: {e}");
                }
                row
            })
            .collect()
    });
    rows.into_iter().collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let file_family = match &cfg.channel {
        ChannelSource::File(p) => {
            let fam = load_channel_spec(p)?;
            let total = fam.input_dim().checked_pow(cfg.n_probes as u32).unwrap_or(usize::MAX);
            if total > numkit::max_dim() {
                return Err(Error::CapacityError { dim: total, cap: numkit::max_dim() });
            }
            Some(fam)
        }
        ChannelSource::Zoo(_) => None,
    };
    let ctx = Context { file_family };
    log::info!("running {} over {} points", cfg.experiment.name(), cfg.etas.len());
    let records = match cfg.experiment {
        ExperimentKind::SweepEta => Records::Sweep(run_points(cfg, &ctx, sweep_point)?),
        ExperimentKind::ProbeEntropy => Records::Sweep(run_points(cfg, &ctx, probe_entropy_point)?),
        ExperimentKind::NqubitDephasing => {
            let mut cfg = cfg.clone();
            cfg.channel = ChannelSource::Zoo("dephasing".into());
            let ctx = Context { file_family: None };
            Records::Nqubit(run_points(&cfg, &ctx, nqubit_point)?)
        }
        ExperimentKind::SeWithAncilla => Records::SeAncilla(run_points(cfg, &ctx, se_ancilla_point)?),
        ExperimentKind::QfiPoint => Records::Point(run_points(cfg, &ctx, qfi_point)?),
        ExperimentKind::Saddle => Records::Saddle(run_points(cfg, &ctx, saddle_point)?),
        ExperimentKind::AncillaCheck => Records::Ancilla(run_points(cfg, &ctx, ancilla_point)?),
        ExperimentKind::Counterexample => Records::Counterexample(vec![counterexample_record(cfg)?]),
    };
    let out = ExperimentOutput { experiment: cfg.experiment, records };
    let bad = out.unconverged();
    if bad > 0 {
        log::warn!("{bad} of {} rows did not reach the tolerance", out.len());
    }
    Ok(out)
}
