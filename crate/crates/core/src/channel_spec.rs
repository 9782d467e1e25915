//! Tabulated channel families stored as JSON.
//!
//! ```json
//! { "d": 2, "m1": 2, "m2": 2,
//!   "x_grid": [0.0, 0.01],
//!   "kraus": [ [ [[re, im], ...], ... ], ... ] }
//! ```
//!
//! `kraus[k][i]` is operator `i` at `x_grid[k]`, either as a flat row-major
//! list of `m2 * m1` pairs or as `m2` rows of `m1` pairs. Between grid points
//! the entries are interpolated linearly and the result is mapped back onto
//! the completeness constraint with `F -> F S^{-1/2}`, `S = sum F^dag F`.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channels::{ChannelFamily, KrausChannel};
use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix};

#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub x_grid: Vec<f64>,
    /// `kraus[k]` is the channel at `x_grid[k]`.
    pub kraus: Vec<KrausChannel>,
}

#[derive(Deserialize)]
struct RawSpec {
    d: usize,
    m1: usize,
    m2: usize,
    x_grid: Vec<f64>,
    kraus: Vec<Vec<Value>>,
}

#[derive(Serialize)]
struct RawSpecOut {
    d: usize,
    m1: usize,
    m2: usize,
    x_grid: Vec<f64>,
    kraus: Vec<Vec<Vec<[f64; 2]>>>,
}

fn parse_pair(v: &Value, loc: &str) -> Result<Complex64> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::Schema(format!("{loc}: expected a [re, im] pair, got {v}")))?;
    let re = pair[0].as_f64();
    let im = pair[1].as_f64();
    match (re, im) {
        (Some(re), Some(im)) if re.is_finite() && im.is_finite() => Ok(Complex64::new(re, im)),
        _ => Err(Error::Schema(format!("{loc}: entries must be finite numbers, got {v}"))),
    }
}

fn is_pair(v: &Value) -> bool {
    v.as_array().is_some_and(|a| a.len() == 2 && a.iter().all(Value::is_number))
}

fn parse_operator(v: &Value, m2: usize, m1: usize, loc: &str) -> Result<ComplexMatrix> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::Schema(format!("{loc}: operator must be an array")))?;
    let mut entries = Vec::with_capacity(m2 * m1);
    if items.first().is_some_and(is_pair) || items.is_empty() {
        if items.len() != m2 * m1 {
            return Err(Error::Schema(format!(
                "{loc}: expected {} entries ({m2}x{m1} row-major), got {}",
                m2 * m1,
                items.len()
            )));
        }
        for (k, item) in items.iter().enumerate() {
            entries.push(parse_pair(item, &format!("{loc}[{k}]"))?);
        }
    } else {
        if items.len() != m2 {
            return Err(Error::Schema(format!("{loc}: expected {m2} rows, got {}", items.len())));
        }
        for (r, row) in items.iter().enumerate() {
            let row = row
                .as_array()
                .ok_or_else(|| Error::Schema(format!("{loc} row {r}: must be an array")))?;
            if row.len() != m1 {
                return Err(Error::Schema(format!(
                    "{loc} row {r}: expected {m1} entries, got {}",
                    row.len()
                )));
            }
            for (c, item) in row.iter().enumerate() {
                entries.push(parse_pair(item, &format!("{loc}[{r}][{c}]"))?);
            }
        }
    }
    numkit::from_rows(m2, m1, &entries)
}

pub fn parse_channel_spec(text: &str) -> Result<ChannelSpec> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| {
        Error::Schema(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    if raw.d == 0 || raw.m1 == 0 || raw.m2 == 0 {
        return Err(Error::Schema("d, m1 and m2 must be positive".into()));
    }
    numkit::check_dim(raw.m1)?;
    numkit::check_dim(raw.m2)?;
    if raw.x_grid.is_empty() {
        return Err(Error::Schema("x_grid must not be empty".into()));
    }
    if raw.x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Schema("x_grid entries must be finite".into()));
    }
    if raw.x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Schema("x_grid must be strictly increasing".into()));
    }
    if raw.kraus.len() != raw.x_grid.len() {
        return Err(Error::Schema(format!(
            "kraus has {} entries for {} grid points",
            raw.kraus.len(),
            raw.x_grid.len()
        )));
    }
    let mut kraus = Vec::with_capacity(raw.kraus.len());
    for (k, ops) in raw.kraus.iter().enumerate() {
        if ops.len() != raw.d {
            return Err(Error::Schema(format!(
                "kraus[{k}]: expected {} operators, got {}",
                raw.d,
                ops.len()
            )));
        }
        let mats = ops
            .iter()
            .enumerate()
            .map(|(i, op)| parse_operator(op, raw.m2, raw.m1, &format!("kraus[{k}][{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let ch = KrausChannel::new_unchecked(mats)?;
        if let Err(e) = ch.validate() {
            log::error!("channel at x_grid[{k}] = {} is not trace preserving", raw.x_grid[k]);
            return Err(e);
        }
        kraus.push(ch);
    }
    Ok(ChannelSpec { d: raw.d, m1: raw.m1, m2: raw.m2, x_grid: raw.x_grid, kraus })
}

fn renormalize(ops: Vec<ComplexMatrix>) -> Result<KrausChannel> {
    let m1 = ops[0].ncols();
    let mut s = ComplexMatrix::zeros(m1, m1);
    for f in &ops {
        s += f.adjoint() * f;
    }
    let eig = numkit::hermitian_eig(&numkit::hermitian_part(&s))?;
    if eig.min() <= 1e-12 {
        return Err(Error::NumericalFailure(
            "interpolated Kraus operators are rank deficient".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
    let root = &eig.eigenvectors * numkit::real_diag(&inv_sqrt) * eig.eigenvectors.adjoint();
    KrausChannel::new_unchecked(ops.iter().map(|f| f * &root).collect())
}

impl ChannelSpec {
    /// Channel at `x`, interpolated between grid points.
    pub fn evaluate(&self, x: f64) -> Result<KrausChannel> {
        let grid = &self.x_grid;
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return Err(Error::DomainError(format!("x = {x} outside the tabulated range [{lo}, {hi}]")));
        }
        let k = grid.partition_point(|&g| g <= x);
        // grid[k - 1] <= x < grid[k], or x == hi
        let left = k - 1;
        if grid[left] == x || left + 1 == grid.len() {
            return Ok(self.kraus[left].clone());
        }
        let s = (x - grid[left]) / (grid[left + 1] - grid[left]);
        let a = self.kraus[left].ops();
        let b = self.kraus[left + 1].ops();
        let ops = a.iter().zip(b).map(|(fa, fb)| fa.scale(1.0 - s) + fb.scale(s)).collect();
        renormalize(ops)
    }

    pub fn into_family(self, label: impl Into<String>) -> Result<ChannelFamily> {
        let mut params = BTreeMap::new();
        params.insert("x_min".to_string(), self.x_grid[0]);
        params.insert("x_max".to_string(), self.x_grid[self.x_grid.len() - 1]);
        let x0 = self.x_grid[0];
        ChannelFamily::new_probed(label, params, x0, move |x| self.evaluate(x))
    }
}

pub fn load_channel_spec(path: impl AsRef<Path>) -> Result<ChannelFamily> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let spec = parse_channel_spec(&text)
        .map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "file".into());
    spec.into_family(label)
}

/// JSON text tabulating `fam` on `x_grid` (flat row-major operators).
pub fn export_channel_spec(fam: &ChannelFamily, x_grid: &[f64]) -> Result<String> {
    if x_grid.is_empty() {
        return Err(Error::DomainError("export grid is empty".into()));
    }
    let mut kraus = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let ch = fam.evaluate(x)?;
        let ops = ch
            .ops()
            .iter()
            .map(|f| {
                let mut flat = Vec::with_capacity(f.len());
                for r in 0..f.nrows() {
                    for c in 0..f.ncols() {
                        flat.push([f[(r, c)].re, f[(r, c)].im]);
                    }
                }
                flat
            })
            .collect();
        kraus.push(ops);
    }
    let out = RawSpecOut {
        d: fam.kraus_rank(),
        m1: fam.input_dim(),
        m2: fam.output_dim(),
        x_grid: x_grid.to_vec(),
        kraus,
    };
    serde_json::to_string_pretty(&out).map_err(|e| Error::Schema(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{dephasing, unitary_family};
    use crate::qfi::qfi_pure_probe;
    use crate::state::DensityMatrix;

    fn grid(a: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + step * k as f64).collect()
    }

    #[test]
    fn round_trip_preserves_qfi() {
        let fam = dephasing(0.5).unwrap();
        let g = grid(0.0, 5e-4, 5);
        let text = export_channel_spec(&fam, &g).unwrap();
        let loaded = parse_channel_spec(&text).unwrap().into_family("dephasing").unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let a = qfi_pure_probe(&rho, &fam, 0.0, 1e-3, true).unwrap().value;
        let b = qfi_pure_probe(&rho, &loaded, 0.0, 1e-3, true).unwrap().value;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn single_unitary_table() {
        let fam = unitary_family(&numkit::pauli_z().scale(0.5), 1.0).unwrap();
        let g = grid(-0.1, 0.05, 5);
        let loaded = parse_channel_spec(&export_channel_spec(&fam, &g).unwrap())
            .unwrap()
            .into_family("u")
            .unwrap();
        assert_eq!(loaded.kraus_rank(), 1);
        let mid = loaded.evaluate(0.025).unwrap();
        assert!(numkit::unitarity_residual(&mid.ops()[0]) < 1e-12);
        let exact = fam.evaluate(0.025).unwrap();
        assert!(numkit::frobenius(&(&mid.ops()[0] - &exact.ops()[0])) < 1e-3);
        assert!(loaded.evaluate(0.2).is_err());
    }

    #[test]
    fn nested_rows_accepted() {
        let text = r#"{"d":1,"m1":2,"m2":2,"x_grid":[0.0],
            "kraus":[[ [[[1,0],[0,0]],[[0,0],[1,0]]] ]]}"#;
        let spec = parse_channel_spec(text).unwrap();
        assert_eq!(spec.kraus[0].ops()[0], numkit::identity(2));
    }

    #[test]
    fn schema_errors_name_the_operator() {
        let text = r#"{"d":2,"m1":2,"m2":2,"x_grid":[0.0],
            "kraus":[[ [[[1,0],[0,0]],[[0,0],[1,0]]], [[[0,0]],[[0,0],[0,0]]] ]]}"#;
        let msg = parse_channel_spec(text).unwrap_err().to_string();
        assert!(msg.contains("kraus[0][1]") && msg.contains("row 0"), "{msg}");

        let msg = parse_channel_spec("{\"d\": 1,\n \"m1\": }").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn completeness_checked_at_load() {
        let text = r#"{"d":1,"m1":2,"m2":2,"x_grid":[0.0],
            "kraus":[[ [[1,0],[0,0],[0,0],[0.5,0]] ]]}"#;
        assert!(matches!(parse_channel_spec(text), Err(Error::CompletenessViolation { .. })));
    }
}
