//! Kraus-operator channels, parameterized families and the channel zoo.

mod zoo;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkit::{self, ComplexMatrix, STRUCTURAL_TOL};
use crate::state::DensityMatrix;

pub use zoo::{
    counterexample_8d, counterexample_pair, dephasing, spontaneous_emission, unitary_family,
    xy_noise,
};

/// Channel `rho -> sum_j F_j rho F_j^dag` with `m2 x m1` Kraus operators.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Build and validate.
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let ch = Self { ops };
        ch.validate()?;
        Ok(ch)
    }

    /// Build without the completeness check; shapes are still checked.
    pub fn new_unchecked(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let ch = Self { ops };
        ch.check_shapes()?;
        Ok(ch)
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn kraus_rank(&self) -> usize {
        self.ops.len()
    }

    pub fn input_dim(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.ops[0].nrows()
    }

    fn check_shapes(&self) -> Result<()> {
        let first = self
            .ops
            .first()
            .ok_or_else(|| Error::ShapeMismatch("channel has no Kraus operators".into()))?;
        let (r, c) = first.shape();
        if r == 0 || c == 0 {
            return Err(Error::ShapeMismatch("empty Kraus operator".into()));
        }
        for (j, op) in self.ops.iter().enumerate() {
            if op.shape() != (r, c) {
                return Err(Error::ShapeMismatch(format!(
                    "Kraus operator {j} is {}x{}, expected {r}x{c}",
                    op.nrows(),
                    op.ncols()
                )));
            }
            numkit::ensure_finite(op)?;
        }
        Ok(())
    }

    /// `||sum_j F_j^dag F_j - I||_F`.
    pub fn completeness_residual(&self) -> f64 {
        let m1 = self.input_dim();
        let mut acc = -numkit::identity(m1);
        for f in &self.ops {
            acc += f.adjoint() * f;
        }
        numkit::frobenius(&acc)
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let residual = self.completeness_residual();
        if !(residual <= STRUCTURAL_TOL) {
            return Err(Error::CompletenessViolation { residual });
        }
        Ok(())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "state of dimension {} fed to a channel with input dimension {}",
                rho.dim(),
                self.input_dim()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.output_dim(), self.output_dim());
        for f in &self.ops {
            out += f * rho.matrix() * f.adjoint();
        }
        DensityMatrix::new(numkit::hermitian_part(&out))
    }

    /// Kraus operators `{F_i (x) G_j}` in lexicographic `(i, j)` order.
    pub fn tensor(&self, other: &KrausChannel) -> Result<KrausChannel> {
        numkit::check_dim(self.input_dim() * other.input_dim())?;
        numkit::check_dim(self.output_dim() * other.output_dim())?;
        let mut ops = Vec::with_capacity(self.kraus_rank() * other.kraus_rank());
        for f in &self.ops {
            for g in &other.ops {
                ops.push(numkit::kron(f, g)?);
            }
        }
        Ok(KrausChannel { ops })
    }

    /// `K (x) I_A` with Kraus operators `F_j (x) I_A`.
    pub fn extend_with_identity_ancilla(&self, anc_dim: usize) -> Result<KrausChannel> {
        if anc_dim == 0 {
            return Err(Error::DomainError("ancilla dimension must be positive".into()));
        }
        let id = numkit::identity(anc_dim);
        let ops = self
            .ops
            .iter()
            .map(|f| numkit::kron(f, &id))
            .collect::<Result<Vec<_>>>()?;
        Ok(KrausChannel { ops })
    }

    /// Extension with an ancilla of the same dimension as the input.
    pub fn extend_default(&self) -> Result<KrausChannel> {
        self.extend_with_identity_ancilla(self.input_dim())
    }
}

type Evaluator = dyn Fn(f64) -> Result<KrausChannel> + Send + Sync;

/// Map `x -> K_x` with fixed Kraus rank and dimensions.
#[derive(Clone)]
pub struct ChannelFamily {
    label: String,
    params: BTreeMap<String, f64>,
    kraus_rank: usize,
    input_dim: usize,
    output_dim: usize,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for ChannelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelFamily")
            .field("label", &self.label)
            .field("params", &self.params)
            .field("kraus_rank", &self.kraus_rank)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl ChannelFamily {
    /// Wrap an evaluator; the shape is probed at `x = 0`.
    pub fn new<F>(label: impl Into<String>, params: BTreeMap<String, f64>, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<KrausChannel> + Send + Sync + 'static,
    {
        Self::new_probed(label, params, 0.0, eval)
    }

    pub fn new_probed<F>(
        label: impl Into<String>,
        params: BTreeMap<String, f64>,
        probe_x: f64,
        eval: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> Result<KrausChannel> + Send + Sync + 'static,
    {
        let probe = eval(probe_x)?;
        probe.validate()?;
        Ok(Self {
            label: label.into(),
            params,
            kraus_rank: probe.kraus_rank(),
            input_dim: probe.input_dim(),
            output_dim: probe.output_dim(),
            eval: Arc::new(eval),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn kraus_rank(&self) -> usize {
        self.kraus_rank
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Evaluate and validate `K_x`.
    pub fn evaluate(&self, x: f64) -> Result<KrausChannel> {
        if !x.is_finite() {
            return Err(Error::DomainError(format!("parameter x = {x} is not finite")));
        }
        let ch = (self.eval)(x)?;
        if ch.kraus_rank() != self.kraus_rank
            || ch.input_dim() != self.input_dim
            || ch.output_dim() != self.output_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "family '{}' changed shape at x = {x}",
                self.label
            )));
        }
        ch.validate()?;
        Ok(ch)
    }

    /// The pair `(K_x, K_{x+dx})`.
    pub fn pair(&self, x: f64, dx: f64) -> Result<(KrausChannel, KrausChannel)> {
        Ok((self.evaluate(x)?, self.evaluate(x + dx)?))
    }

    pub fn tensor(&self, other: &ChannelFamily) -> Result<ChannelFamily> {
        numkit::check_dim(self.input_dim * other.input_dim)?;
        numkit::check_dim(self.output_dim * other.output_dim)?;
        let a = self.clone();
        let b = other.clone();
        let mut params = BTreeMap::new();
        for (k, v) in &self.params {
            params.insert(format!("a.{k}"), *v);
        }
        for (k, v) in &other.params {
            params.insert(format!("b.{k}"), *v);
        }
        let label = format!("({})x({})", self.label, other.label);
        ChannelFamily::new(label, params, move |x| a.evaluate(x)?.tensor(&b.evaluate(x)?))
    }

    /// `n`-fold tensor power: `n` probes each undergoing the same channel.
    pub fn n_fold(&self, n: usize) -> Result<ChannelFamily> {
        if n == 0 {
            return Err(Error::DomainError("n_fold needs n >= 1".into()));
        }
        let dim = (self.input_dim as f64).powi(n as i32).max((self.output_dim as f64).powi(n as i32));
        if dim > numkit::max_dim() as f64 {
            return Err(Error::CapacityError { dim: dim as usize, cap: numkit::max_dim() });
        }
        let base = self.clone();
        let mut params = self.params.clone();
        params.insert("N".into(), n as f64);
        let label = if n == 1 { self.label.clone() } else { format!("{}^{n}", self.label) };
        ChannelFamily::new(label, params, move |x| {
            let single = base.evaluate(x)?;
            let mut acc = single.clone();
            for _ in 1..n {
                acc = acc.tensor(&single)?;
            }
            Ok(acc)
        })
    }

    /// Family of the extended channel `K_x (x) I_A`.
    pub fn extend_with_identity_ancilla(&self, anc_dim: usize) -> Result<ChannelFamily> {
        numkit::check_dim(self.input_dim * anc_dim)?;
        let base = self.clone();
        let mut params = self.params.clone();
        params.insert("ancilla_dim".into(), anc_dim as f64);
        ChannelFamily::new(format!("{}+anc{anc_dim}", self.label), params, move |x| {
            base.evaluate(x)?.extend_with_identity_ancilla(anc_dim)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_valid_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random::unitary(3, &mut rng);
        assert!(KrausChannel::new(vec![u]).is_ok());
    }

    #[test]
    fn half_identities_violate_completeness() {
        let half = numkit::identity(2).scale(0.5);
        match KrausChannel::new(vec![half.clone(), half]) {
            Err(Error::CompletenessViolation { residual }) => {
                assert!((residual - 0.5f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let r = KrausChannel::new(vec![numkit::identity(2), numkit::identity(3)]);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn apply_identity_and_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = DensityMatrix::new(random::density(3, &mut rng)).unwrap();
        let id = KrausChannel::new(vec![numkit::identity(3)]).unwrap();
        let out = id.apply(&rho).unwrap();
        assert!(numkit::frobenius(&(out.matrix() - rho.matrix())) < 1e-15);
        let q = KrausChannel::new(vec![numkit::identity(2)]).unwrap();
        assert!(matches!(q.apply(&rho), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn ancilla_extension() {
        let ch = dephasing(0.4).unwrap().evaluate(0.3).unwrap();
        assert_eq!(ch.extend_with_identity_ancilla(1).unwrap(), ch);
        let ext = ch.extend_with_identity_ancilla(2).unwrap();
        assert_eq!(ext.input_dim(), 4);
        assert_eq!(ext.kraus_rank(), 2);
        assert!(ext.completeness_residual() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rs = DensityMatrix::new(random::density(2, &mut rng)).unwrap();
        let ra = DensityMatrix::new(random::density(2, &mut rng)).unwrap();
        let joint = DensityMatrix::new(numkit::kron(rs.matrix(), ra.matrix()).unwrap()).unwrap();
        let lhs = ext.apply(&joint).unwrap();
        let rhs = numkit::kron(ch.apply(&rs).unwrap().matrix(), ra.matrix()).unwrap();
        assert!(numkit::frobenius(&(lhs.matrix() - rhs)) < 1e-12);
    }

    #[test]
    fn tensor_examples() {
        let deph = dephasing(0.6).unwrap();
        let two = deph.tensor(&deph).unwrap();
        assert_eq!(two.kraus_rank(), 4);
        let ch = two.evaluate(0.2).unwrap();
        let single = deph.evaluate(0.2).unwrap();
        // lexicographic order: F1F1, F1F2, F2F1, F2F2
        let f = single.ops();
        for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
            let expected = numkit::kron(&f[*i], &f[*j]).unwrap();
            assert!(numkit::frobenius(&(&ch.ops()[k] - expected)) < 1e-15);
        }

        let h = numkit::pauli_z().scale(0.5);
        let u = unitary_family(&h, 1.0).unwrap();
        let uu = u.tensor(&u).unwrap();
        assert_eq!(uu.kraus_rank(), 1);

        let three = deph.n_fold(3).unwrap();
        assert_eq!(three.kraus_rank(), 8);
        assert_eq!(three.input_dim(), 8);
        assert_eq!(three.output_dim(), 8);
    }

    #[test]
    fn tensor_is_associative_in_action() {
        let a = dephasing(0.3).unwrap();
        let b = spontaneous_emission(0.7).unwrap();
        let cfam = xy_noise(0.5).unwrap();
        let left = a.tensor(&b).unwrap().tensor(&cfam).unwrap().evaluate(0.4).unwrap();
        let right = a.tensor(&b.tensor(&cfam).unwrap()).unwrap().evaluate(0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let rho = DensityMatrix::new(random::density(8, &mut rng)).unwrap();
            let l = left.apply(&rho).unwrap();
            let r = right.apply(&rho).unwrap();
            assert!(numkit::frobenius(&(l.matrix() - r.matrix())) < 1e-10);
        }
    }

    #[test]
    fn family_shape_changes_are_rejected() {
        let fam = ChannelFamily::new("odd", BTreeMap::new(), |x| {
            if x > 1.0 {
                KrausChannel::new(vec![numkit::identity(3)])
            } else {
                KrausChannel::new(vec![numkit::identity(2)])
            }
        })
        .unwrap();
        assert!(fam.evaluate(0.5).is_ok());
        assert!(matches!(fam.evaluate(2.0), Err(Error::ShapeMismatch(_))));
        assert!(fam.evaluate(f64::NAN).is_err());
    }
}
