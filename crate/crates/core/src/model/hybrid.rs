use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::affine::{normal_matrix, Affine};
use super::generator::{GeneratedWeights, WeightGenerator};
use super::{
    check_batch, check_input, Classifier, Gradient, KernelRole, ModelKind, ModelOutput, Prepared,
};
use crate::backend::Executor;
use crate::error::{dims, invalid, Result};
use crate::simulator::CircuitParams;

/// MLP whose first-layer weights Ŵ1 (M × D) come from a circuit applied to
/// the columns of a frozen seed matrix W1.
///
/// logits = W2ᵀ ReLU(Ŵ1 x) / √M + b2
#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    pub generator: WeightGenerator,
    /// Output layer, M → J.
    pub w2: Affine,
    pub train_w1: bool,
    pub freeze_circuit: bool,
}

impl HybridModel {
    pub fn new(generator: WeightGenerator, w2: Affine) -> Result<Self> {
        if w2.input_dim() != generator.rows() {
            return Err(dims(format!(
                "output layer expects {} hidden units, generator produces {}",
                w2.input_dim(),
                generator.rows()
            )));
        }
        Ok(Self {
            generator,
            w2,
            train_w1: false,
            freeze_circuit: false,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        qubits: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w1 = normal_matrix(hidden, input_dim, 1.0 / (hidden as f64).sqrt(), rng);
        let circuit = CircuitParams::random(qubits, depth, rng)?;
        let f_lin = Affine::init(qubits, hidden, rng);
        let w2 = Affine::init(hidden, classes, rng);
        Self::new(WeightGenerator::new(w1, circuit, f_lin)?, w2)
    }

    pub fn hidden(&self) -> usize {
        self.generator.rows()
    }

    /// Runs the D circuits that produce Ŵ1.
    pub fn generate_w1_hat(&self, exec: &Executor) -> Result<GeneratedWeights> {
        self.generator.generate(exec, 0)
    }

    /// Classical forward pass with cached weights; no circuit is executed.
    pub fn forward(&self, w1_hat: &GeneratedWeights, x: &[f64]) -> Result<ModelOutput> {
        Ok(ModelOutput::from_logits(
            self.logits_with(&w1_hat.weights, x)?,
        ))
    }

    fn logits_with(&self, w1_hat: &DMatrix<f64>, x: &[f64]) -> Result<DVector<f64>> {
        check_input(x, self.generator.columns())?;
        let h = w1_hat * DVector::from_column_slice(x);
        Ok(output_layer(&self.w2.weight, &self.w2.bias, &h))
    }
}

/// W ᵀReLU(h)/√M + b.
pub(crate) fn output_layer(
    weight: &DMatrix<f64>,
    bias: &DVector<f64>,
    h: &DVector<f64>,
) -> DVector<f64> {
    let scale = 1.0 / (h.len() as f64).sqrt();
    weight.tr_mul(&h.map(|v| v.max(0.0))) * scale + bias
}

/// Reverse pass through `output_layer ∘ (Ŵ1 ·)` for a batch.
pub(crate) struct MlpGrads {
    pub w1_hat: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

pub(crate) fn mlp_backward(
    w1_hat: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    xs: &[&[f64]],
    upstream: &[DVector<f64>],
) -> MlpGrads {
    let (m, d) = w1_hat.shape();
    let n = xs.len();
    let scale = 1.0 / (m as f64).sqrt();
    let x = DMatrix::from_fn(d, n, |i, s| xs[s][i]);
    let delta = DMatrix::from_fn(upstream.first().map_or(0, |g| g.len()), n, |j, s| {
        upstream[s][j]
    });
    let h = w1_hat * &x;
    let a = h.map(|v| v.max(0.0));
    let w2_grad = &a * delta.transpose() * scale;
    let b2 = delta.column_sum();
    let mut gh = w2 * &delta * scale;
    gh.zip_apply(&h, |g, hv| {
        if hv <= 0.0 {
            *g = 0.0;
        }
    });
    MlpGrads {
        w1_hat: gh * x.transpose(),
        w2: w2_grad,
        b2,
    }
}

impl Classifier for HybridModel {
    fn kind(&self) -> ModelKind {
        ModelKind::VqcMlpNet
    }

    fn input_dim(&self) -> usize {
        self.generator.columns()
    }

    fn num_classes(&self) -> usize {
        self.w2.output_dim()
    }

    fn prepare(&self, exec: &Executor, stream: u64) -> Result<Prepared> {
        Ok(Prepared::Hybrid(self.generator.generate(exec, stream)?))
    }

    fn logits(
        &self,
        prep: &Prepared,
        x: &[f64],
        _exec: &Executor,
        _stream: u64,
    ) -> Result<DVector<f64>> {
        match prep {
            Prepared::Hybrid(g) => self.logits_with(&g.weights, x),
            _ => Err(invalid("hybrid model needs generated weights")),
        }
    }

    fn backward(
        &self,
        prep: &Prepared,
        xs: &[&[f64]],
        upstream: &[DVector<f64>],
        exec: &Executor,
        stream: u64,
    ) -> Result<Gradient> {
        let Prepared::Hybrid(generated) = prep else {
            return Err(invalid("hybrid model needs generated weights"));
        };
        check_batch(xs, upstream, self.num_classes())?;
        for x in xs {
            check_input(x, self.input_dim())?;
        }
        let g = mlp_backward(&generated.weights, &self.w2.weight, xs, upstream);
        let gen = self.generator.backward(
            generated,
            &g.w1_hat,
            exec,
            stream,
            !self.freeze_circuit,
            self.train_w1,
        )?;
        let mut groups = Vec::with_capacity(6);
        if !self.freeze_circuit {
            groups.push(("angles", gen.angles));
        }
        groups.push(("f_lin.weight", gen.f_lin_weight.as_slice().to_vec()));
        groups.push(("f_lin.bias", gen.f_lin_bias.as_slice().to_vec()));
        groups.push(("w2.weight", g.w2.as_slice().to_vec()));
        groups.push(("w2.bias", g.b2.as_slice().to_vec()));
        if let Some(seed) = gen.seed {
            groups.push(("w1", seed.as_slice().to_vec()));
        }
        Ok(Gradient::new(groups))
    }

    fn parameters(&self) -> Vec<(&'static str, &[f64])> {
        let mut p: Vec<(&'static str, &[f64])> = Vec::with_capacity(6);
        if !self.freeze_circuit {
            p.push(("angles", self.generator.circuit.angles()));
        }
        p.push(("f_lin.weight", self.generator.f_lin.weight.as_slice()));
        p.push(("f_lin.bias", self.generator.f_lin.bias.as_slice()));
        p.push(("w2.weight", self.w2.weight.as_slice()));
        p.push(("w2.bias", self.w2.bias.as_slice()));
        if self.train_w1 {
            p.push(("w1", self.generator.seed.as_slice()));
        }
        p
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let gen = &mut self.generator;
        let mut p: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(6);
        if !self.freeze_circuit {
            p.push(("angles", gen.circuit.angles_mut()));
        }
        p.push(("f_lin.weight", gen.f_lin.weight.as_mut_slice()));
        p.push(("f_lin.bias", gen.f_lin.bias.as_mut_slice()));
        p.push(("w2.weight", self.w2.weight.as_mut_slice()));
        p.push(("w2.bias", self.w2.bias.as_mut_slice()));
        if self.train_w1 {
            p.push(("w1", gen.seed.as_mut_slice()));
        }
        p
    }

    fn kernel_role(&self, group: &str) -> KernelRole {
        match group {
            "angles" => KernelRole::Angles,
            "w2.weight" | "w2.bias" => KernelRole::Output,
            _ => KernelRole::Excluded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{
        amplitude_encode, apply_dense, dense_unitary_oracle, expectations_z, StateVector,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> HybridModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HybridModel::init(3, 4, 2, 2, 2, &mut rng).unwrap()
    }

    #[test]
    fn generation_matches_dense_pipeline() {
        let m = small(3);
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        let u = dense_unitary_oracle(&m.generator.circuit).unwrap();
        for d in 0..3 {
            let s = amplitude_encode(m.generator.seed.column(d).as_slice(), 2).unwrap();
            let z = expectations_z(&StateVector::from_amplitudes(2, apply_dense(&u, &s)).unwrap());
            let col = m.generator.f_lin.apply(&z).unwrap();
            assert!((col - g.weights.column(d)).amax() < 1e-10);
        }
    }

    #[test]
    fn identity_circuit_on_basis_columns() {
        let mut m = small(4);
        m.generator.circuit = CircuitParams::zeros(2, 2).unwrap();
        m.generator.seed = DMatrix::from_fn(4, 3, |r, _| if r == 0 { 1.0 } else { 0.0 });
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        let expected = m.generator.f_lin.apply(&[1.0, 1.0]).unwrap();
        for d in 0..3 {
            assert!((g.weights.column(d) - &expected).amax() < 1e-12);
        }
        m.generator.f_lin.weight.fill(0.0);
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        for d in 0..3 {
            assert_eq!(g.weights.column(d), m.generator.f_lin.bias.column(0));
        }
    }

    #[test]
    fn forward_matches_arithmetic() {
        let m = small(5);
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        let x = [0.4, -1.1, 0.8];
        let out = m.forward(&g, &x).unwrap();
        for j in 0..2 {
            let mut acc = 0.0;
            for h in 0..4 {
                let pre: f64 = (0..3).map(|d| g.weights[(h, d)] * x[d]).sum();
                acc += m.w2.weight[(h, j)] * pre.max(0.0);
            }
            let expected = acc / 2.0 + m.w2.bias[j];
            assert!((out.logits[j] - expected).abs() < 1e-12);
        }
        assert!((out.probabilities.sum() - 1.0).abs() < 1e-12);
        let zero = m.forward(&g, &[0.0; 3]).unwrap();
        assert!(zero.probabilities.iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn forward_is_classical() {
        let m = small(6);
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        let before = m.generator.executions();
        for i in 0..10 {
            m.forward(&g, &[i as f64, 1.0, -1.0]).unwrap();
        }
        assert_eq!(m.generator.executions(), before);
        assert_eq!(before, 3);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = small(7);
        m.train_w1 = true;
        let exec = Executor::exact();
        let xs: Vec<Vec<f64>> = vec![vec![0.3, 0.9, -0.2], vec![-0.5, 0.1, 0.7]];
        let up = vec![
            DVector::from_vec(vec![0.6, -0.4]),
            DVector::from_vec(vec![-1.0, 0.3]),
        ];
        let loss = |m: &HybridModel| -> f64 {
            let p = m.prepare(&exec, 0).unwrap();
            xs.iter()
                .zip(&up)
                .map(|(x, u)| m.logits(&p, x, &exec, 0).unwrap().dot(u))
                .sum()
        };
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let prep = m.prepare(&exec, 0).unwrap();
        let grad = m.backward(&prep, &refs, &up, &exec, 0).unwrap();
        let names: Vec<&'static str> = m.parameters().iter().map(|(n, _)| *n).collect();
        grad.check_shapes(&m.parameters()).unwrap();
        for (gi, name) in names.iter().enumerate() {
            let analytic = grad.groups()[gi].1.clone();
            for k in 0..analytic.len() {
                let eps = 1e-6;
                let mut plus = m.clone();
                plus.parameters_mut()[gi].1[k] += eps;
                let mut minus = m.clone();
                minus.parameters_mut()[gi].1[k] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!(
                    (fd - analytic[k]).abs() < 1e-6,
                    "{name}[{k}]: {fd} vs {}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn degenerate_seed_column_uses_ground_state() {
        let mut m = small(8);
        m.generator.seed.column_mut(1).fill(0.0);
        let g = m.generate_w1_hat(&Executor::exact()).unwrap();
        let s = crate::simulator::run_circuit(&StateVector::zero(2).unwrap(), &m.generator.circuit)
            .unwrap();
        let expected = m.generator.f_lin.apply(&expectations_z(&s)).unwrap();
        assert!((g.weights.column(1) - expected).amax() < 1e-12);
    }
}
