use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::affine::{normal_matrix, Affine};
use super::generator::{GeneratedWeights, WeightGenerator};
use super::hybrid::{mlp_backward, output_layer};
use super::{
    check_batch, check_input, Classifier, Gradient, KernelRole, ModelDims, ModelKind, Prepared,
};
use crate::backend::{mix_seed, Executor};
use crate::error::{dims, invalid, Result};
use crate::simulator::CircuitParams;

/// Two-circuit variant: Ŵ1 (M × D) and Ŵ2 (M × J) are both generated.
///
/// logits = Ŵ2ᵀ ReLU(Ŵ1 x) / √M + b
#[derive(Clone, Debug, PartialEq)]
pub struct HybridV2 {
    pub first: WeightGenerator,
    pub second: WeightGenerator,
    pub output_bias: DVector<f64>,
    pub freeze_circuit: bool,
}

impl HybridV2 {
    pub fn new(
        first: WeightGenerator,
        second: WeightGenerator,
        output_bias: DVector<f64>,
    ) -> Result<Self> {
        if first.rows() != second.rows() {
            return Err(dims(format!(
                "generated layers disagree on hidden width ({} vs {})",
                first.rows(),
                second.rows()
            )));
        }
        if second.columns() != output_bias.len() {
            return Err(dims("output bias length differs from class count"));
        }
        Ok(Self {
            first,
            second,
            output_bias,
            freeze_circuit: false,
        })
    }

    pub fn init<R: Rng + ?Sized>(d: &ModelDims, rng: &mut R) -> Result<Self> {
        let m = d.hidden;
        let scale = 1.0 / (m as f64).sqrt();
        let w1 = normal_matrix(m, d.input_dim, scale, rng);
        let c1 = CircuitParams::random(d.qubits, d.depth, rng)?;
        let f1 = Affine::init(d.qubits, m, rng);
        let (u2, l2) = (d.second_qubits(), d.second_depth());
        let w2 = normal_matrix(m, d.classes, scale, rng);
        let c2 = CircuitParams::random(u2, l2, rng)?;
        let f2 = Affine::init(u2, m, rng);
        Self::new(
            WeightGenerator::new(w1, c1, f1)?,
            WeightGenerator::new(w2, c2, f2)?,
            DVector::zeros(d.classes),
        )
    }

    pub fn generate(
        &self,
        exec: &Executor,
        stream: u64,
    ) -> Result<(GeneratedWeights, GeneratedWeights)> {
        Ok((
            self.first.generate(exec, mix_seed(stream, 1))?,
            self.second.generate(exec, mix_seed(stream, 2))?,
        ))
    }

    fn logits_with(
        &self,
        w1_hat: &DMatrix<f64>,
        w2_hat: &DMatrix<f64>,
        x: &[f64],
    ) -> Result<DVector<f64>> {
        check_input(x, self.first.columns())?;
        let h = w1_hat * DVector::from_column_slice(x);
        Ok(output_layer(w2_hat, &self.output_bias, &h))
    }
}

impl Classifier for HybridV2 {
    fn kind(&self) -> ModelKind {
        ModelKind::VqcMlpNetV2
    }

    fn input_dim(&self) -> usize {
        self.first.columns()
    }

    fn num_classes(&self) -> usize {
        self.output_bias.len()
    }

    fn prepare(&self, exec: &Executor, stream: u64) -> Result<Prepared> {
        let (first, second) = self.generate(exec, stream)?;
        Ok(Prepared::HybridV2 { first, second })
    }

    fn logits(
        &self,
        prep: &Prepared,
        x: &[f64],
        _exec: &Executor,
        _stream: u64,
    ) -> Result<DVector<f64>> {
        match prep {
            Prepared::HybridV2 { first, second } => {
                self.logits_with(&first.weights, &second.weights, x)
            }
            _ => Err(invalid("two-circuit model needs both generated layers")),
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
        let Prepared::HybridV2 { first, second } = prep else {
            return Err(invalid("two-circuit model needs both generated layers"));
        };
        check_batch(xs, upstream, self.num_classes())?;
        for x in xs {
            check_input(x, self.input_dim())?;
        }
        let g = mlp_backward(&first.weights, &second.weights, xs, upstream);
        let train = !self.freeze_circuit;
        let g1 = self
            .first
            .backward(first, &g.w1_hat, exec, mix_seed(stream, 1), train, false)?;
        let g2 = self
            .second
            .backward(second, &g.w2, exec, mix_seed(stream, 2), train, false)?;
        let mut groups = Vec::with_capacity(7);
        if train {
            groups.push(("angles", g1.angles));
        }
        groups.push(("f_lin.weight", g1.f_lin_weight.as_slice().to_vec()));
        groups.push(("f_lin.bias", g1.f_lin_bias.as_slice().to_vec()));
        if train {
            groups.push(("angles2", g2.angles));
        }
        groups.push(("f_lin2.weight", g2.f_lin_weight.as_slice().to_vec()));
        groups.push(("f_lin2.bias", g2.f_lin_bias.as_slice().to_vec()));
        groups.push(("output.bias", g.b2.as_slice().to_vec()));
        Ok(Gradient::new(groups))
    }

    fn parameters(&self) -> Vec<(&'static str, &[f64])> {
        let mut p: Vec<(&'static str, &[f64])> = Vec::with_capacity(7);
        if !self.freeze_circuit {
            p.push(("angles", self.first.circuit.angles()));
        }
        p.push(("f_lin.weight", self.first.f_lin.weight.as_slice()));
        p.push(("f_lin.bias", self.first.f_lin.bias.as_slice()));
        if !self.freeze_circuit {
            p.push(("angles2", self.second.circuit.angles()));
        }
        p.push(("f_lin2.weight", self.second.f_lin.weight.as_slice()));
        p.push(("f_lin2.bias", self.second.f_lin.bias.as_slice()));
        p.push(("output.bias", self.output_bias.as_slice()));
        p
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let freeze = self.freeze_circuit;
        let (a, b) = (&mut self.first, &mut self.second);
        let mut p: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(7);
        if !freeze {
            p.push(("angles", a.circuit.angles_mut()));
        }
        p.push(("f_lin.weight", a.f_lin.weight.as_mut_slice()));
        p.push(("f_lin.bias", a.f_lin.bias.as_mut_slice()));
        if !freeze {
            p.push(("angles2", b.circuit.angles_mut()));
        }
        p.push(("f_lin2.weight", b.f_lin.weight.as_mut_slice()));
        p.push(("f_lin2.bias", b.f_lin.bias.as_mut_slice()));
        p.push(("output.bias", self.output_bias.as_mut_slice()));
        p
    }

    fn kernel_role(&self, group: &str) -> KernelRole {
        match group {
            "angles" | "angles2" => KernelRole::Angles,
            "f_lin2.weight" | "f_lin2.bias" | "output.bias" => KernelRole::Output,
            _ => KernelRole::Excluded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HybridModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> HybridV2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HybridV2::init(&ModelDims::new(3, 4, 2, 2, 1), &mut rng).unwrap()
    }

    #[test]
    fn zero_maps_give_uniform_output() {
        let mut m = small(41);
        for g in [&mut m.first, &mut m.second] {
            g.f_lin.weight.fill(0.0);
            g.f_lin.bias.fill(0.0);
        }
        let exec = Executor::exact();
        let p = m.prepare(&exec, 0).unwrap();
        let out = m.output(&p, &[0.3, -0.2, 0.9], &exec, 0).unwrap();
        assert!(out.logits.iter().all(|l| *l == 0.0));
        assert!(out.probabilities.iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn reduces_to_single_circuit_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut h = HybridModel::init(3, 4, 1, 2, 2, &mut rng).unwrap();
        h.w2.bias[0] = 0.25;
        let second = WeightGenerator::new(
            DMatrix::from_fn(4, 1, |r, _| if r == 0 { 1.0 } else { 0.0 }),
            CircuitParams::zeros(2, 1).unwrap(),
            Affine::new(DMatrix::zeros(2, 4), h.w2.weight.column(0).into_owned()).unwrap(),
        )
        .unwrap();
        let v2 = HybridV2::new(h.generator.clone(), second, h.w2.bias.clone()).unwrap();
        let exec = Executor::exact();
        let (ph, pv) = (h.prepare(&exec, 0).unwrap(), v2.prepare(&exec, 0).unwrap());
        let x = [0.5, -0.1, 0.8];
        let a = h.logits(&ph, &x, &exec, 0).unwrap();
        let b = v2.logits(&pv, &x, &exec, 0).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = small(43);
        let exec = Executor::exact();
        let xs = [vec![0.4, -0.6, 0.2], vec![-0.1, 0.9, 0.5]];
        let up = [
            DVector::from_vec(vec![0.7, -0.2]),
            DVector::from_vec(vec![-0.4, 1.0]),
        ];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let prep = m.prepare(&exec, 0).unwrap();
        let grad = m.backward(&prep, &refs, &up, &exec, 0).unwrap();
        grad.check_shapes(&m.parameters()).unwrap();
        let loss = |m: &HybridV2| -> f64 {
            let p = m.prepare(&exec, 0).unwrap();
            xs.iter()
                .zip(&up)
                .map(|(x, u)| m.logits(&p, x, &exec, 0).unwrap().dot(u))
                .sum()
        };
        for (gi, (name, analytic)) in grad.groups().iter().enumerate() {
            for k in 0..analytic.len() {
                let mut p = m.clone();
                p.parameters_mut()[gi].1[k] += 1e-6;
                let mut q = m.clone();
                q.parameters_mut()[gi].1[k] -= 1e-6;
                let fd = (loss(&p) - loss(&q)) / 2e-6;
                assert!((fd - analytic[k]).abs() < 1e-6, "{name}[{k}]");
            }
        }
    }
}
