use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::affine::Affine;
use super::{check_batch, check_input, Classifier, Gradient, KernelRole, ModelKind, Prepared};
use crate::backend::Executor;
use crate::error::Result;

/// One-hidden-layer classical baseline: W2ᵀ ReLU(W1ᵀ x + b1) + b2.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Affine,
    pub w2: Affine,
}

impl Mlp {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: Affine::init(input_dim, hidden, rng),
            w2: Affine::init(hidden, classes, rng),
        }
    }
}

impl Classifier for Mlp {
    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn input_dim(&self) -> usize {
        self.w1.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.w2.output_dim()
    }

    fn prepare(&self, _exec: &Executor, _stream: u64) -> Result<Prepared> {
        Ok(Prepared::None)
    }

    fn logits(
        &self,
        _prep: &Prepared,
        x: &[f64],
        _exec: &Executor,
        _stream: u64,
    ) -> Result<DVector<f64>> {
        let h = self.w1.apply(x)?.map(|v| v.max(0.0));
        self.w2.apply(h.as_slice())
    }

    fn backward(
        &self,
        _prep: &Prepared,
        xs: &[&[f64]],
        upstream: &[DVector<f64>],
        _exec: &Executor,
        _stream: u64,
    ) -> Result<Gradient> {
        check_batch(xs, upstream, self.num_classes())?;
        for x in xs {
            check_input(x, self.input_dim())?;
        }
        let n = xs.len();
        let x = DMatrix::from_fn(self.input_dim(), n, |i, s| xs[s][i]);
        let delta = DMatrix::from_fn(self.num_classes(), n, |j, s| upstream[s][j]);
        let mut h = self.w1.weight.tr_mul(&x);
        for mut col in h.column_iter_mut() {
            col += &self.w1.bias;
        }
        let a = h.map(|v| v.max(0.0));
        let mut gh = &self.w2.weight * &delta;
        gh.zip_apply(&h, |g, hv| {
            if hv <= 0.0 {
                *g = 0.0;
            }
        });
        Ok(Gradient::new(vec![
            ("w1.weight", (&x * gh.transpose()).as_slice().to_vec()),
            ("w1.bias", gh.column_sum().as_slice().to_vec()),
            ("w2.weight", (&a * delta.transpose()).as_slice().to_vec()),
            ("w2.bias", delta.column_sum().as_slice().to_vec()),
        ]))
    }

    fn parameters(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w1.weight", self.w1.weight.as_slice()),
            ("w1.bias", self.w1.bias.as_slice()),
            ("w2.weight", self.w2.weight.as_slice()),
            ("w2.bias", self.w2.bias.as_slice()),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w1.weight", self.w1.weight.as_mut_slice()),
            ("w1.bias", self.w1.bias.as_mut_slice()),
            ("w2.weight", self.w2.weight.as_mut_slice()),
            ("w2.bias", self.w2.bias.as_mut_slice()),
        ]
    }

    fn kernel_role(&self, group: &str) -> KernelRole {
        if group.starts_with("w2") {
            KernelRole::Output
        } else {
            KernelRole::Excluded
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut m = Mlp::init(3, 4, 2, &mut rng);
        m.w1.bias = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        m.w2.bias = DVector::from_vec(vec![0.05, -0.05]);
        let x = [0.7, -0.3, 1.2];
        let out = m
            .output(&Prepared::None, &x, &Executor::exact(), 0)
            .unwrap();
        for j in 0..2 {
            let mut acc = m.w2.bias[j];
            for h in 0..4 {
                let pre: f64 =
                    (0..3).map(|d| m.w1.weight[(d, h)] * x[d]).sum::<f64>() + m.w1.bias[h];
                acc += m.w2.weight[(h, j)] * pre.max(0.0);
            }
            assert!((out.logits[j] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let m = Mlp::init(5, 6, 4, &mut rng);
        let out = m
            .output(&Prepared::None, &[0.0; 5], &Executor::exact(), 0)
            .unwrap();
        assert!(out.probabilities.iter().all(|p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let m = Mlp::init(3, 5, 2, &mut rng);
        let exec = Executor::exact();
        let xs = [vec![0.3, -0.9, 0.5], vec![1.1, 0.4, -0.2]];
        let up = [
            DVector::from_vec(vec![1.0, -0.5]),
            DVector::from_vec(vec![-0.3, 0.8]),
        ];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let grad = m.backward(&Prepared::None, &refs, &up, &exec, 0).unwrap();
        let loss = |m: &Mlp| -> f64 {
            xs.iter()
                .zip(&up)
                .map(|(x, u)| m.logits(&Prepared::None, x, &exec, 0).unwrap().dot(u))
                .sum()
        };
        for (gi, (_, analytic)) in grad.groups().iter().enumerate() {
            for k in 0..analytic.len() {
                let mut p = m.clone();
                p.parameters_mut()[gi].1[k] += 1e-6;
                let mut q = m.clone();
                q.parameters_mut()[gi].1[k] -= 1e-6;
                let fd = (loss(&p) - loss(&q)) / 2e-6;
                assert!((fd - analytic[k]).abs() < 1e-7);
            }
        }
    }
}
