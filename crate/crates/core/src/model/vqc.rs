use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::affine::{pool_mean, Affine};
use super::{check_batch, check_input, Classifier, Gradient, KernelRole, ModelKind, Prepared};
use crate::backend::{mix_seed, Executor};
use crate::error::{dims, Result};
use crate::simulator::{amplitude_encode, encode_with_norm, CircuitParams, StateVector};

/// Circuit classifier: the input itself is amplitude-encoded and the U
/// Pauli-Z readouts feed an affine head U → J.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainVqc {
    pub circuit: CircuitParams,
    pub head: Affine,
    pub input_dim: usize,
    /// Mean-pool inputs wider than 2^U down to 2^U features.
    pub pool_inputs: bool,
    pub freeze_circuit: bool,
}

impl PlainVqc {
    pub fn new(
        circuit: CircuitParams,
        head: Affine,
        input_dim: usize,
        pool_inputs: bool,
    ) -> Result<Self> {
        let u = circuit.num_qubits();
        if head.input_dim() != u {
            return Err(dims(format!(
                "head expects {} readouts, circuit has {u} qubits",
                head.input_dim()
            )));
        }
        if (1usize << u) < input_dim && !pool_inputs {
            return Err(dims(format!(
                "{u} qubits cannot encode {input_dim} features"
            )));
        }
        Ok(Self {
            circuit,
            head,
            input_dim,
            pool_inputs,
            freeze_circuit: false,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        classes: usize,
        qubits: usize,
        depth: usize,
        pool_inputs: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let circuit = CircuitParams::random(qubits, depth, rng)?;
        let head = Affine::init(qubits, classes, rng);
        Self::new(circuit, head, input_dim, pool_inputs)
    }

    fn encode(&self, x: &[f64]) -> Result<StateVector> {
        check_input(x, self.input_dim)?;
        let u = self.circuit.num_qubits();
        let cap = 1usize << u;
        if x.len() > cap {
            amplitude_encode(&pool_mean(x, cap), u)
        } else {
            Ok(encode_with_norm(x, u)?.0)
        }
    }

    /// Readouts of the circuit on the encoded input.
    pub fn readout(&self, x: &[f64], exec: &Executor, stream: u64) -> Result<Vec<f64>> {
        exec.expectations(&self.encode(x)?, &self.circuit, stream)
    }
}

impl Classifier for PlainVqc {
    fn kind(&self) -> ModelKind {
        ModelKind::Vqc
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.head.output_dim()
    }

    fn prepare(&self, _exec: &Executor, _stream: u64) -> Result<Prepared> {
        Ok(Prepared::None)
    }

    fn logits(
        &self,
        _prep: &Prepared,
        x: &[f64],
        exec: &Executor,
        stream: u64,
    ) -> Result<DVector<f64>> {
        self.head.apply(&self.readout(x, exec, stream)?)
    }

    fn backward(
        &self,
        _prep: &Prepared,
        xs: &[&[f64]],
        upstream: &[DVector<f64>],
        exec: &Executor,
        stream: u64,
    ) -> Result<Gradient> {
        check_batch(xs, upstream, self.num_classes())?;
        let per_sample: Vec<(Vec<f64>, Vec<f64>)> = xs
            .par_iter()
            .zip(upstream.par_iter())
            .enumerate()
            .map(|(n, (x, delta))| {
                let state = self.encode(x)?;
                let s = mix_seed(stream, n as u64);
                let weights = (&self.head.weight * delta).as_slice().to_vec();
                if self.freeze_circuit {
                    Ok((exec.expectations(&state, &self.circuit, s)?, Vec::new()))
                } else {
                    let g = exec.weighted_gradient(&state, &self.circuit, &weights, s)?;
                    Ok((g.expectations, g.angle_grad))
                }
            })
            .collect::<Result<_>>()?;

        let u = self.circuit.num_qubits();
        let mut angles = vec![0.0; self.circuit.param_count()];
        let mut head_w = nalgebra::DMatrix::zeros(u, self.num_classes());
        let mut head_b = DVector::zeros(self.num_classes());
        for ((z, ag), delta) in per_sample.into_iter().zip(upstream) {
            head_w += DVector::from_vec(z) * delta.transpose();
            head_b += delta;
            for (a, g) in angles.iter_mut().zip(ag) {
                *a += g;
            }
        }
        let mut groups = Vec::with_capacity(3);
        if !self.freeze_circuit {
            groups.push(("angles", angles));
        }
        groups.push(("head.weight", head_w.as_slice().to_vec()));
        groups.push(("head.bias", head_b.as_slice().to_vec()));
        Ok(Gradient::new(groups))
    }

    fn parameters(&self) -> Vec<(&'static str, &[f64])> {
        let mut p: Vec<(&'static str, &[f64])> = Vec::with_capacity(3);
        if !self.freeze_circuit {
            p.push(("angles", self.circuit.angles()));
        }
        p.push(("head.weight", self.head.weight.as_slice()));
        p.push(("head.bias", self.head.bias.as_slice()));
        p
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut p: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(3);
        if !self.freeze_circuit {
            p.push(("angles", self.circuit.angles_mut()));
        }
        p.push(("head.weight", self.head.weight.as_mut_slice()));
        p.push(("head.bias", self.head.bias.as_mut_slice()));
        p
    }

    fn kernel_role(&self, group: &str) -> KernelRole {
        match group {
            "angles" => KernelRole::Angles,
            _ => KernelRole::Output,
        }
    }
}
