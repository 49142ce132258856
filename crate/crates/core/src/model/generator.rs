//! Quantum weight generation: every column of a fixed seed matrix is
//! amplitude-encoded, evolved by the shared circuit, read out as U Pauli-Z
//! expectations and mapped back to a weight column by a shared affine map.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::affine::Affine;
use crate::backend::{mix_seed, Executor};
use crate::error::{dims, Error, Result};
use crate::simulator::{encode_with_norm, CircuitParams, DEGENERATE_NORM};

/// Output of one generation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedWeights {
    /// Generated matrix, one column per seed column.
    pub weights: DMatrix<f64>,
    /// U × columns matrix of the Pauli-Z readouts behind each column.
    pub readout: DMatrix<f64>,
}

#[derive(Debug)]
pub struct WeightGenerator {
    /// Fixed seed matrix (rows = encoded length, one circuit run per column).
    pub seed: DMatrix<f64>,
    pub circuit: CircuitParams,
    /// Readout-to-weight map R^U → R^rows, shared by all columns.
    pub f_lin: Affine,
    executions: AtomicUsize,
}

impl Clone for WeightGenerator {
    fn clone(&self) -> Self {
        Self {
            seed: self.seed.clone(),
            circuit: self.circuit.clone(),
            f_lin: self.f_lin.clone(),
            executions: AtomicUsize::new(self.executions()),
        }
    }
}

impl PartialEq for WeightGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.circuit == other.circuit && self.f_lin == other.f_lin
    }
}

/// Gradients flowing out of [`WeightGenerator::backward`].
#[derive(Clone, Debug)]
pub struct GeneratorGrad {
    pub angles: Vec<f64>,
    pub f_lin_weight: DMatrix<f64>,
    pub f_lin_bias: DVector<f64>,
    pub seed: Option<DMatrix<f64>>,
}

impl WeightGenerator {
    pub fn new(seed: DMatrix<f64>, circuit: CircuitParams, f_lin: Affine) -> Result<Self> {
        let u = circuit.num_qubits();
        if (1usize << u) < seed.nrows() {
            return Err(dims(format!(
                "{u} qubits cannot encode seed columns of length {} (need 2^U ≥ {})",
                seed.nrows(),
                seed.nrows()
            )));
        }
        if f_lin.input_dim() != u || f_lin.output_dim() != seed.nrows() {
            return Err(dims(format!(
                "reconstruction map is {}→{}, expected {u}→{}",
                f_lin.input_dim(),
                f_lin.output_dim(),
                seed.nrows()
            )));
        }
        Ok(Self {
            seed,
            circuit,
            f_lin,
            executions: AtomicUsize::new(0),
        })
    }

    pub fn rows(&self) -> usize {
        self.seed.nrows()
    }

    pub fn columns(&self) -> usize {
        self.seed.ncols()
    }

    /// Total circuit executions performed by this generator.
    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::Relaxed)
    }

    /// Runs one circuit per seed column (in parallel) and assembles the
    /// generated matrix.
    pub fn generate(&self, exec: &Executor, stream: u64) -> Result<GeneratedWeights> {
        let u = self.circuit.num_qubits();
        let cols: Vec<Vec<f64>> = (0..self.columns())
            .into_par_iter()
            .map(|d| {
                let (state, _) = encode_with_norm(self.seed.column(d).as_slice(), u)?;
                exec.expectations(&state, &self.circuit, mix_seed(stream, d as u64))
            })
            .collect::<Result<_>>()?;
        self.executions.fetch_add(cols.len(), Ordering::Relaxed);
        let readout = DMatrix::from_fn(u, cols.len(), |r, c| cols[c][r]);
        let mut weights = self.f_lin.weight.tr_mul(&readout);
        for mut col in weights.column_iter_mut() {
            col += &self.f_lin.bias;
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generated weights".into()));
        }
        Ok(GeneratedWeights { weights, readout })
    }

    /// Back-propagates ∂L/∂(generated weights) into the reconstruction map, the
    /// circuit angles and optionally the seed matrix.
    pub fn backward(
        &self,
        generated: &GeneratedWeights,
        grad_weights: &DMatrix<f64>,
        exec: &Executor,
        stream: u64,
        with_angles: bool,
        with_seed: bool,
    ) -> Result<GeneratorGrad> {
        let u = self.circuit.num_qubits();
        let f_lin_weight = &generated.readout * grad_weights.transpose();
        let f_lin_bias = grad_weights.column_sum();
        // ∂L/∂z for every column: U × columns
        let grad_readout = &self.f_lin.weight * grad_weights;

        let mut angles = vec![0.0; self.circuit.param_count()];
        let mut seed = with_seed.then(|| DMatrix::zeros(self.rows(), self.columns()));
        if with_angles || with_seed {
            let per_column: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..self.columns())
                .into_par_iter()
                .map(|d| {
                    let column = self.seed.column(d);
                    let (state, norm) = encode_with_norm(column.as_slice(), u)?;
                    let weights: Vec<f64> = grad_readout.column(d).iter().copied().collect();
                    let g = exec.weighted_gradient(
                        &state,
                        &self.circuit,
                        &weights,
                        mix_seed(stream, d as u64),
                    )?;
                    let seed_grad = if with_seed {
                        let input = g.input_grad.ok_or_else(|| {
                            Error::Unsupported(
                                "seed-matrix gradients need exact, non-trajectory readout".into(),
                            )
                        })?;
                        Some(normalization_backward(
                            &state_real(&state),
                            &input,
                            norm,
                            self.rows(),
                        ))
                    } else {
                        None
                    };
                    Ok((g.angle_grad, seed_grad))
                })
                .collect::<Result<_>>()?;
            for (d, (ag, sg)) in per_column.into_iter().enumerate() {
                for (a, g) in angles.iter_mut().zip(ag) {
                    *a += g;
                }
                if let (Some(seed), Some(sg)) = (seed.as_mut(), sg) {
                    seed.column_mut(d).copy_from_slice(&sg);
                }
            }
        }
        Ok(GeneratorGrad {
            angles,
            f_lin_weight,
            f_lin_bias,
            seed,
        })
    }
}

fn state_real(state: &crate::simulator::StateVector) -> Vec<f64> {
    state.amplitudes().iter().map(|a| a.re).collect()
}

/// Chain rule through a = w/‖w‖: ∂L/∂w = (g − a·(a·g))/‖w‖, truncated to the
/// unpadded length. Degenerate inputs get a zero gradient.
fn normalization_backward(amplitudes: &[f64], grad: &[f64], norm: f64, len: usize) -> Vec<f64> {
    if norm < DEGENERATE_NORM {
        return vec![0.0; len];
    }
    let dot: f64 = amplitudes.iter().zip(grad).map(|(a, g)| a * g).sum();
    (0..len)
        .map(|i| (grad[i] - amplitudes[i] * dot) / norm)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_backward_matches_finite_difference() {
        let w = [0.3, -1.2, 0.5];
        let g = [0.7, 0.1, -0.4, 0.9];
        let f = |w: &[f64]| {
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            w.iter().zip(&g).map(|(a, b)| a / n * b).sum::<f64>()
        };
        let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut a: Vec<f64> = w.iter().map(|v| v / n).collect();
        a.push(0.0);
        let analytic = normalization_backward(&a, &g, n, 3);
        for i in 0..3 {
            let mut p = w;
            p[i] += 1e-6;
            let mut m = w;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((analytic[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_undersized_register() {
        let c = CircuitParams::zeros(2, 1).unwrap();
        assert!(
            WeightGenerator::new(DMatrix::zeros(5, 3), c.clone(), Affine::zeros(2, 5)).is_err()
        );
        assert!(
            WeightGenerator::new(DMatrix::zeros(4, 3), c.clone(), Affine::zeros(2, 3)).is_err()
        );
        assert!(WeightGenerator::new(DMatrix::zeros(4, 3), c, Affine::zeros(2, 4)).is_ok());
    }
}
