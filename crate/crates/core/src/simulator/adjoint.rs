//! Adjoint-method gradients of weighted Pauli-Z readouts.
//!
//! For an observable H = Σ_u w_u Z_u the routine returns ∂⟨H⟩/∂θ for every
//! circuit angle and ∂⟨H⟩/∂a for real input amplitudes a, at the cost of one
//! forward and one backward sweep.

use num_complex::Complex64;

use super::circuit::{run_circuit, CircuitParams};
use super::gate::{apply_gate_raw, apply_single_raw, rotation_derivative, Gate};
use super::state::{qubit_mask, z_expectations_raw, StateVector};
use crate::error::{dims, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointGradient {
    /// Pauli-Z expectations of the output state.
    pub expectations: Vec<f64>,
    /// ∂⟨H⟩/∂θ, aligned with [`CircuitParams::angles`].
    pub angle_grad: Vec<f64>,
    /// ∂⟨H⟩/∂a_i for a real-amplitude input state.
    pub input_grad: Vec<f64>,
}

pub(crate) fn inverse_gate(gate: &Gate) -> Gate {
    match *gate {
        Gate::Rx { target, angle } => Gate::Rx {
            target,
            angle: -angle,
        },
        Gate::Ry { target, angle } => Gate::Ry {
            target,
            angle: -angle,
        },
        Gate::Rz { target, angle } => Gate::Rz {
            target,
            angle: -angle,
        },
        cnot @ Gate::Cnot { .. } => cnot,
    }
}

/// Diagonal of Σ_u w_u Z_u.
pub(crate) fn weighted_z_diagonal(num_qubits: usize, weights: &[f64]) -> Vec<f64> {
    (0..1usize << num_qubits)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(u, w)| {
                    if i & qubit_mask(num_qubits, u) == 0 {
                        *w
                    } else {
                        -*w
                    }
                })
                .sum()
        })
        .collect()
}

pub fn adjoint_gradient(
    input: &StateVector,
    params: &CircuitParams,
    weights: &[f64],
) -> Result<AdjointGradient> {
    let n = params.num_qubits();
    if weights.len() != n {
        return Err(dims(format!(
            "{} observable weights for {n} qubits",
            weights.len()
        )));
    }
    let out = run_circuit(input, params)?;
    let expectations = z_expectations_raw(out.amplitudes(), n);

    let diag = weighted_z_diagonal(n, weights);
    let mut psi = out.into_amplitudes();
    let mut lambda: Vec<Complex64> = psi.iter().zip(&diag).map(|(a, d)| a * d).collect();
    let mut angle_grad = vec![0.0; params.param_count()];
    let mut mu = vec![Complex64::new(0.0, 0.0); psi.len()];

    for op in params.operations().iter().rev() {
        let inv = inverse_gate(&op.gate);
        apply_gate_raw(&mut psi, n, &inv);
        if let Some(p) = op.param {
            let axis = op.gate.axis().expect("parametric gates are rotations");
            let d = rotation_derivative(axis, op.gate.angle().unwrap());
            mu.copy_from_slice(&psi);
            apply_single_raw(&mut mu, n, op.gate.target(), &d);
            let overlap: f64 = lambda.iter().zip(&mu).map(|(l, m)| (l.conj() * m).re).sum();
            angle_grad[p] += 2.0 * overlap;
        }
        apply_gate_raw(&mut lambda, n, &inv);
    }

    let input_grad = lambda.iter().map(|l| 2.0 * l.re).collect();
    Ok(AdjointGradient {
        expectations,
        angle_grad,
        input_grad,
    })
}

/// Expectations and their full U × P Jacobian (row u holds ∂⟨Z_u⟩/∂θ).
pub fn expectation_jacobian(
    input: &StateVector,
    params: &CircuitParams,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = params.num_qubits();
    let mut rows = Vec::with_capacity(n);
    let mut expectations = Vec::new();
    for u in 0..n {
        let mut w = vec![0.0; n];
        w[u] = 1.0;
        let g = adjoint_gradient(input, params, &w)?;
        expectations = g.expectations;
        rows.push(g.angle_grad);
    }
    Ok((expectations, rows))
}
