//! Dense-matrix reference for the circuit simulator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::circuit::CircuitParams;
use super::gate::{Gate, Mat2, IDENTITY2};
use super::state::StateVector;
use crate::error::{Error, Result};

pub const ORACLE_MAX_QUBITS: usize = 6;

fn to_dense(m: &Mat2) -> DMatrix<Complex64> {
    DMatrix::from_fn(2, 2, |r, c| m[r][c])
}

/// Kronecker product of one 2×2 factor per qubit, qubit 0 leftmost.
fn kron_chain(factors: &[Mat2]) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for f in factors {
        out = out.kronecker(&to_dense(f));
    }
    out
}

/// Full 2^U × 2^U matrix of a single gate.
pub fn gate_unitary(gate: &Gate, num_qubits: usize) -> Result<DMatrix<Complex64>> {
    gate.validate(num_qubits)?;
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    match *gate {
        Gate::Cnot { control, target } => {
            // |0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t
            let p0: Mat2 = [[one, zero], [zero, zero]];
            let p1: Mat2 = [[zero, zero], [zero, one]];
            let x: Mat2 = [[zero, one], [one, zero]];
            let mut a = vec![IDENTITY2; num_qubits];
            let mut b = vec![IDENTITY2; num_qubits];
            a[control] = p0;
            b[control] = p1;
            b[target] = x;
            Ok(kron_chain(&a) + kron_chain(&b))
        }
        _ => {
            let mut f = vec![IDENTITY2; num_qubits];
            f[gate.target()] = gate.matrix().expect("rotation");
            Ok(kron_chain(&f))
        }
    }
}

/// Explicit unitary of the whole circuit, built gate by gate from Kronecker
/// products. Refuses registers above [`ORACLE_MAX_QUBITS`].
pub fn dense_unitary_oracle(params: &CircuitParams) -> Result<DMatrix<Complex64>> {
    let u = params.num_qubits();
    if u > ORACLE_MAX_QUBITS {
        return Err(Error::SizeLimit {
            what: "dense unitary oracle",
            num_qubits: u,
            limit: ORACLE_MAX_QUBITS,
        });
    }
    let dim = 1usize << u;
    let mut total = DMatrix::<Complex64>::identity(dim, dim);
    for op in params.operations() {
        total = gate_unitary(&op.gate, u)? * total;
    }
    Ok(total)
}

/// Applies a dense matrix to a state vector.
pub fn apply_dense(unitary: &DMatrix<Complex64>, state: &StateVector) -> Vec<Complex64> {
    let v = DVector::from_column_slice(state.amplitudes());
    (unitary * v).iter().copied().collect()
}

/// max |(M†M − I)_ij|
pub fn unitarity_error(m: &DMatrix<Complex64>) -> f64 {
    let prod = m.adjoint() * m;
    let id = DMatrix::<Complex64>::identity(m.nrows(), m.ncols());
    (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::circuit::run_circuit;
    use crate::simulator::state::amplitude_encode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_for_zero_angles() {
        let p = CircuitParams::zeros(1, 1).unwrap();
        let m = dense_unitary_oracle(&p).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
    }

    #[test]
    fn matches_simulator_two_qubits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CircuitParams::random(2, 1, &mut rng).unwrap();
        let s = amplitude_encode(&[0.3, -0.1, 0.7, 0.2], 2).unwrap();
        let dense = apply_dense(&dense_unitary_oracle(&p).unwrap(), &s);
        let sim = run_circuit(&s, &p).unwrap();
        for (a, b) in dense.iter().zip(sim.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn three_qubit_oracle_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CircuitParams::random(3, 3, &mut rng).unwrap();
        assert!(unitarity_error(&dense_unitary_oracle(&p).unwrap()) < 1e-10);
    }

    #[test]
    fn refuses_large_registers() {
        let p = CircuitParams::zeros(7, 1).unwrap();
        assert!(matches!(
            dense_unitary_oracle(&p),
            Err(Error::SizeLimit { .. })
        ));
    }
}
