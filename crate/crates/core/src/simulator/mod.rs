//! Statevector simulation of small qubit registers.

mod adjoint;
mod circuit;
mod gate;
mod oracle;
mod state;

pub use adjoint::{adjoint_gradient, expectation_jacobian, AdjointGradient};
pub(crate) use adjoint::{inverse_gate, weighted_z_diagonal};
pub use circuit::{run_circuit, AngleGroup, CircuitParams, Entangler, Operation, RotationOrder};
pub use gate::{
    apply_gate, dagger2, matmul2, rotation_derivative, rotation_matrix, Axis, Gate, Mat2, IDENTITY2,
};
pub(crate) use gate::{apply_gate_raw, apply_single_raw};
pub use oracle::{
    apply_dense, dense_unitary_oracle, gate_unitary, unitarity_error, ORACLE_MAX_QUBITS,
};
pub use state::{
    amplitude_encode, encode_with_norm, expectation_z, expectations_z, qubits_for,
    sample_expectation_z, sample_pm_one, StateVector, DEGENERATE_NORM, MAX_QUBITS,
};
pub(crate) use state::{check_qubit, qubit_mask, z_expectations_raw};
