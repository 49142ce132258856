use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::{check_qubit, qubit_mask, StateVector};
use crate::error::{Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub const IDENTITY2: Mat2 = [[ONE, ZERO], [ZERO, ONE]];

/// Rotation generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Mat2 {
        let i = Complex64::new(0.0, 1.0);
        match self {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -i], [i, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

/// R_P(θ) = exp(−iθP/2) = cos(θ/2)·I − i·sin(θ/2)·P.
pub fn rotation_matrix(axis: Axis, angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    let c = Complex64::new(c, 0.0);
    match axis {
        Axis::X => {
            let mis = Complex64::new(0.0, -s);
            [[c, mis], [mis, c]]
        }
        Axis::Y => {
            let s = Complex64::new(s, 0.0);
            [[c, -s], [s, c]]
        }
        Axis::Z => [
            [Complex64::new(c.re, -s), ZERO],
            [ZERO, Complex64::new(c.re, s)],
        ],
    }
}

/// dR_P/dθ = −(i/2)·P·R_P(θ).
pub fn rotation_derivative(axis: Axis, angle: f64) -> Mat2 {
    let r = rotation_matrix(axis, angle);
    let p = axis.pauli();
    let pr = matmul2(&p, &r);
    let k = Complex64::new(0.0, -0.5);
    [[k * pr[0][0], k * pr[0][1]], [k * pr[1][0], k * pr[1][1]]]
}

pub fn matmul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

pub fn dagger2(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rotation(axis: Axis, target: usize, angle: f64) -> Self {
        match axis {
            Axis::X => Gate::Rx { target, angle },
            Axis::Y => Gate::Ry { target, angle },
            Axis::Z => Gate::Rz { target, angle },
        }
    }

    pub fn target(&self) -> usize {
        match *self {
            Gate::Rx { target, .. }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. }
            | Gate::Cnot { target, .. } => target,
        }
    }

    pub fn axis(&self) -> Option<Axis> {
        match self {
            Gate::Rx { .. } => Some(Axis::X),
            Gate::Ry { .. } => Some(Axis::Y),
            Gate::Rz { .. } => Some(Axis::Z),
            Gate::Cnot { .. } => None,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => Some(angle),
            Gate::Cnot { .. } => None,
        }
    }

    /// 2×2 matrix for single-qubit gates.
    pub fn matrix(&self) -> Option<Mat2> {
        Some(rotation_matrix(self.axis()?, self.angle()?))
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        check_qubit(self.target(), num_qubits)?;
        if let Gate::Cnot { control, target } = *self {
            check_qubit(control, num_qubits)?;
            if control == target {
                return Err(Error::InvalidGate(format!(
                    "CNOT control and target are both qubit {target}"
                )));
            }
        }
        if let Some(angle) = self.angle() {
            if !angle.is_finite() {
                return Err(Error::InvalidGate(format!("non-finite angle {angle}")));
            }
        }
        Ok(())
    }
}

/// Applies `gate` and returns the resulting state.
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    gate.validate(state.num_qubits())?;
    let mut out = state.clone();
    let n = out.num_qubits();
    apply_gate_raw(out.amplitudes_mut(), n, gate);
    Ok(out)
}

pub(crate) fn apply_gate_raw(amps: &mut [Complex64], num_qubits: usize, gate: &Gate) {
    match *gate {
        Gate::Cnot { control, target } => apply_cnot_raw(amps, num_qubits, control, target),
        _ => {
            let m = gate.matrix().expect("rotation gate");
            apply_single_raw(amps, num_qubits, gate.target(), &m);
        }
    }
}

/// Applies an arbitrary 2×2 matrix (not necessarily unitary) to one qubit.
pub(crate) fn apply_single_raw(amps: &mut [Complex64], num_qubits: usize, qubit: usize, m: &Mat2) {
    let mask = qubit_mask(num_qubits, qubit);
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + mask {
            let j = i | mask;
            let (a, b) = (amps[i], amps[j]);
            amps[i] = m[0][0] * a + m[0][1] * b;
            amps[j] = m[1][0] * a + m[1][1] * b;
        }
        base += mask << 1;
    }
}

pub(crate) fn apply_cnot_raw(
    amps: &mut [Complex64],
    num_qubits: usize,
    control: usize,
    target: usize,
) {
    let cmask = qubit_mask(num_qubits, control);
    let tmask = qubit_mask(num_qubits, target);
    for i in 0..amps.len() {
        if i & cmask != 0 && i & tmask == 0 {
            amps.swap(i, i | tmask);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::state::amplitude_encode;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    /// exp(A) by truncated Taylor series with scaling and squaring; independent
    /// of the closed-form rotation formulas.
    fn expm2(a: &Mat2) -> Mat2 {
        let scale = 2f64.powi(10);
        let small: Mat2 = [
            [a[0][0] / scale, a[0][1] / scale],
            [a[1][0] / scale, a[1][1] / scale],
        ];
        let mut result = IDENTITY2;
        let mut term = IDENTITY2;
        for k in 1..30 {
            term = matmul2(&term, &small);
            let inv = 1.0 / k as f64;
            term = [
                [term[0][0] * inv, term[0][1] * inv],
                [term[1][0] * inv, term[1][1] * inv],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    result[r][c] += term[r][c];
                }
            }
        }
        for _ in 0..10 {
            result = matmul2(&result, &result);
        }
        result
    }

    #[test]
    fn rotations_match_matrix_exponential() {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for &theta in &[0.0, 0.3, -1.7, PI / 2.0, 2.9] {
                let p = axis.pauli();
                let k = Complex64::new(0.0, -theta / 2.0);
                let gen = [[k * p[0][0], k * p[0][1]], [k * p[1][0], k * p[1][1]]];
                let expected = expm2(&gen);
                let got = rotation_matrix(axis, theta);
                for r in 0..2 {
                    for c in 0..2 {
                        assert!(close(got[r][c], expected[r][c], 1e-13), "{axis:?} {theta}");
                    }
                }
            }
        }
    }

    #[test]
    fn rotations_are_unitary() {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let r = rotation_matrix(axis, 1.234);
            let prod = matmul2(&dagger2(&r), &r);
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { ONE } else { ZERO };
                    assert!(close(prod[i][j], id, 1e-14));
                }
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let d = rotation_derivative(axis, 0.7);
            let p = rotation_matrix(axis, 0.7 + h);
            let m = rotation_matrix(axis, 0.7 - h);
            for r in 0..2 {
                for c in 0..2 {
                    let fd = (p[r][c] - m[r][c]) / (2.0 * h);
                    assert!(close(d[r][c], fd, 1e-9));
                }
            }
        }
    }

    #[test]
    fn rx_zero_is_identity() {
        let s = amplitude_encode(&[0.1, -0.4, 0.3, 0.8], 2).unwrap();
        let out = apply_gate(
            &s,
            &Gate::Rx {
                target: 1,
                angle: 0.0,
            },
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn cnot_truth_table() {
        // |10⟩ → |11⟩
        let s = StateVector::basis(2, 0b10).unwrap();
        let out = apply_gate(
            &s,
            &Gate::Cnot {
                control: 0,
                target: 1,
            },
        )
        .unwrap();
        assert_eq!(out, StateVector::basis(2, 0b11).unwrap());
        let s = StateVector::basis(2, 0b01).unwrap();
        let out = apply_gate(
            &s,
            &Gate::Cnot {
                control: 0,
                target: 1,
            },
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rx_half_pi_on_zero() {
        let s = StateVector::zero(1).unwrap();
        let out = apply_gate(
            &s,
            &Gate::Rx {
                target: 0,
                angle: PI / 2.0,
            },
        )
        .unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(close(out.amplitudes()[0], Complex64::new(h, 0.0), 1e-15));
        assert!(close(out.amplitudes()[1], Complex64::new(0.0, -h), 1e-15));
    }

    #[test]
    fn invalid_gates_rejected() {
        let s = StateVector::zero(2).unwrap();
        assert!(matches!(
            apply_gate(
                &s,
                &Gate::Ry {
                    target: 2,
                    angle: 0.1
                }
            ),
            Err(Error::QubitIndex { .. })
        ));
        assert!(matches!(
            apply_gate(
                &s,
                &Gate::Cnot {
                    control: 1,
                    target: 1
                }
            ),
            Err(Error::InvalidGate(_))
        ));
    }
}
