//! Layered rotation/entangler circuits.
//!
//! A layer applies R_X(α_u), R_Y(β_u), R_Z(γ_u) to every qubit u (in that
//! circuit-time order by default) and then the entangling CNOT pattern. Angles
//! are stored flat with index `(layer * num_qubits + qubit) * 3 + k`, where
//! `k = 0, 1, 2` selects α, β, γ.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::gate::{apply_gate_raw, Axis, Gate};
use super::state::{check_register, StateVector};
use crate::error::{dims, invalid, Result};

/// CNOT pattern applied after each rotation layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    /// u → (u + 1) mod U for every u (no gates for U = 1).
    #[default]
    Ring,
    /// u → u + 1 for u < U − 1.
    Chain,
    None,
}

/// Circuit-time order of the per-qubit rotation triple.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationOrder {
    /// R_X first, then R_Y, then R_Z.
    #[default]
    XFirst,
    /// R_Z first, so the layer operator reads R_X·R_Y·R_Z as a matrix product.
    ZFirst,
}

impl RotationOrder {
    pub fn axes(self) -> [Axis; 3] {
        match self {
            RotationOrder::XFirst => [Axis::X, Axis::Y, Axis::Z],
            RotationOrder::ZFirst => [Axis::Z, Axis::Y, Axis::X],
        }
    }
}

/// Index of an angle within its (layer, qubit) triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleGroup {
    Alpha,
    Beta,
    Gamma,
}

impl AngleGroup {
    pub fn of_index(flat_index: usize) -> Self {
        match flat_index % 3 {
            0 => AngleGroup::Alpha,
            1 => AngleGroup::Beta,
            _ => AngleGroup::Gamma,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            AngleGroup::Alpha => Axis::X,
            AngleGroup::Beta => Axis::Y,
            AngleGroup::Gamma => Axis::Z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    num_qubits: usize,
    depth: usize,
    angles: Vec<f64>,
    #[serde(default)]
    pub entangler: Entangler,
    #[serde(default)]
    pub rotation_order: RotationOrder,
}

/// A gate together with the flat index of the angle that drives it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operation {
    pub gate: Gate,
    pub param: Option<usize>,
}

impl CircuitParams {
    pub fn new(num_qubits: usize, depth: usize, angles: Vec<f64>) -> Result<Self> {
        check_register(num_qubits)?;
        if depth == 0 {
            return Err(invalid("circuit depth must be at least 1"));
        }
        if angles.len() != 3 * num_qubits * depth {
            return Err(dims(format!(
                "{} angles for U = {num_qubits}, L = {depth} (expected {})",
                angles.len(),
                3 * num_qubits * depth
            )));
        }
        if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
            return Err(invalid(format!("non-finite circuit angle {a}")));
        }
        Ok(Self {
            num_qubits,
            depth,
            angles,
            entangler: Entangler::Ring,
            rotation_order: RotationOrder::XFirst,
        })
    }

    pub fn zeros(num_qubits: usize, depth: usize) -> Result<Self> {
        Self::new(num_qubits, depth, vec![0.0; 3 * num_qubits * depth])
    }

    /// Angles drawn uniformly from [−π, π].
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, depth: usize, rng: &mut R) -> Result<Self> {
        let angles = (0..3 * num_qubits * depth)
            .map(|_| rng.random_range(-PI..=PI))
            .collect();
        Self::new(num_qubits, depth, angles)
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    pub fn with_rotation_order(mut self, order: RotationOrder) -> Self {
        self.rotation_order = order;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// 3·U·L.
    pub fn param_count(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn index(&self, layer: usize, qubit: usize, group: AngleGroup) -> usize {
        (layer * self.num_qubits + qubit) * 3 + group as usize
    }

    pub fn angle(&self, layer: usize, qubit: usize, group: AngleGroup) -> f64 {
        self.angles[self.index(layer, qubit, group)]
    }

    pub fn set_angle(&mut self, layer: usize, qubit: usize, group: AngleGroup, value: f64) {
        let i = self.index(layer, qubit, group);
        self.angles[i] = value;
    }

    pub fn entangler_pairs(&self) -> Vec<(usize, usize)> {
        let u = self.num_qubits;
        match self.entangler {
            Entangler::Ring if u > 1 => (0..u).map(|c| (c, (c + 1) % u)).collect(),
            Entangler::Chain | Entangler::Ring => {
                (0..u.saturating_sub(1)).map(|c| (c, c + 1)).collect()
            }
            Entangler::None => Vec::new(),
        }
    }

    /// Gates of one layer in circuit-time order.
    pub fn layer_operations(&self, layer: usize) -> Vec<Operation> {
        let mut ops = Vec::with_capacity(4 * self.num_qubits);
        for qubit in 0..self.num_qubits {
            for axis in self.rotation_order.axes() {
                let group = match axis {
                    Axis::X => AngleGroup::Alpha,
                    Axis::Y => AngleGroup::Beta,
                    Axis::Z => AngleGroup::Gamma,
                };
                let idx = self.index(layer, qubit, group);
                ops.push(Operation {
                    gate: Gate::rotation(axis, qubit, self.angles[idx]),
                    param: Some(idx),
                });
            }
        }
        for (control, target) in self.entangler_pairs() {
            ops.push(Operation {
                gate: Gate::Cnot { control, target },
                param: None,
            });
        }
        ops
    }

    /// Every gate of the circuit in circuit-time order.
    pub fn operations(&self) -> Vec<Operation> {
        (0..self.depth)
            .flat_map(|l| self.layer_operations(l))
            .collect()
    }
}

/// Runs the full layered circuit on `state`.
pub fn run_circuit(state: &StateVector, params: &CircuitParams) -> Result<StateVector> {
    if state.num_qubits() != params.num_qubits() {
        return Err(dims(format!(
            "state has {} qubits but the circuit acts on {}",
            state.num_qubits(),
            params.num_qubits()
        )));
    }
    let mut out = state.clone();
    let n = out.num_qubits();
    for op in params.operations() {
        apply_gate_raw(out.amplitudes_mut(), n, &op.gate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::gate::apply_gate;
    use crate::simulator::state::amplitude_encode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_angles_leave_ground_state() {
        let params = CircuitParams::zeros(2, 3).unwrap();
        let s = StateVector::zero(2).unwrap();
        assert_eq!(run_circuit(&s, &params).unwrap(), s);
    }

    #[test]
    fn single_qubit_rx_layers_add() {
        let (t1, t2) = (0.4, -1.3);
        let params = CircuitParams::new(1, 2, vec![t1, 0.0, 0.0, t2, 0.0, 0.0]).unwrap();
        let s = amplitude_encode(&[0.6, 0.8], 1).unwrap();
        let got = run_circuit(&s, &params).unwrap();
        let want = apply_gate(
            &s,
            &Gate::Rx {
                target: 0,
                angle: t1 + t2,
            },
        )
        .unwrap();
        for (a, b) in got.amplitudes().iter().zip(want.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn parameter_count_and_layout() {
        let p = CircuitParams::zeros(5, 4).unwrap();
        assert_eq!(p.param_count(), 60);
        assert_eq!(p.index(1, 2, AngleGroup::Gamma), (5 + 2) * 3 + 2);
        assert_eq!(
            AngleGroup::of_index(p.index(3, 4, AngleGroup::Beta)),
            AngleGroup::Beta
        );
    }

    #[test]
    fn entangler_layouts() {
        let ring = CircuitParams::zeros(3, 1).unwrap();
        assert_eq!(ring.entangler_pairs(), vec![(0, 1), (1, 2), (2, 0)]);
        let chain = ring.clone().with_entangler(Entangler::Chain);
        assert_eq!(chain.entangler_pairs(), vec![(0, 1), (1, 2)]);
        let one = CircuitParams::zeros(1, 1).unwrap();
        assert!(one.entangler_pairs().is_empty());
    }

    #[test]
    fn qubit_mismatch_rejected() {
        let p = CircuitParams::zeros(3, 1).unwrap();
        let s = StateVector::zero(2).unwrap();
        assert!(run_circuit(&s, &p).is_err());
        assert!(CircuitParams::new(2, 1, vec![0.0; 5]).is_err());
        assert!(CircuitParams::new(2, 0, vec![]).is_err());
    }

    #[test]
    fn norm_preserved_for_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for u in 1..=5 {
            let p = CircuitParams::random(u, 4, &mut rng).unwrap();
            let w: Vec<f64> = (0..1 << u).map(|i| (i as f64 * 0.37).sin()).collect();
            let s = amplitude_encode(&w, u).unwrap();
            let out = run_circuit(&s, &p).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-12);
        }
    }
}
