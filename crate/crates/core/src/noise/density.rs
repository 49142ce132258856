use nalgebra::DMatrix;
use num_complex::Complex64;

use super::kraus::{kraus_amplitude_damping, kraus_phase_damping, KrausSet, NoiseSpec};
use crate::error::{dims, Error, Result};
use crate::simulator::{
    check_qubit, dagger2, inverse_gate, qubit_mask, rotation_derivative, weighted_z_diagonal,
    AdjointGradient, CircuitParams, Gate, Mat2, Operation, StateVector,
};

pub const DENSITY_MAX_QUBITS: usize = 10;

/// Mixed state stored as a dense row-major 2^U × 2^U matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    data: Vec<Complex64>,
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > DENSITY_MAX_QUBITS {
        return Err(Error::SizeLimit {
            what: "density-matrix simulation",
            num_qubits,
            limit: DENSITY_MAX_QUBITS,
        });
    }
    Ok(())
}

impl DensityMatrix {
    /// |ψ⟩⟨ψ|
    pub fn from_pure(state: &StateVector) -> Result<Self> {
        check_size(state.num_qubits())?;
        let a = state.amplitudes();
        let n = a.len();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = a[r] * a[c].conj();
            }
        }
        Ok(Self {
            num_qubits: state.num_qubits(),
            data,
        })
    }

    /// Wraps a row-major matrix without checking positivity or trace.
    pub fn from_row_major(num_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        check_size(num_qubits)?;
        let n = 1usize << num_qubits;
        if data.len() != n * n {
            return Err(dims(format!(
                "{} entries for a {n}×{n} density matrix",
                data.len()
            )));
        }
        Ok(Self { num_qubits, data })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim() + col]
    }

    pub fn as_row_major(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        let n = self.dim();
        (0..n).map(|i| self.data[i * n + i]).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.data[r * n + c] - self.data[c * n + r].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |r, c| self.data[r * n + c]);
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal populations.
    pub fn populations(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.data[i * n + i].re).collect()
    }

    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(qubit, self.num_qubits)?;
        Ok(z_expectations_density(&self.data, self.num_qubits)[qubit])
    }

    pub fn expectations_z(&self) -> Vec<f64> {
        z_expectations_density(&self.data, self.num_qubits)
    }
}

fn z_expectations_density(data: &[Complex64], num_qubits: usize) -> Vec<f64> {
    let n = 1usize << num_qubits;
    let mut out = vec![0.0; num_qubits];
    for i in 0..n {
        let p = data[i * n + i].re;
        for (u, o) in out.iter_mut().enumerate() {
            if i & qubit_mask(num_qubits, u) == 0 {
                *o += p;
            } else {
                *o -= p;
            }
        }
    }
    for o in &mut out {
        *o = o.clamp(-1.0, 1.0);
    }
    out
}

/// ρ ← L·ρ·R† with L, R acting on `qubit`.
fn sandwich(data: &mut [Complex64], num_qubits: usize, qubit: usize, left: &Mat2, right: &Mat2) {
    let n = 1usize << num_qubits;
    let mask = qubit_mask(num_qubits, qubit);
    for r0 in (0..n).filter(|r| r & mask == 0) {
        let r1 = r0 | mask;
        for c in 0..n {
            let a = data[r0 * n + c];
            let b = data[r1 * n + c];
            data[r0 * n + c] = left[0][0] * a + left[0][1] * b;
            data[r1 * n + c] = left[1][0] * a + left[1][1] * b;
        }
    }
    let rc = [
        [right[0][0].conj(), right[0][1].conj()],
        [right[1][0].conj(), right[1][1].conj()],
    ];
    for r in 0..n {
        let row = &mut data[r * n..(r + 1) * n];
        for c0 in (0..n).filter(|c| c & mask == 0) {
            let c1 = c0 | mask;
            let (a, b) = (row[c0], row[c1]);
            row[c0] = a * rc[0][0] + b * rc[0][1];
            row[c1] = a * rc[1][0] + b * rc[1][1];
        }
    }
}

fn conjugate_cnot(data: &mut [Complex64], num_qubits: usize, control: usize, target: usize) {
    let n = 1usize << num_qubits;
    let cm = qubit_mask(num_qubits, control);
    let tm = qubit_mask(num_qubits, target);
    let swapped = |i: usize| i & cm != 0 && i & tm == 0;
    for r in (0..n).filter(|&r| swapped(r)) {
        let r1 = r | tm;
        for c in 0..n {
            data.swap(r * n + c, r1 * n + c);
        }
    }
    for r in 0..n {
        for c in (0..n).filter(|&c| swapped(c)) {
            data.swap(r * n + c, r * n + (c | tm));
        }
    }
}

fn conjugate_gate(data: &mut [Complex64], num_qubits: usize, gate: &Gate) {
    match *gate {
        Gate::Cnot { control, target } => conjugate_cnot(data, num_qubits, control, target),
        _ => {
            let m = gate.matrix().expect("rotation");
            sandwich(data, num_qubits, gate.target(), &m, &m);
        }
    }
}

fn channel_raw(
    data: &mut Vec<Complex64>,
    num_qubits: usize,
    qubit: usize,
    kraus: &KrausSet,
    adjoint: bool,
) {
    let mut acc = vec![Complex64::new(0.0, 0.0); data.len()];
    let mut tmp = vec![Complex64::new(0.0, 0.0); data.len()];
    for k in kraus.operators() {
        tmp.copy_from_slice(data);
        if adjoint {
            // K†·O·K
            let kd = dagger2(k);
            sandwich(&mut tmp, num_qubits, qubit, &kd, &kd);
        } else {
            sandwich(&mut tmp, num_qubits, qubit, k, k);
        }
        for (a, t) in acc.iter_mut().zip(&tmp) {
            *a += t;
        }
    }
    *data = acc;
}

/// ρ' = Σ_i K_i ρ K_i† with each K_i acting on `qubit`.
pub fn apply_channel_density(
    rho: &DensityMatrix,
    kraus: &KrausSet,
    qubit: usize,
) -> Result<DensityMatrix> {
    check_size(rho.num_qubits)?;
    check_qubit(qubit, rho.num_qubits)?;
    let mut data = rho.data.clone();
    channel_raw(&mut data, rho.num_qubits, qubit, kraus, false);
    Ok(DensityMatrix {
        num_qubits: rho.num_qubits,
        data,
    })
}

/// Applies a gate as ρ ← GρG†.
pub fn apply_gate_density(rho: &DensityMatrix, gate: &Gate) -> Result<DensityMatrix> {
    gate.validate(rho.num_qubits)?;
    let mut data = rho.data.clone();
    conjugate_gate(&mut data, rho.num_qubits, gate);
    Ok(DensityMatrix {
        num_qubits: rho.num_qubits,
        data,
    })
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum NoisyOp {
    Gate(Operation),
    Channel { channel: usize, qubit: usize },
}

/// Circuit gates interleaved with the per-layer damping channels.
#[derive(Clone, Debug)]
pub(crate) struct NoisyProgram {
    pub ops: Vec<NoisyOp>,
    pub channels: Vec<KrausSet>,
}

impl NoisyProgram {
    pub fn build(params: &CircuitParams, noise: &NoiseSpec) -> Result<Self> {
        noise.validate()?;
        let mut channels = Vec::new();
        if noise.adr > 0.0 {
            channels.push(kraus_amplitude_damping(noise.adr)?);
        }
        if noise.pdr > 0.0 {
            channels.push(kraus_phase_damping(noise.pdr)?);
        }
        let mut ops = Vec::new();
        for layer in 0..params.depth() {
            ops.extend(
                params
                    .layer_operations(layer)
                    .into_iter()
                    .map(NoisyOp::Gate),
            );
            for channel in 0..channels.len() {
                for qubit in 0..params.num_qubits() {
                    ops.push(NoisyOp::Channel { channel, qubit });
                }
            }
        }
        Ok(Self { ops, channels })
    }
}

fn check_match(input: &StateVector, params: &CircuitParams) -> Result<()> {
    if input.num_qubits() != params.num_qubits() {
        return Err(dims(format!(
            "state has {} qubits but the circuit acts on {}",
            input.num_qubits(),
            params.num_qubits()
        )));
    }
    Ok(())
}

/// Final density matrix of the noisy circuit.
pub fn run_density(
    input: &StateVector,
    params: &CircuitParams,
    noise: &NoiseSpec,
) -> Result<DensityMatrix> {
    check_match(input, params)?;
    let mut rho = DensityMatrix::from_pure(input)?;
    let program = NoisyProgram::build(params, noise)?;
    let n = rho.num_qubits;
    for op in &program.ops {
        match *op {
            NoisyOp::Gate(g) => conjugate_gate(&mut rho.data, n, &g.gate),
            NoisyOp::Channel { channel, qubit } => {
                channel_raw(&mut rho.data, n, qubit, &program.channels[channel], false)
            }
        }
    }
    Ok(rho)
}

/// Exact Tr(ρ σ_z⁽ᵘ⁾) for every qubit under the noisy circuit.
pub fn density_expectations(
    input: &StateVector,
    params: &CircuitParams,
    noise: &NoiseSpec,
) -> Result<Vec<f64>> {
    Ok(run_density(input, params, noise)?.expectations_z())
}

/// Exact gradient of Σ_u w_u Tr(ρ_out Z_u) under noise.
///
/// The observable is propagated backwards through adjoint channels
/// (O ← Σ K†OK) and inverse gates; each angle contributes
/// 2·Re Tr(O · G′ρG†) using the stored pre-gate state.
pub fn density_adjoint_gradient(
    input: &StateVector,
    params: &CircuitParams,
    noise: &NoiseSpec,
    weights: &[f64],
) -> Result<AdjointGradient> {
    check_match(input, params)?;
    let n = params.num_qubits();
    if weights.len() != n {
        return Err(dims(format!(
            "{} observable weights for {n} qubits",
            weights.len()
        )));
    }
    let program = NoisyProgram::build(params, noise)?;
    let mut rho = DensityMatrix::from_pure(input)?;
    let dim = rho.dim();

    let mut snapshots: Vec<Option<Vec<Complex64>>> = Vec::with_capacity(program.ops.len());
    for op in &program.ops {
        match *op {
            NoisyOp::Gate(g) => {
                snapshots.push(g.param.map(|_| rho.data.clone()));
                conjugate_gate(&mut rho.data, n, &g.gate);
            }
            NoisyOp::Channel { channel, qubit } => {
                snapshots.push(None);
                channel_raw(&mut rho.data, n, qubit, &program.channels[channel], false);
            }
        }
    }
    let expectations = rho.expectations_z();

    let diag = weighted_z_diagonal(n, weights);
    let mut obs = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (i, d) in diag.iter().enumerate() {
        obs[i * dim + i] = Complex64::new(*d, 0.0);
    }
    let mut angle_grad = vec![0.0; params.param_count()];

    for (op, snap) in program.ops.iter().zip(snapshots).rev() {
        match *op {
            NoisyOp::Gate(g) => {
                if let (Some(p), Some(mut x)) = (g.param, snap) {
                    let axis = g.gate.axis().expect("rotation");
                    let d = rotation_derivative(axis, g.gate.angle().unwrap());
                    let m = g.gate.matrix().unwrap();
                    sandwich(&mut x, n, g.gate.target(), &d, &m);
                    let mut tr = Complex64::new(0.0, 0.0);
                    for r in 0..dim {
                        for c in 0..dim {
                            tr += obs[r * dim + c] * x[c * dim + r];
                        }
                    }
                    angle_grad[p] += 2.0 * tr.re;
                }
                conjugate_gate(&mut obs, n, &inverse_gate(&g.gate));
            }
            NoisyOp::Channel { channel, qubit } => {
                channel_raw(&mut obs, n, qubit, &program.channels[channel], true)
            }
        }
    }

    // d/da of aᵀ O a for real a is (O + Oᵀ)a = 2·Re(O)·a
    let a = input.amplitudes();
    let input_grad = (0..dim)
        .map(|r| 2.0 * (0..dim).map(|c| (obs[r * dim + c] * a[c]).re).sum::<f64>())
        .collect();

    Ok(AdjointGradient {
        expectations,
        angle_grad,
        input_grad,
    })
}
