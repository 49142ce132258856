use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::density::{NoisyOp, NoisyProgram};
use super::kraus::NoiseSpec;
use crate::error::{dims, invalid, Result};
use crate::simulator::{
    apply_gate_raw, apply_single_raw, z_expectations_raw, CircuitParams, StateVector,
};

/// Mean Pauli-Z expectations over `trajectories` Kraus-unraveled pure-state
/// runs, with the standard error of each mean.
///
/// Trajectory `t` draws from ChaCha stream `t` of `seed`, so the result does
/// not depend on how the runs are scheduled.
pub fn trajectory_expectations(
    input: &StateVector,
    params: &CircuitParams,
    noise: &NoiseSpec,
    trajectories: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if trajectories == 0 {
        return Err(invalid("trajectory method needs at least one trajectory"));
    }
    if input.num_qubits() != params.num_qubits() {
        return Err(dims(format!(
            "state has {} qubits but the circuit acts on {}",
            input.num_qubits(),
            params.num_qubits()
        )));
    }
    let program = NoisyProgram::build(params, noise)?;
    let n = params.num_qubits();
    let runs: Vec<Vec<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            run_trajectory(input, &program, n, &mut rng)
        })
        .collect();

    let count = trajectories as f64;
    let mut mean = vec![0.0; n];
    for r in &runs {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut stderr = vec![0.0; n];
    if trajectories > 1 {
        for r in &runs {
            for ((s, v), m) in stderr.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        stderr
            .iter_mut()
            .for_each(|s| *s = (*s / (count - 1.0)).sqrt() / count.sqrt());
    }
    Ok((mean, stderr))
}

fn run_trajectory(
    input: &StateVector,
    program: &NoisyProgram,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut psi = input.amplitudes().to_vec();
    let mut branch = vec![Complex64::new(0.0, 0.0); psi.len()];
    for op in &program.ops {
        match *op {
            NoisyOp::Gate(g) => apply_gate_raw(&mut psi, n, &g.gate),
            NoisyOp::Channel { channel, qubit } => {
                let ops = program.channels[channel].operators();
                let draw: f64 = rng.random();
                let mut cumulative = 0.0;
                for (i, k) in ops.iter().enumerate() {
                    branch.copy_from_slice(&psi);
                    apply_single_raw(&mut branch, n, qubit, k);
                    let p: f64 = branch.iter().map(|a| a.norm_sqr()).sum();
                    cumulative += p;
                    if (draw < cumulative || i + 1 == ops.len()) && p > 0.0 {
                        let scale = 1.0 / p.sqrt();
                        for (dst, src) in psi.iter_mut().zip(&branch) {
                            *dst = src * scale;
                        }
                        break;
                    }
                }
            }
        }
    }
    z_expectations_raw(&psi, n)
}
