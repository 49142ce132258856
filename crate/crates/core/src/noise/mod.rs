//! Amplitude- and phase-damping noise between circuit layers.
//!
//! Two backends: an exact density-matrix simulation for registers of up to
//! [`DENSITY_MAX_QUBITS`] qubits and Monte-Carlo Kraus trajectories for
//! anything larger.

mod density;
mod kraus;
mod trajectory;

pub use density::{
    apply_channel_density, apply_gate_density, density_adjoint_gradient, density_expectations,
    run_density, DensityMatrix, DENSITY_MAX_QUBITS,
};
pub use kraus::{kraus_amplitude_damping, kraus_phase_damping, KrausSet, NoiseSpec};
pub use trajectory::trajectory_expectations;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{expectations_z, run_circuit, CircuitParams, StateVector};

/// Default trajectory count when [`NoiseMethod::Auto`] falls back to sampling.
pub const DEFAULT_TRAJECTORIES: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMethod {
    /// Density matrix up to the size limit, trajectories beyond it.
    #[default]
    Auto,
    Density,
    Trajectory,
}

impl NoiseMethod {
    /// Concrete backend for a register of `num_qubits`.
    pub fn resolve(self, num_qubits: usize) -> NoiseMethod {
        match self {
            NoiseMethod::Auto if num_qubits <= DENSITY_MAX_QUBITS => NoiseMethod::Density,
            NoiseMethod::Auto => NoiseMethod::Trajectory,
            m => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyExpectations {
    pub values: Vec<f64>,
    /// Present for the trajectory backend.
    pub standard_errors: Option<Vec<f64>>,
}

/// Pauli-Z expectations of `params` run on `state_prep` under `noise`.
///
/// A noiseless spec bypasses both backends and runs the plain statevector
/// simulator, so its output is bit-identical to the noiseless pipeline.
pub fn noisy_expectations(
    state_prep: &StateVector,
    params: &CircuitParams,
    noise: &NoiseSpec,
    method: NoiseMethod,
    trajectories: usize,
    seed: u64,
) -> Result<NoisyExpectations> {
    noise.validate()?;
    if noise.is_noiseless() {
        return Ok(NoisyExpectations {
            values: expectations_z(&run_circuit(state_prep, params)?),
            standard_errors: None,
        });
    }
    match method.resolve(params.num_qubits()) {
        NoiseMethod::Density => {
            if params.num_qubits() > DENSITY_MAX_QUBITS {
                return Err(Error::SizeLimit {
                    what: "density-matrix simulation",
                    num_qubits: params.num_qubits(),
                    limit: DENSITY_MAX_QUBITS,
                });
            }
            Ok(NoisyExpectations {
                values: density_expectations(state_prep, params, noise)?,
                standard_errors: None,
            })
        }
        _ => {
            let (values, se) =
                trajectory_expectations(state_prep, params, noise, trajectories, seed)?;
            Ok(NoisyExpectations {
                values,
                standard_errors: Some(se),
            })
        }
    }
}
