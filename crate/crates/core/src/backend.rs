//! Circuit execution policy: noise backend, readout mode and gradient route.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{dims, Error, Result};
use crate::noise::{
    density_adjoint_gradient, density_expectations, trajectory_expectations, NoiseMethod,
    NoiseSpec, DEFAULT_TRAJECTORIES,
};
use crate::simulator::{
    adjoint_gradient, expectations_z, run_circuit, sample_pm_one, CircuitParams, StateVector,
};

/// Number of shots used when shot readout is requested without a count.
pub const DEFAULT_SHOTS: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Measurement {
    /// Exact expectation values.
    #[default]
    Exact,
    /// Per-qubit estimates from `shots` Bernoulli draws.
    Shots { shots: usize },
}

/// SplitMix64 finalizer applied to `a ⊕ mix(b)`; derives independent stream
/// seeds from (seed, index) pairs.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gradient of Σ_u w_u ⟨Z_u⟩ with respect to the circuit angles and, when the
/// route supports it, the real input amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradient {
    pub expectations: Vec<f64>,
    pub angle_grad: Vec<f64>,
    pub input_grad: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Executor {
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub method: NoiseMethod,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub measurement: Measurement,
    #[serde(default)]
    pub seed: u64,
}

fn default_trajectories() -> usize {
    DEFAULT_TRAJECTORIES
}

impl Default for Executor {
    fn default() -> Self {
        Self::exact()
    }
}

impl Executor {
    /// Noiseless exact expectations.
    pub fn exact() -> Self {
        Self {
            noise: NoiseSpec::noiseless(),
            method: NoiseMethod::Auto,
            trajectories: DEFAULT_TRAJECTORIES,
            measurement: Measurement::Exact,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_method(mut self, method: NoiseMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_measurement(mut self, measurement: Measurement) -> Self {
        self.measurement = measurement;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn uses_trajectories(&self, num_qubits: usize) -> bool {
        !self.noise.is_noiseless() && self.method.resolve(num_qubits) == NoiseMethod::Trajectory
    }

    /// True when expectations are a pure function of the inputs.
    pub fn is_deterministic(&self, num_qubits: usize) -> bool {
        self.measurement == Measurement::Exact && !self.uses_trajectories(num_qubits)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if let Measurement::Shots { shots: 0 } = self.measurement {
            return Err(Error::InvalidArgument(
                "shot count must be at least 1".into(),
            ));
        }
        if self.method == NoiseMethod::Trajectory && self.trajectories == 0 {
            return Err(Error::InvalidArgument(
                "trajectory count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn exact_expectations(
        &self,
        input: &StateVector,
        params: &CircuitParams,
        stream: u64,
    ) -> Result<Vec<f64>> {
        let u = params.num_qubits();
        if self.noise.is_noiseless() {
            Ok(expectations_z(&run_circuit(input, params)?))
        } else if self.uses_trajectories(u) {
            let seed = mix_seed(self.seed, mix_seed(stream, 0));
            Ok(trajectory_expectations(input, params, &self.noise, self.trajectories, seed)?.0)
        } else {
            density_expectations(input, params, &self.noise)
        }
    }

    /// Pauli-Z readout of every qubit. `stream` keys the random draws of the
    /// stochastic modes; exact modes ignore it.
    pub fn expectations(
        &self,
        input: &StateVector,
        params: &CircuitParams,
        stream: u64,
    ) -> Result<Vec<f64>> {
        let base = self.exact_expectations(input, params, stream)?;
        match self.measurement {
            Measurement::Exact => Ok(base),
            Measurement::Shots { shots } => base
                .iter()
                .enumerate()
                .map(|(u, &e)| {
                    sample_pm_one(
                        e,
                        shots,
                        mix_seed(self.seed, mix_seed(stream, 1 + u as u64)),
                    )
                })
                .collect(),
        }
    }

    /// Gradient of Σ_u weights[u]·⟨Z_u⟩.
    ///
    /// Exact noiseless readout uses the statevector adjoint method, exact
    /// density-matrix readout the density adjoint method. Stochastic modes fall
    /// back to the π/2 parameter-shift rule on the sampled expectations and
    /// provide no input gradient.
    pub fn weighted_gradient(
        &self,
        input: &StateVector,
        params: &CircuitParams,
        weights: &[f64],
        stream: u64,
    ) -> Result<CircuitGradient> {
        let u = params.num_qubits();
        if weights.len() != u {
            return Err(dims(format!(
                "{} observable weights for {u} qubits",
                weights.len()
            )));
        }
        if self.is_deterministic(u) {
            let g = if self.noise.is_noiseless() {
                adjoint_gradient(input, params, weights)?
            } else {
                density_adjoint_gradient(input, params, &self.noise, weights)?
            };
            return Ok(CircuitGradient {
                expectations: g.expectations,
                angle_grad: g.angle_grad,
                input_grad: Some(g.input_grad),
            });
        }
        let expectations = self.expectations(input, params, stream)?;
        let angle_grad = parameter_shift_gradient(params, weights, |p, k| {
            self.expectations(input, p, mix_seed(stream, 2 + k as u64))
        })?;
        Ok(CircuitGradient {
            expectations,
            angle_grad,
            input_grad: None,
        })
    }
}

/// π/2 parameter-shift gradient of Σ_u w_u e_u(θ) for an arbitrary expectation
/// routine. The closure receives shifted parameters and a distinct evaluation
/// index for seeding.
pub fn parameter_shift_gradient<F>(
    params: &CircuitParams,
    weights: &[f64],
    mut eval: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&CircuitParams, usize) -> Result<Vec<f64>>,
{
    let mut shifted = params.clone();
    let mut grad = Vec::with_capacity(params.param_count());
    for i in 0..params.param_count() {
        let theta = params.angles()[i];
        shifted.angles_mut()[i] = theta + FRAC_PI_2;
        let plus = eval(&shifted, 2 * i)?;
        shifted.angles_mut()[i] = theta - FRAC_PI_2;
        let minus = eval(&shifted, 2 * i + 1)?;
        shifted.angles_mut()[i] = theta;
        grad.push(
            weights
                .iter()
                .zip(plus.iter().zip(&minus))
                .map(|(w, (p, m))| w * (p - m) / 2.0)
                .sum(),
        );
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::amplitude_encode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_routes_agree_with_shift_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = CircuitParams::random(3, 2, &mut rng).unwrap();
        let s = amplitude_encode(&[0.5, 0.1, -0.3, 0.2, 0.7], 3).unwrap();
        let w = [1.0, -0.5, 0.25];
        for exec in [
            Executor::exact(),
            Executor::exact().with_noise(NoiseSpec::new(0.01, 0.01).unwrap()),
        ] {
            let g = exec.weighted_gradient(&s, &p, &w, 0).unwrap();
            let shift =
                parameter_shift_gradient(&p, &w, |q, _| exec.expectations(&s, q, 0)).unwrap();
            for (a, b) in g.angle_grad.iter().zip(&shift) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(g.input_grad.is_some());
        }
    }

    #[test]
    fn shot_mode_uses_shift_rule_and_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = CircuitParams::random(2, 1, &mut rng).unwrap();
        let s = StateVector::zero(2).unwrap();
        let exec = Executor::exact()
            .with_measurement(Measurement::Shots { shots: 4096 })
            .with_seed(5);
        assert!(!exec.is_deterministic(2));
        let a = exec.weighted_gradient(&s, &p, &[1.0, 1.0], 3).unwrap();
        let b = exec.weighted_gradient(&s, &p, &[1.0, 1.0], 3).unwrap();
        assert_eq!(a, b);
        assert!(a.input_grad.is_none());
        let exact = Executor::exact()
            .weighted_gradient(&s, &p, &[1.0, 1.0], 3)
            .unwrap();
        for (x, y) in a.angle_grad.iter().zip(&exact.angle_grad) {
            assert!((x - y).abs() < 0.1);
        }
    }

    #[test]
    fn mix_seed_spreads_streams() {
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_eq!(mix_seed(7, 9), mix_seed(7, 9));
    }
}
