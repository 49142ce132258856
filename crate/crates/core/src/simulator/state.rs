use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{dims, invalid, Error, Result};

/// Inputs whose Euclidean norm falls below this are treated as the zero vector
/// by [`amplitude_encode`].
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 26;

/// Position of `qubit` in a basis index. Qubit 0 is the most significant bit.
#[inline]
pub(crate) fn qubit_mask(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

/// Pure state of a `num_qubits` register stored as `2^num_qubits` amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros basis state |0…0⟩.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(dims(format!(
                "basis index {index} outside a {dim}-dimensional register"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps explicit amplitudes. The vector must have length `2^num_qubits`
    /// and unit norm within 1e-10.
    pub fn from_amplitudes(num_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_register(num_qubits)?;
        if amplitudes.len() != 1 << num_qubits {
            return Err(dims(format!(
                "{} amplitudes for a {num_qubits}-qubit register",
                amplitudes.len()
            )));
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-10 {
            return Err(invalid(format!(
                "state is not normalized (squared norm {norm_sqr})"
            )));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub(crate) fn from_raw(num_qubits: usize, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << num_qubits);
        Self {
            num_qubits,
            amplitudes,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability that measuring `qubit` yields 0.
    pub fn prob_zero(&self, qubit: usize) -> Result<f64> {
        check_qubit(qubit, self.num_qubits)?;
        let mask = qubit_mask(self.num_qubits, qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }
}

pub(crate) fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 {
        return Err(invalid("a register needs at least one qubit"));
    }
    if num_qubits > MAX_QUBITS {
        return Err(Error::SizeLimit {
            what: "statevector simulation",
            num_qubits,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}

pub(crate) fn check_qubit(index: usize, num_qubits: usize) -> Result<()> {
    if index >= num_qubits {
        Err(Error::QubitIndex { index, num_qubits })
    } else {
        Ok(())
    }
}

/// Smallest register able to hold `len` amplitudes.
pub fn qubits_for(len: usize) -> usize {
    let mut u = 1;
    while (1usize << u) < len {
        u += 1;
    }
    u
}

/// Amplitude-encodes a real vector: zero-pads `w` to `2^num_qubits` entries and
/// divides by its Euclidean norm.
///
/// A vector with norm below [`DEGENERATE_NORM`] encodes |0…0⟩ and logs a warning.
pub fn amplitude_encode(w: &[f64], num_qubits: usize) -> Result<StateVector> {
    Ok(encode_with_norm(w, num_qubits)?.0)
}

/// Like [`amplitude_encode`] but also returns the input norm; a norm below
/// [`DEGENERATE_NORM`] marks the fallback state.
pub fn encode_with_norm(w: &[f64], num_qubits: usize) -> Result<(StateVector, f64)> {
    check_register(num_qubits)?;
    let dim = 1usize << num_qubits;
    if w.len() > dim {
        return Err(dims(format!(
            "cannot encode {} values into {num_qubits} qubits (capacity {dim})",
            w.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("amplitude-encoding input".into()));
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM {
        log::warn!("amplitude_encode: near-zero input (norm {norm:e}); encoding |0…0⟩");
        return Ok((StateVector::zero(num_qubits)?, norm));
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
    for (a, &v) in amplitudes.iter_mut().zip(w) {
        *a = Complex64::new(v / norm, 0.0);
    }
    Ok((StateVector::from_raw(num_qubits, amplitudes), norm))
}

/// ⟨σ_z⟩ on `qubit`: +|a_i|² where the qubit's bit is 0, −|a_i|² where it is 1.
pub fn expectation_z(state: &StateVector, qubit: usize) -> Result<f64> {
    check_qubit(qubit, state.num_qubits)?;
    Ok(z_expectation_unchecked(
        state.amplitudes(),
        state.num_qubits,
        qubit,
    ))
}

/// Pauli-Z expectations of every qubit, in qubit order.
pub fn expectations_z(state: &StateVector) -> Vec<f64> {
    z_expectations_raw(state.amplitudes(), state.num_qubits)
}

pub(crate) fn z_expectation_unchecked(amps: &[Complex64], num_qubits: usize, qubit: usize) -> f64 {
    let mask = qubit_mask(num_qubits, qubit);
    let value: f64 = amps
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if i & mask == 0 {
                a.norm_sqr()
            } else {
                -a.norm_sqr()
            }
        })
        .sum();
    value.clamp(-1.0, 1.0)
}

pub(crate) fn z_expectations_raw(amps: &[Complex64], num_qubits: usize) -> Vec<f64> {
    let mut out = vec![0.0; num_qubits];
    for (i, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
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

/// Shot estimate of a ±1 observable whose exact expectation is `exact`.
///
/// Draws `shots` Bernoulli outcomes with p(+1) = (1 + exact)/2 from a ChaCha
/// stream keyed by `seed` and returns (n₊ − n₋)/shots.
pub fn sample_pm_one(exact: f64, shots: usize, seed: u64) -> Result<f64> {
    if shots == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    let p_plus = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plus = Binomial::new(shots as u64, p_plus)
        .map_err(|e| invalid(format!("binomial sampler: {e}")))?
        .sample(&mut rng);
    let minus = shots as u64 - plus;
    Ok((plus as f64 - minus as f64) / shots as f64)
}

/// Shot-sampled ⟨σ_z⟩ on `qubit`, reproducible for a fixed `seed`.
pub fn sample_expectation_z(
    state: &StateVector,
    qubit: usize,
    shots: usize,
    seed: u64,
) -> Result<f64> {
    let exact = expectation_z(state, qubit)?;
    sample_pm_one(exact, shots, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(state: &StateVector) -> Vec<f64> {
        state.amplitudes().iter().map(|a| a.re).collect()
    }

    #[test]
    fn encode_basis_vector_is_fixed_point() {
        let s = amplitude_encode(&[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(re(&s), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_symmetric_pair() {
        let s = amplitude_encode(&[1.0, 1.0], 1).unwrap();
        let h = 1.0 / 2f64.sqrt();
        for a in re(&s) {
            assert!((a - h).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_pads_and_normalizes() {
        // ‖(3, 4, 0)‖ = 5
        let s = amplitude_encode(&[3.0, 4.0, 0.0], 2).unwrap();
        let expected = [0.6, 0.8, 0.0, 0.0];
        for (a, e) in re(&s).iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_rejects_overflow() {
        assert!(matches!(
            amplitude_encode(&[1.0; 5], 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn encode_zero_vector_falls_back_to_ground_state() {
        let s = amplitude_encode(&[0.0, 1e-14, 0.0], 2).unwrap();
        assert_eq!(s, StateVector::zero(2).unwrap());
    }

    #[test]
    fn z_expectations_of_simple_states() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        let plus = amplitude_encode(&[1.0, 1.0], 1).unwrap();
        assert_eq!(expectation_z(&zero, 0).unwrap(), 1.0);
        assert_eq!(expectation_z(&one, 0).unwrap(), -1.0);
        assert!(expectation_z(&plus, 0).unwrap().abs() < 1e-15);
        assert!(matches!(
            expectation_z(&zero, 1),
            Err(Error::QubitIndex { .. })
        ));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        // |10⟩ = index 2
        let s = StateVector::basis(2, 2).unwrap();
        assert_eq!(expectations_z(&s), vec![-1.0, 1.0]);
    }

    #[test]
    fn sampling_deterministic_states() {
        let zero = StateVector::zero(1).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        assert_eq!(sample_expectation_z(&zero, 0, 17, 3).unwrap(), 1.0);
        assert_eq!(sample_expectation_z(&one, 0, 1, 3).unwrap(), -1.0);
        assert!(sample_expectation_z(&one, 0, 0, 3).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let plus = amplitude_encode(&[1.0, 1.0], 1).unwrap();
        let a = sample_expectation_z(&plus, 0, 4096, 11).unwrap();
        let b = sample_expectation_z(&plus, 0, 4096, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.abs() <= 0.0625);
    }

    #[test]
    fn qubits_for_capacity() {
        assert_eq!(qubits_for(1), 1);
        assert_eq!(qubits_for(2), 1);
        assert_eq!(qubits_for(3), 2);
        assert_eq!(qubits_for(64), 6);
        assert_eq!(qubits_for(65), 7);
    }
}
