use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{dagger2, matmul2, Mat2};

/// Damping rates applied to every qubit after each circuit layer.
///
/// The rates are per layer and per qubit: one amplitude-damping channel with
/// rate `adr` followed by one phase-damping channel with rate `pdr`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub adr: f64,
    pub pdr: f64,
}

impl NoiseSpec {
    pub fn new(adr: f64, pdr: f64) -> Result<Self> {
        check_rate("adr", adr)?;
        check_rate("pdr", pdr)?;
        Ok(Self { adr, pdr })
    }

    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn is_noiseless(&self) -> bool {
        self.adr == 0.0 && self.pdr == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("adr", self.adr)?;
        check_rate("pdr", self.pdr)
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Rate { name, value });
    }
    Ok(())
}

/// Single-qubit channel in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    operators: Vec<Mat2>,
}

impl KrausSet {
    pub fn new(operators: Vec<Mat2>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::InvalidArgument("empty Kraus set".into()));
        }
        let set = Self { operators };
        let err = set.completeness_error();
        if err > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "Kraus operators are not trace preserving (‖ΣK†K − I‖ = {err:e})"
            )));
        }
        Ok(set)
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    /// max |(Σ K_i†K_i − I)_rc|
    pub fn completeness_error(&self) -> f64 {
        let mut sum = [[Complex64::new(0.0, 0.0); 2]; 2];
        for k in &self.operators {
            let p = matmul2(&dagger2(k), k);
            for r in 0..2 {
                for c in 0..2 {
                    sum[r][c] += p[r][c];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (r, row) in sum.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let id = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((v - id).norm());
            }
        }
        worst
    }

    /// True when the set is exactly the identity channel.
    pub fn is_identity(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        self.operators.iter().enumerate().all(|(i, k)| {
            if i == 0 {
                *k == [[one, zero], [zero, one]]
            } else {
                k.iter().flatten().all(|v| *v == zero)
            }
        })
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// K₀ = diag(1, √(1−γ)), K₁ = √γ·|0⟩⟨1|.
pub fn kraus_amplitude_damping(adr: f64) -> Result<KrausSet> {
    check_rate("adr", adr)?;
    let z = real(0.0);
    Ok(KrausSet {
        operators: vec![
            [[real(1.0), z], [z, real((1.0 - adr).sqrt())]],
            [[z, real(adr.sqrt())], [z, z]],
        ],
    })
}

/// K₀ = diag(1, √(1−λ)), K₁ = diag(0, √λ).
pub fn kraus_phase_damping(pdr: f64) -> Result<KrausSet> {
    check_rate("pdr", pdr)?;
    let z = real(0.0);
    Ok(KrausSet {
        operators: vec![
            [[real(1.0), z], [z, real((1.0 - pdr).sqrt())]],
            [[z, z], [z, real(pdr.sqrt())]],
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_validated() {
        assert!(NoiseSpec::new(0.1, 0.2).is_ok());
        assert!(matches!(
            NoiseSpec::new(-0.1, 0.0),
            Err(Error::Rate { name: "adr", .. })
        ));
        assert!(matches!(
            NoiseSpec::new(0.0, 1.5),
            Err(Error::Rate { name: "pdr", .. })
        ));
        assert!(kraus_amplitude_damping(1.01).is_err());
        assert!(kraus_phase_damping(f64::NAN).is_err());
    }

    #[test]
    fn zero_rate_channels_are_identity() {
        assert!(kraus_amplitude_damping(0.0).unwrap().is_identity());
        assert!(kraus_phase_damping(0.0).unwrap().is_identity());
        assert!(!kraus_phase_damping(0.1).unwrap().is_identity());
    }

    #[test]
    fn completeness_on_a_grid() {
        for i in 0..=20 {
            let r = i as f64 / 20.0;
            assert!(kraus_amplitude_damping(r).unwrap().completeness_error() < 1e-12);
            assert!(kraus_phase_damping(r).unwrap().completeness_error() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_trace_preserving_sets() {
        let half = real(0.5);
        let z = real(0.0);
        assert!(KrausSet::new(vec![[[half, z], [z, half]]]).is_err());
    }
}
