use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dims, Result};

/// y = Wᵀx + b with W stored as an `input × output` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Affine {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(dims(format!(
                "affine weight has {} outputs but bias has {}",
                weight.ncols(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(input, output),
            bias: DVector::zeros(output),
        }
    }

    /// Weights N(0, 1)/√input, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        Self {
            weight: normal_matrix(input, output, scale, rng),
            bias: DVector::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(dims(format!(
                "affine map expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.weight.tr_mul(&DVector::from_column_slice(x)) + &self.bias)
    }
}

/// Matrix with i.i.d. N(0, 1)·scale entries, filled column by column.
pub fn normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn relu(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Numerically stable softmax.
pub fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    let exp = logits.map(|l| (l - max).exp());
    let total = exp.sum();
    exp / total
}

/// Mean of `bins` contiguous chunks of `x` (chunk k covers
/// `[k·n/bins, (k+1)·n/bins)`).
pub fn pool_mean(x: &[f64], bins: usize) -> Vec<f64> {
    let n = x.len();
    (0..bins)
        .map(|k| {
            let (lo, hi) = (k * n / bins, (k + 1) * n / bins);
            if hi > lo {
                x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_properties() {
        let l = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let p = softmax(&l);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
        let shifted = softmax(&l.map(|v| v + 123.4));
        assert!((p - shifted).amax() < 1e-12);
        let huge = softmax(&DVector::from_vec(vec![1000.0, 0.0]));
        assert!(huge.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pooling_chunks() {
        let x: Vec<f64> = (0..8).map(|v| v as f64).collect();
        assert_eq!(pool_mean(&x, 4), vec![0.5, 2.5, 4.5, 6.5]);
        assert_eq!(pool_mean(&x, 8), x);
    }

    #[test]
    fn affine_shape_errors() {
        let a = Affine::zeros(3, 2);
        assert!(a.apply(&[1.0, 2.0]).is_err());
        assert_eq!(a.apply(&[1.0, 2.0, 3.0]).unwrap().len(), 2);
        assert!(Affine::new(DMatrix::zeros(2, 3), DVector::zeros(2)).is_err());
    }
}
