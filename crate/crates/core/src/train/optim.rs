use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Result};
use crate::model::{Classifier, Gradient};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    /// Plain gradient descent θ ← θ − lr·g.
    Sgd,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl Optimizer {
    pub fn validate(&self) -> Result<()> {
        if let Optimizer::Adam { beta1, beta2, eps } = *self {
            if !(0.0..1.0).contains(&beta1)
                || !(0.0..1.0).contains(&beta2)
                || eps.is_nan()
                || eps <= 0.0
            {
                return Err(invalid("Adam needs β1, β2 in [0, 1) and ε > 0"));
            }
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(dims(format!(
            "Adam shapes differ: params {}, grad {}, state {}/{}",
            params.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer plus per-group state, keyed by group position.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    optimizer: Optimizer,
    groups: Vec<AdamState>,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, model: &dyn Classifier) -> Self {
        let groups = model
            .parameters()
            .iter()
            .map(|(_, p)| AdamState::new(p.len()))
            .collect();
        Self { optimizer, groups }
    }

    pub fn step(&mut self, model: &mut dyn Classifier, grad: &Gradient, lr: f64) -> Result<()> {
        grad.check_shapes(&model.parameters())?;
        for (k, ((_, params), (_, g))) in model
            .parameters_mut()
            .into_iter()
            .zip(grad.groups())
            .enumerate()
        {
            match self.optimizer {
                Optimizer::Adam { beta1, beta2, eps } => {
                    adam_step(params, g, &mut self.groups[k], lr, beta1, beta2, eps)?
                }
                Optimizer::Sgd => params.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g),
            }
        }
        Ok(())
    }
}
