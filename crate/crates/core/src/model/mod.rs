//! Classifiers: the circuit-generated-weight MLP, its two-circuit variant, and
//! the plain-circuit and classical-MLP baselines.

mod affine;
mod checkpoint;
mod generator;
mod hybrid;
mod mlp;
mod v2;
mod vqc;

pub use affine::{normal_matrix, pool_mean, relu, softmax, Affine};
pub use checkpoint::{Checkpoint, EncodedArray, Provenance, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use generator::{GeneratedWeights, GeneratorGrad, WeightGenerator};
pub use hybrid::HybridModel;
pub use mlp::Mlp;
pub use v2::HybridV2;
pub use vqc::PlainVqc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::backend::Executor;
use crate::error::{dims, invalid, Error, Result};
use crate::simulator::{qubits_for, Entangler, RotationOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "vqc-mlpnet")]
    VqcMlpNet,
    #[serde(rename = "vqc")]
    Vqc,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "vqc-mlpnet-v2")]
    VqcMlpNetV2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::VqcMlpNet,
        ModelKind::Vqc,
        ModelKind::Mlp,
        ModelKind::VqcMlpNetV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::VqcMlpNet => "vqc-mlpnet",
            ModelKind::Vqc => "vqc",
            ModelKind::Mlp => "mlp",
            ModelKind::VqcMlpNetV2 => "vqc-mlpnet-v2",
        }
    }

    pub fn uses_circuit(self) -> bool {
        self != ModelKind::Mlp
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown model kind `{s}`")))
    }
}

/// Architecture sizes. `qubits2`/`depth2` configure the second circuit of the
/// two-circuit variant and default to the smallest register holding `hidden`
/// amplitudes and to `depth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub qubits: usize,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubits2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth2: Option<usize>,
}

impl ModelDims {
    pub fn new(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        qubits: usize,
        depth: usize,
    ) -> Self {
        Self {
            input_dim,
            hidden,
            classes,
            qubits,
            depth,
            qubits2: None,
            depth2: None,
        }
    }

    pub fn second_qubits(&self) -> usize {
        self.qubits2.unwrap_or_else(|| qubits_for(self.hidden))
    }

    pub fn second_depth(&self) -> usize {
        self.depth2.unwrap_or(self.depth)
    }
}

/// Exact trainable-parameter count with the seed matrices frozen.
///
/// * VQC-MLPNet: 3UL + (UM + M) + (MJ + J)
/// * plain VQC: 3UL + (UJ + J)
/// * MLP: (DM + M) + (MJ + J)
/// * two-circuit variant: 3UL + (UM + M) + 3U₂L₂ + (U₂M + M) + J
pub fn count_params(kind: ModelKind, d: &ModelDims) -> usize {
    let circuit = 3 * d.qubits * d.depth;
    match kind {
        ModelKind::VqcMlpNet => {
            circuit + (d.qubits * d.hidden + d.hidden) + (d.hidden * d.classes + d.classes)
        }
        ModelKind::Vqc => circuit + d.qubits * d.classes + d.classes,
        ModelKind::Mlp => d.input_dim * d.hidden + d.hidden + d.hidden * d.classes + d.classes,
        ModelKind::VqcMlpNetV2 => {
            let (u2, l2) = (d.second_qubits(), d.second_depth());
            circuit
                + (d.qubits * d.hidden + d.hidden)
                + 3 * u2 * l2
                + (u2 * d.hidden + d.hidden)
                + d.classes
        }
    }
}

/// Role of a parameter group in the tangent-kernel decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelRole {
    /// Circuit rotation angles (split further into α/β/γ).
    Angles,
    /// Output-layer parameters.
    Output,
    /// Not part of the decomposed kernel.
    Excluded,
}

/// Per-group gradient aligned with [`Classifier::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    groups: Vec<(&'static str, Vec<f64>)>,
}

impl Gradient {
    pub fn new(groups: Vec<(&'static str, Vec<f64>)>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[(&'static str, Vec<f64>)] {
        &self.groups
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.groups
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn is_finite(&self) -> bool {
        self.groups
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    /// Checks names and lengths against a parameter listing.
    pub fn check_shapes(&self, params: &[(&'static str, &[f64])]) -> Result<()> {
        if self.groups.len() != params.len()
            || self
                .groups
                .iter()
                .zip(params)
                .any(|((gn, gv), (pn, pv))| gn != pn || gv.len() != pv.len())
        {
            return Err(dims("gradient groups do not match parameter groups"));
        }
        Ok(())
    }
}

/// Sample-independent state computed once per parameter setting.
#[derive(Clone, Debug, PartialEq)]
pub enum Prepared {
    None,
    Hybrid(GeneratedWeights),
    HybridV2 {
        first: GeneratedWeights,
        second: GeneratedWeights,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub logits: DVector<f64>,
    pub probabilities: DVector<f64>,
}

impl ModelOutput {
    pub fn from_logits(logits: DVector<f64>) -> Self {
        let probabilities = softmax(&logits);
        Self {
            logits,
            probabilities,
        }
    }

    pub fn predicted_class(&self) -> usize {
        self.probabilities.argmax().0
    }
}

pub trait Classifier: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Circuit work that does not depend on the sample (weight generation).
    fn prepare(&self, exec: &Executor, stream: u64) -> Result<Prepared>;

    fn logits(
        &self,
        prep: &Prepared,
        x: &[f64],
        exec: &Executor,
        stream: u64,
    ) -> Result<DVector<f64>>;

    /// Gradient of Σ_n ⟨upstream_n, logits(x_n)⟩ over all trainable groups.
    fn backward(
        &self,
        prep: &Prepared,
        xs: &[&[f64]],
        upstream: &[DVector<f64>],
        exec: &Executor,
        stream: u64,
    ) -> Result<Gradient>;

    fn parameters(&self) -> Vec<(&'static str, &[f64])>;
    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn kernel_role(&self, _group: &str) -> KernelRole {
        KernelRole::Excluded
    }

    fn output(
        &self,
        prep: &Prepared,
        x: &[f64],
        exec: &Executor,
        stream: u64,
    ) -> Result<ModelOutput> {
        Ok(ModelOutput::from_logits(
            self.logits(prep, x, exec, stream)?,
        ))
    }

    fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, v)| v.len()).sum()
    }
}

pub(crate) fn check_input(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(dims(format!(
            "input has {} features, model expects {expected}",
            x.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_batch(xs: &[&[f64]], upstream: &[DVector<f64>], classes: usize) -> Result<()> {
    if xs.len() != upstream.len() {
        return Err(dims(format!(
            "{} inputs but {} upstream gradients",
            xs.len(),
            upstream.len()
        )));
    }
    if upstream.iter().any(|g| g.len() != classes) {
        return Err(dims("upstream gradient length differs from class count"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Hybrid(HybridModel),
    Vqc(PlainVqc),
    Mlp(Mlp),
    HybridV2(HybridV2),
}

impl Model {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            Model::Hybrid(m) => m,
            Model::Vqc(m) => m,
            Model::Mlp(m) => m,
            Model::HybridV2(m) => m,
        }
    }

    pub fn classifier_mut(&mut self) -> &mut dyn Classifier {
        match self {
            Model::Hybrid(m) => m,
            Model::Vqc(m) => m,
            Model::Mlp(m) => m,
            Model::HybridV2(m) => m,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.classifier().kind()
    }
}

/// Everything needed to build a freshly initialised model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dims: ModelDims,
    #[serde(default)]
    pub entangler: Entangler,
    #[serde(default)]
    pub rotation_order: RotationOrder,
    /// Train the seed matrix W1 as well (ablation).
    #[serde(default)]
    pub train_w1: bool,
    /// Keep circuit angles fixed.
    #[serde(default)]
    pub freeze_circuit: bool,
    /// Plain VQC only: mean-pool inputs wider than 2^U.
    #[serde(default)]
    pub pool_inputs: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dims: ModelDims) -> Self {
        Self {
            kind,
            dims,
            entangler: Entangler::Ring,
            rotation_order: RotationOrder::XFirst,
            train_w1: false,
            freeze_circuit: false,
            pool_inputs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.input_dim == 0 || d.classes == 0 {
            return Err(invalid("input dimension and class count must be positive"));
        }
        if self.kind != ModelKind::Vqc && d.hidden == 0 {
            return Err(invalid("hidden width must be positive"));
        }
        if self.kind.uses_circuit() && (d.qubits == 0 || d.depth == 0) {
            return Err(invalid("qubit count and depth must be positive"));
        }
        match self.kind {
            ModelKind::VqcMlpNet | ModelKind::VqcMlpNetV2
                if (1usize << d.qubits.min(63)) < d.hidden =>
            {
                Err(dims(format!(
                    "{} qubits cannot amplitude-encode hidden width {} (need 2^U ≥ M)",
                    d.qubits, d.hidden
                )))
            }
            ModelKind::VqcMlpNetV2 if (1usize << d.second_qubits().min(63)) < d.hidden => {
                Err(dims("second circuit too small for the hidden width"))
            }
            ModelKind::Vqc if (1usize << d.qubits.min(63)) < d.input_dim && !self.pool_inputs => {
                Err(dims(format!(
                    "{} qubits cannot amplitude-encode {} input features; enable input pooling",
                    d.qubits, d.input_dim
                )))
            }
            _ => Ok(()),
        }
    }

    /// Builds a model with weights drawn from a ChaCha stream seeded by `seed`.
    pub fn build(&self, seed: u64) -> Result<Model> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = &self.dims;
        let shape = |c: crate::simulator::CircuitParams| {
            c.with_entangler(self.entangler)
                .with_rotation_order(self.rotation_order)
        };
        Ok(match self.kind {
            ModelKind::VqcMlpNet => {
                let mut m = HybridModel::init(
                    d.input_dim,
                    d.hidden,
                    d.classes,
                    d.qubits,
                    d.depth,
                    &mut rng,
                )?;
                m.generator.circuit = shape(m.generator.circuit.clone());
                m.train_w1 = self.train_w1;
                m.freeze_circuit = self.freeze_circuit;
                Model::Hybrid(m)
            }
            ModelKind::Vqc => {
                let mut m = PlainVqc::init(
                    d.input_dim,
                    d.classes,
                    d.qubits,
                    d.depth,
                    self.pool_inputs,
                    &mut rng,
                )?;
                m.circuit = shape(m.circuit.clone());
                m.freeze_circuit = self.freeze_circuit;
                Model::Vqc(m)
            }
            ModelKind::Mlp => Model::Mlp(Mlp::init(d.input_dim, d.hidden, d.classes, &mut rng)),
            ModelKind::VqcMlpNetV2 => {
                let mut m = HybridV2::init(d, &mut rng)?;
                m.first.circuit = shape(m.first.circuit.clone());
                m.second.circuit = shape(m.second.circuit.clone());
                m.freeze_circuit = self.freeze_circuit;
                Model::HybridV2(m)
            }
        })
    }
}
