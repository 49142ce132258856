//! JSON checkpoints. Arrays are stored row-major as base64 of little-endian
//! f64 bytes, together with their shape.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::{Model, ModelSpec};
use crate::error::{dims, invalid, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qmlp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedArray {
    /// `[n]` for vectors, `[rows, cols]` for matrices.
    pub shape: Vec<usize>,
    /// Row-major little-endian f64 values, base64 (standard alphabet, padded).
    pub data: String,
}

impl EncodedArray {
    pub fn from_row_major(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let values: Vec<f64> = (0..r)
            .flat_map(|i| (0..c).map(move |j| m[(i, j)]))
            .collect();
        Self::from_row_major(vec![r, c], &values)
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self::from_row_major(vec![v.len()], v)
    }

    pub fn decode(&self) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| invalid(format!("checkpoint array is not valid base64: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(invalid(
                "checkpoint array length is not a multiple of 8 bytes",
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.len() != self.shape.iter().product::<usize>() {
            return Err(dims(format!(
                "checkpoint array holds {} values but shape is {:?}",
                values.len(),
                self.shape
            )));
        }
        Ok(values)
    }

    fn to_matrix(&self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        if self.shape != [rows, cols] {
            return Err(dims(format!(
                "expected shape [{rows}, {cols}], found {:?}",
                self.shape
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.decode()?))
    }

    fn to_vector(&self, len: usize) -> Result<Vec<f64>> {
        if self.shape != [len] {
            return Err(dims(format!(
                "expected shape [{len}], found {:?}",
                self.shape
            )));
        }
        self.decode()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    /// Initialisation seed of the run that produced the weights.
    pub seed: u64,
    pub arrays: BTreeMap<String, EncodedArray>,
    /// Run metadata; ignored when restoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

enum Slot<'a> {
    Matrix(&'a mut DMatrix<f64>),
    Vector(&'a mut DVector<f64>),
    Angles(&'a mut [f64]),
}

fn slots(model: &mut Model) -> Vec<(&'static str, Slot<'_>)> {
    use Slot::*;
    match model {
        Model::Hybrid(m) => {
            let g = &mut m.generator;
            vec![
                ("w1", Matrix(&mut g.seed)),
                ("angles", Angles(g.circuit.angles_mut())),
                ("f_lin.weight", Matrix(&mut g.f_lin.weight)),
                ("f_lin.bias", Vector(&mut g.f_lin.bias)),
                ("w2.weight", Matrix(&mut m.w2.weight)),
                ("w2.bias", Vector(&mut m.w2.bias)),
            ]
        }
        Model::Vqc(m) => vec![
            ("angles", Angles(m.circuit.angles_mut())),
            ("head.weight", Matrix(&mut m.head.weight)),
            ("head.bias", Vector(&mut m.head.bias)),
        ],
        Model::Mlp(m) => vec![
            ("w1.weight", Matrix(&mut m.w1.weight)),
            ("w1.bias", Vector(&mut m.w1.bias)),
            ("w2.weight", Matrix(&mut m.w2.weight)),
            ("w2.bias", Vector(&mut m.w2.bias)),
        ],
        Model::HybridV2(m) => {
            let (a, b) = (&mut m.first, &mut m.second);
            vec![
                ("w1", Matrix(&mut a.seed)),
                ("angles", Angles(a.circuit.angles_mut())),
                ("f_lin.weight", Matrix(&mut a.f_lin.weight)),
                ("f_lin.bias", Vector(&mut a.f_lin.bias)),
                ("w2", Matrix(&mut b.seed)),
                ("angles2", Angles(b.circuit.angles_mut())),
                ("f_lin2.weight", Matrix(&mut b.f_lin.weight)),
                ("f_lin2.bias", Vector(&mut b.f_lin.bias)),
                ("output.bias", Vector(&mut m.output_bias)),
            ]
        }
    }
}

impl Checkpoint {
    pub fn capture(spec: &ModelSpec, seed: u64, model: &Model) -> Result<Self> {
        if spec.kind != model.kind() {
            return Err(invalid(format!(
                "spec describes {} but model is {}",
                spec.kind,
                model.kind()
            )));
        }
        let mut scratch = model.clone();
        let arrays = slots(&mut scratch)
            .into_iter()
            .map(|(name, slot)| {
                let enc = match slot {
                    Slot::Matrix(m) => EncodedArray::from_matrix(m),
                    Slot::Vector(v) => EncodedArray::from_vector(v.as_slice()),
                    Slot::Angles(a) => EncodedArray::from_vector(a),
                };
                (name.to_string(), enc)
            })
            .collect();
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: spec.clone(),
            seed,
            arrays,
            provenance: None,
        })
    }

    /// Rebuilds the model and overwrites every array with the stored values.
    pub fn restore(&self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(invalid(format!(
                "unknown checkpoint format `{}`",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint version {}",
                self.version
            )));
        }
        let mut model = self.model.build(self.seed)?;
        for (name, slot) in slots(&mut model) {
            let stored = self
                .arrays
                .get(name)
                .ok_or_else(|| invalid(format!("checkpoint is missing array `{name}`")))?;
            let tag = |e: Error| invalid(format!("array `{name}`: {e}"));
            match slot {
                Slot::Matrix(m) => *m = stored.to_matrix(m.nrows(), m.ncols()).map_err(tag)?,
                Slot::Vector(v) => v.copy_from_slice(&stored.to_vector(v.len()).map_err(tag)?),
                Slot::Angles(a) => a.copy_from_slice(&stored.to_vector(a.len()).map_err(tag)?),
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
