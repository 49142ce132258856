//! Experiment configuration, data preparation, sweeps and artifact writers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backend::Measurement;
use crate::data::{self, Dataset, Split, Task};
use crate::error::{invalid, Error, Result};
use crate::model::{count_params, Checkpoint, ModelDims, ModelKind, ModelSpec, Provenance};
use crate::noise::NoiseSpec;
use crate::ntk::{KernelGroup, NtkReport};
use crate::simulator::{Entangler, RotationOrder};
use crate::train::{fit, write_metrics_csv, FitResult, SummaryRow, TrainingConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Qubit counts above this trigger a wall-time warning.
pub const LARGE_QUBIT_WARNING: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Dots,
    Dna,
    File,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dots" => Ok(DataSource::Dots),
            "dna" => Ok(DataSource::Dna),
            "file" => Ok(DataSource::File),
            _ => Err(invalid(format!(
                "unknown task `{s}` (expected dots, dna or file)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub count: usize,
    pub resolution: usize,
    /// Pixel noise level for diagrams.
    pub noise: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// CSV inputs for `task = file`; without a test file the train file is split.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            count: 400,
            resolution: data::DEFAULT_RESOLUTION,
            noise: 0.0,
            seed: 0,
            train_fraction: 0.9,
            train_path: None,
            test_path: None,
        }
    }
}

/// One JSON document describing a full experiment. Every field has a default,
/// so a partial document is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: DataSource,
    pub data: DataConfig,
    pub model: ModelKind,
    pub qubits: usize,
    pub depth: usize,
    pub hidden: usize,
    pub classes: usize,
    pub qubits2: Option<usize>,
    pub depth2: Option<usize>,
    pub entangler: Entangler,
    pub rotation_order: RotationOrder,
    pub train_w1: bool,
    pub freeze_circuit: bool,
    /// Plain VQC: mean-pool inputs wider than 2^U instead of failing.
    pub pool_inputs: bool,
    pub noise: NoiseSpec,
    /// Shot count for readout; `None` means exact expectations.
    pub shots: Option<usize>,
    pub training: TrainingConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: DataSource::Dots,
            data: DataConfig::default(),
            model: ModelKind::VqcMlpNet,
            qubits: 6,
            depth: 3,
            hidden: 64,
            classes: 2,
            qubits2: None,
            depth2: None,
            entangler: Entangler::Ring,
            rotation_order: RotationOrder::XFirst,
            train_w1: false,
            freeze_circuit: false,
            pool_inputs: true,
            noise: NoiseSpec::noiseless(),
            shots: None,
            training: TrainingConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    /// Short SHA-256 of the serialized config. The output directory is left
    /// out so that moving a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        let text = serde_json::to_string(&keyed).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            artifact_version: ARTIFACT_VERSION.into(),
            config_hash: self.hash(),
            seeds: self.training.seeds.clone(),
        }
    }

    pub fn header_lines(&self) -> Vec<String> {
        let seeds: Vec<String> = self.training.seeds.iter().map(|s| s.to_string()).collect();
        vec![
            format!("qmlp artifact version {ARTIFACT_VERSION}"),
            format!("config_hash {}", self.hash()),
            format!("seeds {}", seeds.join(" ")),
        ]
    }

    /// Training settings with the top-level noise and shot options folded in.
    pub fn effective_training(&self) -> TrainingConfig {
        let mut t = self.training.clone();
        t.executor.noise = self.noise;
        t.executor.measurement = match self.shots {
            Some(shots) => Measurement::Shots { shots },
            None => Measurement::Exact,
        };
        t
    }

    pub fn dims(&self, input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            hidden: self.hidden,
            classes: self.classes,
            qubits: self.qubits,
            depth: self.depth,
            qubits2: self.qubits2,
            depth2: self.depth2,
        }
    }

    pub fn model_spec(&self, input_dim: usize) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            dims: self.dims(input_dim),
            entangler: self.entangler,
            rotation_order: self.rotation_order,
            train_w1: self.train_w1,
            freeze_circuit: self.freeze_circuit,
            pool_inputs: self.pool_inputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.shots == Some(0) {
            return Err(invalid("shot count must be at least 1"));
        }
        self.effective_training().validate()?;
        if self.task == DataSource::File && self.data.train_path.is_none() {
            return Err(invalid("task `file` needs data.train_path"));
        }
        if self.model.uses_circuit() && self.qubits > LARGE_QUBIT_WARNING {
            log::warn!(
                "{} qubits: every circuit holds 2^{} amplitudes; expect long run times",
                self.qubits,
                self.qubits
            );
        }
        Ok(())
    }

    /// Training and test splits for the configured task.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let d = &self.data;
        match self.task {
            DataSource::Dots | DataSource::Dna => {
                let task = if self.task == DataSource::Dots {
                    Task::Dots
                } else {
                    Task::Dna
                };
                data::generate(task, d.count, d.resolution, d.noise, d.seed)?
                    .train_test_split(d.train_fraction, d.seed)
            }
            DataSource::File => {
                let path = d
                    .train_path
                    .as_ref()
                    .ok_or_else(|| invalid("task `file` needs data.train_path"))?;
                let all = Dataset::load_csv(path, Split::Train)?;
                match &d.test_path {
                    Some(t) => Ok((all, Dataset::load_csv(t, Split::Test)?)),
                    None => all.train_test_split(d.train_fraction, d.seed),
                }
            }
        }
    }
}

/// Trainable-parameter count for the configured model.
pub fn parameter_count(cfg: &ExperimentConfig, input_dim: usize) -> usize {
    count_params(cfg.model, &cfg.dims(input_dim))
}

pub fn run_training(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<FitResult> {
    cfg.validate()?;
    fit(
        &cfg.model_spec(train.dim()),
        train,
        Some(test),
        &cfg.effective_training(),
    )
}

fn summary_json(
    cfg: &ExperimentConfig,
    result: &FitResult,
    param_count: usize,
) -> serde_json::Value {
    json!({
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": cfg.hash(),
        "seeds": cfg.training.seeds,
        "model": cfg.model,
        "trainable_parameters": param_count,
        "epochs": result.summary,
        "failures": result.failures(),
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    f(&mut file)?;
    file.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_with(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        writeln!(f)?;
        Ok(())
    })
}

/// metrics.csv, summary.json and one checkpoint per seed under `dir`.
pub fn write_training_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &FitResult,
    input_dim: usize,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = cfg.header_lines();
    write_with(&dir.join("metrics.csv"), |f| {
        write_metrics_csv(&result.records(), &header, f)
    })?;
    write_json(
        &dir.join("summary.json"),
        &summary_json(cfg, result, parameter_count(cfg, input_dim)),
    )?;
    for mut ck in result.checkpoints()? {
        ck.provenance = Some(cfg.provenance());
        write_json(
            &dir.join("checkpoints")
                .join(format!("seed-{}.json", ck.seed)),
            &ck,
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Qubits,
    Depth,
    /// Sets both damping rates to the swept value.
    Noise,
    Hidden,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Qubits => "qubits",
            SweepAxis::Depth => "depth",
            SweepAxis::Noise => "noise",
            SweepAxis::Hidden => "hidden",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qubits" => Ok(SweepAxis::Qubits),
            "depth" => Ok(SweepAxis::Depth),
            "noise" => Ok(SweepAxis::Noise),
            "hidden" => Ok(SweepAxis::Hidden),
            _ => Err(invalid(format!("unknown sweep axis `{s}`"))),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(invalid(format!(
                    "{self} values must be non-negative integers, got {value}"
                )))
            }
        };
        match self {
            SweepAxis::Qubits => c.qubits = count()?,
            SweepAxis::Depth => c.depth = count()?,
            SweepAxis::Hidden => c.hidden = count()?,
            SweepAxis::Noise => c.noise = NoiseSpec::new(value, value)?,
        }
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub config: ExperimentConfig,
    pub result: FitResult,
}

impl SweepPoint {
    /// Aggregates of the last recorded epoch for a split.
    pub fn final_row(&self, split: Split) -> Option<&SummaryRow> {
        self.result
            .summary
            .iter()
            .filter(|r| r.split == split)
            .max_by_key(|r| r.epoch)
    }
}

/// One full multi-seed training run per value, on shared data.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    let (train, test) = cfg.load_data()?;
    values
        .par_iter()
        .map(|&value| {
            let config = axis.apply(cfg, value)?;
            let result = run_training(&config, &train, &test)?;
            Ok(SweepPoint {
                value,
                config,
                result,
            })
        })
        .collect()
}

pub fn write_sweep_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    points: &[SweepPoint],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut header = cfg.header_lines();
    header.push(format!("sweep axis {axis}"));
    write_with(&dir.join("sweep.csv"), |f| {
        for line in &header {
            writeln!(f, "# {line}")?;
        }
        writeln!(f, "{axis},epoch,split,seed,loss,accuracy,wall_time_ms")?;
        for p in points {
            for r in p.result.records() {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{}",
                    p.value, r.epoch, r.split, r.seed, r.loss, r.accuracy, r.wall_time_ms
                )?;
            }
        }
        Ok(())
    })?;
    let rows: Vec<serde_json::Value> = points
        .iter()
        .map(|p| {
            json!({
                "value": p.value,
                "final_test": p.final_row(Split::Test),
                "final_train": p.final_row(Split::Train),
                "failures": p.result.failures(),
            })
        })
        .collect();
    write_json(
        &dir.join("sweep_summary.json"),
        &json!({
            "artifact_version": ARTIFACT_VERSION,
            "config_hash": cfg.hash(),
            "seeds": cfg.training.seeds,
            "axis": axis,
            "points": rows,
        }),
    )
}

/// Checks that a per-value statistic moves in one direction, allowing ties
/// within one seed standard deviation. `increasing = false` asks for
/// non-increasing means.
pub fn monotone_within_std(means: &[f64], stds: &[f64], increasing: bool) -> bool {
    means.windows(2).zip(stds.windows(2)).all(|(m, s)| {
        let tol = s[0].max(s[1]);
        if increasing {
            m[1] >= m[0] - tol
        } else {
            m[1] <= m[0] + tol
        }
    })
}

/// Writes ntk.json and eigenvalues.csv.
pub fn write_ntk_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &NtkReport,
    include_matrices: bool,
    extra: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut body = report.to_json(include_matrices);
    body["artifact_version"] = json!(ARTIFACT_VERSION);
    body["config_hash"] = json!(cfg.hash());
    body["seeds"] = json!(cfg.training.seeds);
    if let Some(extra) = extra {
        body["comparison"] = extra;
    }
    write_json(&dir.join("ntk.json"), &body)?;
    write_with(&dir.join("eigenvalues.csv"), |f| {
        for line in cfg.header_lines() {
            writeln!(f, "# {line}")?;
        }
        writeln!(f, "group,index,eigenvalue")?;
        for g in KernelGroup::ALL {
            for (i, ev) in report.eigenvalues(g).iter().enumerate() {
                writeln!(f, "{g},{i},{ev}")?;
            }
        }
        Ok(())
    })
}

/// Mean and std of the final-epoch metric across points, for reporting.
pub fn final_stats(points: &[SweepPoint], split: Split, accuracy: bool) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|p| {
            p.final_row(split).map_or((f64::NAN, f64::NAN), |r| {
                if accuracy {
                    (r.accuracy_mean, r.accuracy_std)
                } else {
                    (r.loss_mean, r.loss_std)
                }
            })
        })
        .collect()
}

/// Builds the checkpoint's model and evaluates it on a dataset.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<(f64, f64)> {
    let model = ck.restore()?;
    let exec = cfg.effective_training().executor.with_seed(ck.seed);
    let prep = model.classifier().prepare(&exec, 0)?;
    crate::train::evaluate(model.classifier(), &prep, data, &exec, 1)
}
