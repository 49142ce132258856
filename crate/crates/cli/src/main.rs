use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use qmlp_core::backend::Measurement;
use qmlp_core::bounds::{
    approximation_bound, depth_for_tolerance, fit_depth, optimization_bound,
    uniform_deviation_bound, BoundConstants,
};
use qmlp_core::data::{self, Split, Task};
use qmlp_core::experiment::{
    evaluate_checkpoint, parameter_count, run_sweep, run_training, write_json, write_ntk_artifacts,
    write_sweep_artifacts, write_training_artifacts, DataSource, ExperimentConfig, SweepAxis,
};
use qmlp_core::model::{Checkpoint, Model, ModelKind};
use qmlp_core::noise::{NoiseMethod, NoiseSpec};
use qmlp_core::ntk::NtkReport;
use qmlp_core::simulator::{Entangler, RotationOrder};
use qmlp_core::train::Optimizer;

/// Hybrid quantum-classical MLP experiments on simulated circuits.
///
/// Settings are resolved in three layers: built-in desk defaults, then the
/// JSON file given with --config, then command-line flags.
#[derive(Parser)]
#[command(name = "qmlp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train a model over every seed and write metrics, summary and checkpoints.
    Train(TrainArgs),
    /// Train once per value of a swept setting and write a combined CSV.
    Sweep(SweepArgs),
    /// Compute empirical tangent kernels on a batch of training inputs.
    Ntk(NtkArgs),
    /// Evaluate the closed-form error bounds.
    Bounds(BoundsArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Dots,
    Dna,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    VqcMlpnet,
    Vqc,
    Mlp,
    VqcMlpnetV2,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::VqcMlpnet => ModelKind::VqcMlpNet,
            ModelArg::Vqc => ModelKind::Vqc,
            ModelArg::Mlp => ModelKind::Mlp,
            ModelArg::VqcMlpnetV2 => ModelKind::VqcMlpNetV2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EntanglerArg {
    Ring,
    Chain,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    XFirst,
    ZFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Density,
    Trajectory,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Data source
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Training CSV for --task file
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Test CSV for --task file (default: split the training file)
    #[arg(long, value_name = "PATH")]
    test_data: Option<PathBuf>,
    /// Number of generated samples
    #[arg(long, value_name = "SAMPLES")]
    count: Option<usize>,
    /// Diagram side length in pixels
    #[arg(long, value_name = "PIXELS")]
    resolution: Option<usize>,
    /// Pixel noise standard deviation for generated diagrams
    #[arg(long, value_name = "STD")]
    pixel_noise: Option<f64>,
    /// Seed for data generation and the train/test split
    #[arg(long, value_name = "SEED")]
    data_seed: Option<u64>,
    /// Fraction of samples used for training, in (0, 1)
    #[arg(long, value_name = "FRACTION")]
    train_fraction: Option<f64>,
    /// Model architecture
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Circuit width U in qubits
    #[arg(long, value_name = "QUBITS")]
    qubits: Option<usize>,
    /// Circuit depth L in layers
    #[arg(long, value_name = "LAYERS")]
    depth: Option<usize>,
    /// Hidden width M in units
    #[arg(long, value_name = "UNITS")]
    hidden: Option<usize>,
    /// Number of classes J
    #[arg(long, value_name = "CLASSES")]
    classes: Option<usize>,
    /// Second-circuit width in qubits (vqc-mlpnet-v2)
    #[arg(long, value_name = "QUBITS")]
    qubits2: Option<usize>,
    /// Second-circuit depth in layers (vqc-mlpnet-v2)
    #[arg(long, value_name = "LAYERS")]
    depth2: Option<usize>,
    /// CNOT pattern after each rotation layer
    #[arg(long, value_enum)]
    entangler: Option<EntanglerArg>,
    /// Order of the per-qubit rotations
    #[arg(long, value_enum)]
    rotation_order: Option<OrderArg>,
    /// Also train the seed matrix W1 that feeds the circuit
    #[arg(long)]
    train_w1: bool,
    /// Keep circuit angles fixed at initialisation
    #[arg(long)]
    freeze_circuit: bool,
    /// Amplitude-damping rate per qubit per layer, in [0, 1]
    #[arg(long, value_name = "RATE")]
    adr: Option<f64>,
    /// Phase-damping rate per qubit per layer, in [0, 1]
    #[arg(long, value_name = "RATE")]
    pdr: Option<f64>,
    /// Estimate expectations from this many measurement shots (default 4096 when given without a value)
    #[arg(long, value_name = "SHOTS", num_args = 0..=1, default_missing_value = "4096")]
    shots: Option<usize>,
    /// Noisy-simulation backend
    #[arg(long, value_enum)]
    noise_method: Option<MethodArg>,
    /// Monte-Carlo trajectories per noisy evaluation
    #[arg(long, value_name = "TRAJECTORIES")]
    trajectories: Option<usize>,
    /// Training seeds, comma separated
    #[arg(long, value_name = "SEEDS", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Learning rate per step
    #[arg(long, value_name = "RATE")]
    lr: Option<f64>,
    /// Number of passes over the training set
    #[arg(long, value_name = "EPOCHS")]
    epochs: Option<usize>,
    /// Samples per step; 0 means full batch
    #[arg(long, value_name = "SAMPLES")]
    batch_size: Option<usize>,
    /// Update rule
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Record 0 instead of elapsed milliseconds so reruns are byte-identical
    #[arg(long)]
    no_wall_time: bool,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = self.task {
            c.task = match t {
                TaskArg::Dots => DataSource::Dots,
                TaskArg::Dna => DataSource::Dna,
                TaskArg::File => DataSource::File,
            };
        }
        if let Some(p) = &self.data {
            c.data.train_path = Some(p.clone());
            if self.task.is_none() {
                c.task = DataSource::File;
            }
        }
        if let Some(p) = &self.test_data {
            c.data.test_path = Some(p.clone());
        }
        set(&mut c.data.count, self.count);
        set(&mut c.data.resolution, self.resolution);
        set(&mut c.data.noise, self.pixel_noise);
        set(&mut c.data.seed, self.data_seed);
        set(&mut c.data.train_fraction, self.train_fraction);
        if let Some(m) = self.model {
            c.model = m.into();
        }
        set(&mut c.qubits, self.qubits);
        set(&mut c.depth, self.depth);
        set(&mut c.hidden, self.hidden);
        set(&mut c.classes, self.classes);
        if self.qubits2.is_some() {
            c.qubits2 = self.qubits2;
        }
        if self.depth2.is_some() {
            c.depth2 = self.depth2;
        }
        if let Some(e) = self.entangler {
            c.entangler = match e {
                EntanglerArg::Ring => Entangler::Ring,
                EntanglerArg::Chain => Entangler::Chain,
                EntanglerArg::None => Entangler::None,
            };
        }
        if let Some(o) = self.rotation_order {
            c.rotation_order = match o {
                OrderArg::XFirst => RotationOrder::XFirst,
                OrderArg::ZFirst => RotationOrder::ZFirst,
            };
        }
        c.train_w1 |= self.train_w1;
        c.freeze_circuit |= self.freeze_circuit;
        if self.adr.is_some() || self.pdr.is_some() {
            c.noise = NoiseSpec::new(
                self.adr.unwrap_or(c.noise.adr),
                self.pdr.unwrap_or(c.noise.pdr),
            )?;
        }
        if self.shots.is_some() {
            c.shots = self.shots;
        }
        if let Some(m) = self.noise_method {
            c.training.executor.method = match m {
                MethodArg::Auto => NoiseMethod::Auto,
                MethodArg::Density => NoiseMethod::Density,
                MethodArg::Trajectory => NoiseMethod::Trajectory,
            };
        }
        set(&mut c.training.executor.trajectories, self.trajectories);
        if let Some(s) = &self.seeds {
            c.training.seeds = s.clone();
        }
        set(&mut c.training.learning_rate, self.lr);
        set(&mut c.training.epochs, self.epochs);
        set(&mut c.training.batch_size, self.batch_size);
        if let Some(o) = self.optimizer {
            c.training.optimizer = match o {
                OptimizerArg::Adam => Optimizer::default(),
                OptimizerArg::Sgd => Optimizer::Sgd,
            };
        }
        if self.no_wall_time {
            c.training.wall_time = false;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct GenDataArgs {
    /// Which synthetic task to generate
    #[arg(long, value_enum, default_value = "dots")]
    task: TaskArg,
    /// Number of samples
    #[arg(long, value_name = "SAMPLES", default_value_t = 400)]
    count: usize,
    /// Diagram side length in pixels
    #[arg(long, value_name = "PIXELS", default_value_t = data::DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Pixel noise standard deviation for diagrams
    #[arg(long, value_name = "STD", default_value_t = 0.0)]
    noise: f64,
    /// Generator seed
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV file
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Resolve the config and report its size without training
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Setting to sweep; noise sets both damping rates
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Values to sweep, comma separated (qubits, layers, units or rates)
    #[arg(long, value_name = "VALUES", value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Qubits,
    Depth,
    Noise,
    Hidden,
}

#[derive(Args)]
struct NtkArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Checkpoint to analyse (default: a fresh model initialised from the first seed)
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Number of training inputs in the kernel batch
    #[arg(long = "batch", value_name = "SAMPLES", default_value_t = 16)]
    batch: usize,
    /// Store full kernel matrices in ntk.json
    #[arg(long)]
    matrices: bool,
    /// Also initialise the two-circuit variant with the same dimensions and report both
    #[arg(long)]
    compare_v2: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Checkpoint to evaluate
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Which split to score
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Clone)]
struct ConstantArgs {
    /// Width coefficient C1 (dimensionless, ≥ 0)
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Depth coefficient C2 (dimensionless, ≥ 0)
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Qubit coefficient C3 (dimensionless, ≥ 0)
    #[arg(long, default_value_t = 1.0)]
    c3: f64,
    /// Depth decay rate α per layer (> 0)
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Qubit decay exponent β per qubit, in (0, 0.5]
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Norm bound Λ on the output layer (> 0)
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Norm bound Λ_Q on the circuit parameters (> 0)
    #[arg(long, default_value_t = 1.0)]
    lambda_q: f64,
    /// Input norm bound r (> 0)
    #[arg(long, default_value_t = 1.0)]
    r: f64,
}

impl ConstantArgs {
    fn constants(&self) -> BoundConstants {
        BoundConstants {
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            lambda_q: self.lambda_q,
            r: self.r,
            ..BoundConstants::default()
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[command(subcommand)]
    bound: BoundCommand,
}

#[derive(Subcommand)]
enum BoundCommand {
    /// Approximation error C1/√M + C2·e^(−αL) + C3/2^(βU).
    Approx {
        #[command(flatten)]
        constants: ConstantArgs,
        /// Hidden width M in units
        #[arg(long, value_name = "UNITS")]
        hidden: usize,
        /// Circuit depth L in layers
        #[arg(long, value_name = "LAYERS")]
        depth: usize,
        /// Circuit width U in qubits
        #[arg(long, value_name = "QUBITS")]
        qubits: usize,
    },
    /// Smallest depth L with C2·e^(−αL) ≤ τ.
    Depth {
        /// Depth coefficient C2 (> 0)
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        /// Depth decay rate α per layer (> 0)
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Target depth error τ (> 0)
        #[arg(long, value_name = "ERROR")]
        tau: f64,
    },
    /// Uniform deviation 2·Λ·Λ_Q·r/√|S| (or 2·Λ·√L·r/√|S| with --refined).
    Deviation {
        #[command(flatten)]
        constants: ConstantArgs,
        /// Circuit depth L in layers (used by --refined)
        #[arg(long, value_name = "LAYERS", default_value_t = 1)]
        depth: usize,
        /// Training-set size |S| in samples
        #[arg(long, value_name = "SAMPLES")]
        samples: usize,
        /// Use the depth-dependent complexity term
        #[arg(long)]
        refined: bool,
    },
    /// Optimisation error C0·e^(−λ_min·t).
    Optimization {
        /// Initial risk gap C0 (> 0)
        #[arg(long)]
        c0: f64,
        /// Smallest kernel eigenvalue λ_min (≥ 0)
        #[arg(long, value_name = "EIGENVALUE")]
        lambda_min: f64,
        /// Gradient-flow time t (learning rate × steps, ≥ 0)
        #[arg(long, value_name = "TIME")]
        t: f64,
    },
    /// Fit C2 and α to measured (depth, loss) pairs.
    FitDepth {
        /// CSV with `depth,loss` columns, or a sweep.csv from a depth sweep
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Ok(w) = std::env::var("QMLP_WORKERS") {
        let n: usize = w
            .parse()
            .with_context(|| format!("QMLP_WORKERS must be a positive integer, got `{w}`"))?;
        if n == 0 {
            bail!("QMLP_WORKERS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Ntk(a) => ntk(a),
        Command::Bounds(a) => bounds(a),
        Command::Eval(a) => eval(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Dots => Task::Dots,
        TaskArg::Dna => Task::Dna,
        TaskArg::File => bail!("gen-data only generates dots or dna"),
    };
    let set = data::generate(task, a.count, a.resolution, a.noise, a.seed)?;
    if let Some(dir) = a.out.parent() {
        fs::create_dir_all(dir)?;
    }
    set.save_csv(&a.out)?;
    info!(
        "wrote {} samples of dimension {} to {}",
        set.len(),
        set.dim(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    let (train, test) = cfg.load_data()?;
    cfg.model_spec(train.dim()).validate()?;
    info!(
        "trainable parameters: {}",
        parameter_count(&cfg, train.dim())
    );
    if a.dry_run {
        return Ok(());
    }
    info!(
        "training {} on {} samples ({} test), seeds {:?}",
        cfg.model,
        train.len(),
        test.len(),
        cfg.training.seeds
    );
    let result = run_training(&cfg, &train, &test)?;
    for f in result.failures() {
        warn!("seed {} stopped at epoch {}: {}", f.seed, f.epoch, f.reason);
    }
    if let Some(last) = result
        .summary
        .iter()
        .filter(|r| r.split == Split::Test)
        .max_by_key(|r| r.epoch)
    {
        info!(
            "epoch {}: test loss {:.4} ± {:.4}, accuracy {:.4} ± {:.4}",
            last.epoch, last.loss_mean, last.loss_std, last.accuracy_mean, last.accuracy_std
        );
    }
    write_training_artifacts(&cfg.output_dir, &cfg, &result, train.dim())?;
    info!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    let axis = match a.axis {
        AxisArg::Qubits => SweepAxis::Qubits,
        AxisArg::Depth => SweepAxis::Depth,
        AxisArg::Noise => SweepAxis::Noise,
        AxisArg::Hidden => SweepAxis::Hidden,
    };
    let points = run_sweep(&cfg, axis, &a.values)?;
    for p in &points {
        if let Some(r) = p.final_row(Split::Test) {
            info!(
                "{axis} = {}: test loss {:.4} ± {:.4}, accuracy {:.4} ± {:.4}",
                p.value, r.loss_mean, r.loss_std, r.accuracy_mean, r.accuracy_std
            );
        }
    }
    write_sweep_artifacts(&cfg.output_dir, &cfg, axis, &points)?;
    info!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn ntk(a: NtkArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    if a.batch == 0 {
        bail!("--batch must be at least 1");
    }
    let (train, _) = cfg.load_data()?;
    let n = a.batch.min(train.len());
    let inputs: Vec<&[f64]> = (0..n).map(|i| train.row(i)).collect();
    let seed = cfg.training.seeds[0];
    let (model, spec) = match &a.checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p)
                .with_context(|| format!("loading checkpoint {}", p.display()))?;
            (ck.restore()?, ck.model.clone())
        }
        None => {
            let spec = cfg.model_spec(train.dim());
            (spec.build(seed)?, spec)
        }
    };
    let exec = cfg.effective_training().executor.with_seed(seed);
    let report = NtkReport::compute(model.classifier(), &inputs, &exec)?;
    let dominance = report.dominance();
    info!(
        "λ_min(K_vm) = {:.6e}, λ_min(K_vqc) = {:.6e}, dominance {}",
        report.lambda_min_vm,
        report.lambda_min_vqc,
        if dominance.passes { "holds" } else { "fails" }
    );
    let comparison = if a.compare_v2 {
        let mut v1 = spec.clone();
        v1.kind = ModelKind::VqcMlpNet;
        let mut v2 = spec.clone();
        v2.kind = ModelKind::VqcMlpNetV2;
        let lam = |m: &Model| -> Result<serde_json::Value> {
            let r = NtkReport::compute(m.classifier(), &inputs, &exec)?;
            Ok(json!({ "lambda_min_vm": r.lambda_min_vm, "lambda_min_vqc": r.lambda_min_vqc }))
        };
        let first = if spec.kind == ModelKind::VqcMlpNet {
            model.clone()
        } else {
            v1.build(seed)?
        };
        let second = if spec.kind == ModelKind::VqcMlpNetV2 {
            model.clone()
        } else {
            v2.build(seed)?
        };
        Some(json!({ "vqc-mlpnet": lam(&first)?, "vqc-mlpnet-v2": lam(&second)? }))
    } else {
        None
    };
    write_ntk_artifacts(&cfg.output_dir, &cfg, &report, a.matrices, comparison)?;
    info!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    let ck = Checkpoint::load(&a.checkpoint)
        .with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let (train, test) = cfg.load_data()?;
    let set = match a.split {
        SplitArg::Train => train,
        SplitArg::Test => test,
    };
    let (loss, accuracy) = evaluate_checkpoint(&ck, &set, &cfg)?;
    let report = json!({
        "checkpoint": a.checkpoint,
        "split": set.split,
        "samples": set.len(),
        "loss": loss,
        "accuracy": accuracy,
        "config_hash": cfg.hash(),
        "seeds": cfg.training.seeds,
        "artifact_version": qmlp_core::experiment::ARTIFACT_VERSION,
        "measurement": match cfg.shots {
            Some(s) => Measurement::Shots { shots: s },
            None => Measurement::Exact,
        },
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if a.exp.out.is_some() {
        write_json(&cfg.output_dir.join("eval.json"), &report)?;
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let out = match a.bound {
        BoundCommand::Approx {
            constants,
            hidden,
            depth,
            qubits,
        } => {
            let c = constants.constants();
            json!({ "bound": "approximation", "constants": c, "hidden": hidden, "depth": depth, "qubits": qubits,
                    "value": approximation_bound(&c, hidden, depth, qubits)? })
        }
        BoundCommand::Depth { c2, alpha, tau } => {
            json!({ "bound": "depth", "c2": c2, "alpha": alpha, "tau": tau, "depth": depth_for_tolerance(c2, alpha, tau)? })
        }
        BoundCommand::Deviation {
            constants,
            depth,
            samples,
            refined,
        } => {
            let c = constants.constants();
            json!({ "bound": "deviation", "constants": c, "depth": depth, "samples": samples, "refined": refined,
                    "value": uniform_deviation_bound(&c, depth, samples, refined)? })
        }
        BoundCommand::Optimization { c0, lambda_min, t } => {
            json!({ "bound": "optimization", "c0": c0, "lambda_min": lambda_min, "t": t,
                    "value": optimization_bound(c0, lambda_min, t)? })
        }
        BoundCommand::FitDepth { input } => {
            let points = read_depth_points(&input)?;
            let fit = fit_depth(&points)?;
            json!({ "bound": "fit-depth", "input": input, "fit": fit })
        }
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// Reads `depth,loss` rows, or averages test loss at the last epoch of a
/// depth sweep CSV.
fn read_depth_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let rows: Vec<_> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64> {
        r.get(i)
            .context("short row")?
            .trim()
            .parse::<f64>()
            .with_context(|| format!("bad number in {}", path.display()))
    };
    if let (Some(d), Some(l)) = (col("depth"), col("loss")) {
        if let (Some(e), Some(s)) = (col("epoch"), col("split")) {
            let last = rows
                .iter()
                .map(|r| num(r, e))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let mut acc: Vec<(f64, f64, usize)> = Vec::new();
            for r in &rows {
                if r.get(s) != Some("test") || num(r, e)? != last {
                    continue;
                }
                let (depth, loss) = (num(r, d)?, num(r, l)?);
                match acc.iter_mut().find(|a| a.0 == depth) {
                    Some(a) => {
                        a.1 += loss;
                        a.2 += 1;
                    }
                    None => acc.push((depth, loss, 1)),
                }
            }
            return Ok(acc.into_iter().map(|(d, l, n)| (d, l / n as f64)).collect());
        }
        return rows.iter().map(|r| Ok((num(r, d)?, num(r, l)?))).collect();
    }
    bail!("{} needs `depth` and `loss` columns", path.display())
}
