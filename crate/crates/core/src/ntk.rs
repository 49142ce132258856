//! Empirical neural tangent kernels, their decomposition into circuit-angle
//! and output-layer parts, and gradient-flow diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::backend::{mix_seed, Executor, Measurement};
use crate::error::{dims, invalid, Error, Result};
use crate::model::{Classifier, KernelRole, ModelSpec};
use crate::noise::NoiseMethod;
use crate::simulator::AngleGroup;

/// Largest tolerated asymmetry, relative to max(1, ‖A‖_max).
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelGroup {
    /// Angles and output layer together (K_vm).
    All,
    Vqc,
    W2,
    Alpha,
    Beta,
    Gamma,
}

impl KernelGroup {
    pub const ALL: [KernelGroup; 6] = [
        KernelGroup::All,
        KernelGroup::Vqc,
        KernelGroup::W2,
        KernelGroup::Alpha,
        KernelGroup::Beta,
        KernelGroup::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelGroup::All => "all",
            KernelGroup::Vqc => "vqc",
            KernelGroup::W2 => "w2",
            KernelGroup::Alpha => "alpha",
            KernelGroup::Beta => "beta",
            KernelGroup::Gamma => "gamma",
        }
    }

    fn includes(self, role: KernelRole, flat_index: usize) -> bool {
        match (self, role) {
            (_, KernelRole::Excluded) => false,
            (KernelGroup::All, _) => true,
            (KernelGroup::Vqc, r) => r == KernelRole::Angles,
            (KernelGroup::W2, r) => r == KernelRole::Output,
            (g, KernelRole::Angles) => {
                let want = match g {
                    KernelGroup::Alpha => AngleGroup::Alpha,
                    KernelGroup::Beta => AngleGroup::Beta,
                    _ => AngleGroup::Gamma,
                };
                AngleGroup::of_index(flat_index) == want
            }
            _ => false,
        }
    }
}

impl fmt::Display for KernelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| invalid(format!("unknown kernel group `{s}`")))
    }
}

/// Per-input, per-logit gradients over every trainable parameter, tagged
/// with their kernel role.
#[derive(Clone, Debug)]
pub struct Jacobian {
    /// `rows[j]` is the N × P matrix of ∂logit_j/∂θ over all trainable entries.
    rows: Vec<DMatrix<f64>>,
    roles: Vec<(KernelRole, usize)>,
}

impl Jacobian {
    /// Gradients of every logit for every input, via the model's reverse pass.
    pub fn compute(model: &dyn Classifier, inputs: &[&[f64]], exec: &Executor) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid("kernel needs at least one input"));
        }
        let sampled = exec.measurement != Measurement::Exact
            || (!exec.noise.is_noiseless() && exec.method == NoiseMethod::Trajectory);
        if sampled {
            return Err(Error::Unsupported(
                "tangent kernels need exact readout".into(),
            ));
        }
        let prep = model.prepare(exec, 0)?;
        let classes = model.num_classes();
        let mut roles = Vec::new();
        for (name, values) in model.parameters() {
            let role = model.kernel_role(name);
            roles.extend((0..values.len()).map(|i| (role, i)));
        }
        let per_input: Vec<Vec<Vec<f64>>> = inputs
            .par_iter()
            .enumerate()
            .map(|(n, x)| {
                (0..classes)
                    .map(|j| {
                        let mut e = DVector::zeros(classes);
                        e[j] = 1.0;
                        let g = model.backward(
                            &prep,
                            &[x],
                            &[e],
                            exec,
                            mix_seed(n as u64, j as u64),
                        )?;
                        Ok(g.flatten())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let p = roles.len();
        let rows = (0..classes)
            .map(|j| DMatrix::from_fn(inputs.len(), p, |n, k| per_input[n][j][k]))
            .collect();
        Ok(Self { rows, roles })
    }

    /// Full Jacobian of logit `j` (N × all trainable parameters).
    pub fn logit(&self, j: usize) -> &DMatrix<f64> {
        &self.rows[j]
    }

    /// Σ_j J_j,g J_j,gᵀ over the entries in `group`.
    pub fn kernel(&self, group: KernelGroup) -> DMatrix<f64> {
        let cols: Vec<usize> = self
            .roles
            .iter()
            .enumerate()
            .filter(|(_, (role, i))| group.includes(*role, *i))
            .map(|(k, _)| k)
            .collect();
        let n = self.rows[0].nrows();
        let mut k = DMatrix::zeros(n, n);
        for jac in &self.rows {
            let sub = jac.select_columns(&cols);
            k += &sub * sub.transpose();
        }
        // exact symmetry of the Gram product
        (&k + k.transpose()) * 0.5
    }

    /// Group-restricted logit Jacobians stacked vertically (N·J × P).
    pub fn stacked(&self, group: KernelGroup) -> DMatrix<f64> {
        let cols: Vec<usize> = self
            .roles
            .iter()
            .enumerate()
            .filter(|(_, (role, i))| group.includes(*role, *i))
            .map(|(k, _)| k)
            .collect();
        let subs: Vec<DMatrix<f64>> = self.rows.iter().map(|j| j.select_columns(&cols)).collect();
        let n = self.rows[0].nrows();
        let total = n * subs.len();
        DMatrix::from_fn(total, cols.len(), |r, c| subs[r / n][(r % n, c)])
    }
}

/// Gram matrix of the group-restricted gradients of the model output.
pub fn empirical_ntk(
    model: &dyn Classifier,
    inputs: &[&[f64]],
    group: KernelGroup,
    exec: &Executor,
) -> Result<DMatrix<f64>> {
    Ok(Jacobian::compute(model, inputs, exec)?.kernel(group))
}

/// Largest |A − Aᵀ| entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(dims(format!(
            "expected a non-empty square matrix, got {:?}",
            m.shape()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(invalid(format!(
            "matrix is not symmetric (max |A − Aᵀ| = {asym:.3e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().min())
}

/// SHA-256 over the little-endian bytes of the inputs, row by row.
pub fn batch_fingerprint(inputs: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for x in inputs {
        h.update((x.len() as u64).to_le_bytes());
        for v in *x {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NtkReport {
    pub k_vm: DMatrix<f64>,
    pub k_vqc: DMatrix<f64>,
    pub k_w2: DMatrix<f64>,
    pub k_alpha: DMatrix<f64>,
    pub k_beta: DMatrix<f64>,
    pub k_gamma: DMatrix<f64>,
    pub lambda_min_vm: f64,
    pub lambda_min_vqc: f64,
    pub batch_fingerprint: String,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl NtkReport {
    pub fn compute(model: &dyn Classifier, inputs: &[&[f64]], exec: &Executor) -> Result<Self> {
        let jac = Jacobian::compute(model, inputs, exec)?;
        let k_vm = jac.kernel(KernelGroup::All);
        let k_vqc = jac.kernel(KernelGroup::Vqc);
        Ok(Self {
            lambda_min_vm: lambda_min(&k_vm)?,
            lambda_min_vqc: lambda_min(&k_vqc)?,
            k_w2: jac.kernel(KernelGroup::W2),
            k_alpha: jac.kernel(KernelGroup::Alpha),
            k_beta: jac.kernel(KernelGroup::Beta),
            k_gamma: jac.kernel(KernelGroup::Gamma),
            k_vm,
            k_vqc,
            batch_fingerprint: batch_fingerprint(inputs),
        })
    }

    pub fn kernel(&self, group: KernelGroup) -> &DMatrix<f64> {
        match group {
            KernelGroup::All => &self.k_vm,
            KernelGroup::Vqc => &self.k_vqc,
            KernelGroup::W2 => &self.k_w2,
            KernelGroup::Alpha => &self.k_alpha,
            KernelGroup::Beta => &self.k_beta,
            KernelGroup::Gamma => &self.k_gamma,
        }
    }

    /// max |K_vm − (K_vqc + K_w2)|.
    pub fn output_split_error(&self) -> f64 {
        (&self.k_vm - (&self.k_vqc + &self.k_w2)).amax()
    }

    /// max |K_vqc − (K_α + K_β + K_γ)|.
    pub fn angle_split_error(&self) -> f64 {
        (&self.k_vqc - (&self.k_alpha + &self.k_beta + &self.k_gamma)).amax()
    }

    pub fn dominance(&self) -> DominanceReport {
        DominanceReport::new(self.lambda_min_vm, self.lambda_min_vqc)
    }

    /// Smallest eigenvalue of every kernel, in [`KernelGroup::ALL`] order.
    pub fn eigen_summary(&self) -> Result<Vec<(KernelGroup, f64)>> {
        KernelGroup::ALL
            .into_iter()
            .map(|g| Ok((g, lambda_min(self.kernel(g))?)))
            .collect()
    }

    /// Full spectrum of a kernel in ascending order.
    pub fn eigenvalues(&self, group: KernelGroup) -> Vec<f64> {
        let k = self.kernel(group);
        let mut ev: Vec<f64> = ((k + k.transpose()) * 0.5)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn to_json(&self, include_matrices: bool) -> serde_json::Value {
        let dom = self.dominance();
        let mut v = json!({
            "samples": self.k_vm.nrows(),
            "lambda_min_vm": self.lambda_min_vm,
            "lambda_min_vqc": self.lambda_min_vqc,
            "dominance_ratio": dom.ratio,
            "dominance_passes": dom.passes,
            "output_split_error": self.output_split_error(),
            "angle_split_error": self.angle_split_error(),
            "batch_fingerprint": self.batch_fingerprint,
        });
        if include_matrices {
            let mats: serde_json::Map<String, serde_json::Value> = KernelGroup::ALL
                .into_iter()
                .map(|g| (g.name().to_string(), json!(rows_of(self.kernel(g)))))
                .collect();
            v["kernels"] = serde_json::Value::Object(mats);
        }
        v
    }
}

/// Floor under λ_min(K_vqc) when forming the dominance ratio.
pub const RATIO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub lambda_min_vm: f64,
    pub lambda_min_vqc: f64,
    pub ratio: f64,
    pub passes: bool,
}

impl DominanceReport {
    pub fn new(lambda_min_vm: f64, lambda_min_vqc: f64) -> Self {
        Self {
            lambda_min_vm,
            lambda_min_vqc,
            ratio: lambda_min_vm / lambda_min_vqc.max(RATIO_FLOOR),
            passes: lambda_min_vm >= lambda_min_vqc - 1e-10,
        }
    }
}

pub fn eigenvalue_dominance_check(
    model: &dyn Classifier,
    inputs: &[&[f64]],
    exec: &Executor,
) -> Result<DominanceReport> {
    Ok(NtkReport::compute(model, inputs, exec)?.dominance())
}

/// Monte-Carlo mean and standard error of each kernel over initialisations.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelEstimate {
    pub group: KernelGroup,
    pub mean: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    /// Entry-averaged sample variance across draws.
    pub mean_variance: f64,
}

pub fn infinite_width_estimate(
    spec: &ModelSpec,
    inputs: &[&[f64]],
    draws: usize,
    seed: u64,
    exec: &Executor,
) -> Result<Vec<KernelEstimate>> {
    if draws == 0 {
        return Err(invalid("need at least one draw"));
    }
    let reports = (0..draws)
        .map(|r| {
            let model = spec.build(mix_seed(seed, r as u64))?;
            NtkReport::compute(model.classifier(), inputs, exec)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = inputs.len();
    Ok(KernelGroup::ALL
        .into_iter()
        .map(|g| {
            let mut mean = DMatrix::zeros(n, n);
            for r in &reports {
                mean += r.kernel(g);
            }
            mean /= draws as f64;
            let mut var = DMatrix::zeros(n, n);
            if draws > 1 {
                for r in &reports {
                    var += (r.kernel(g) - &mean).map(|d| d * d);
                }
                var /= (draws - 1) as f64;
            }
            let std_error = var.map(|v| (v / draws as f64).sqrt());
            KernelEstimate {
                group: g,
                mean_variance: var.mean(),
                mean,
                std_error,
            }
        })
        .collect())
}

/// Outcome of comparing a training trace against C0·e^{−λ t}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// R̂(t) − R̂(final) never increases (within 1e-12).
    pub monotone: bool,
    /// Indices i where excess(i) > excess(i − 1).
    pub monotonicity_violations: Vec<usize>,
    /// −slope of a least-squares fit of ln(R̂(t) − floor) against t.
    pub fitted_rate: f64,
    pub lambda_min: f64,
    pub c0: f64,
    pub floor: f64,
    /// Indices where R̂(t) − floor > C0·e^{−λ t}.
    pub bound_violations: Vec<usize>,
}

/// Checks a risk trace R̂(t_i) against the exponential bound. `floor` is the
/// reference risk R̂(θ*) (0 when unknown).
pub fn convergence_bound_check(
    times: &[f64],
    risks: &[f64],
    lambda_min: f64,
    c0: f64,
    floor: f64,
) -> Result<ConvergenceReport> {
    if risks.len() < 3 {
        return Err(invalid(format!(
            "trace needs at least 3 points, got {}",
            risks.len()
        )));
    }
    if times.len() != risks.len() {
        return Err(dims("times and risks differ in length"));
    }
    let last = *risks.last().expect("non-empty");
    let excess: Vec<f64> = risks.iter().map(|r| r - last).collect();
    let monotonicity_violations: Vec<usize> = (1..excess.len())
        .filter(|&i| excess[i] > excess[i - 1] + 1e-12)
        .collect();

    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(risks)
        .filter(|(_, r)| **r - floor > 0.0)
        .map(|(t, r)| (*t, (r - floor).ln()))
        .collect();
    let fitted_rate = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            0.0
        }
    };
    let bound_violations = times
        .iter()
        .zip(risks)
        .enumerate()
        .filter(|(_, (t, r))| **r - floor > c0 * (-lambda_min * **t).exp())
        .map(|(i, _)| i)
        .collect();
    Ok(ConvergenceReport {
        monotone: monotonicity_violations.is_empty(),
        monotonicity_violations,
        fitted_rate,
        lambda_min,
        c0,
        floor,
        bound_violations,
    })
}

/// C0 = L_ce·‖σ(f_θ0(X)) − Y‖_F / σ_min(∇_θ f_θ0(X)), with the Jacobian over
/// the kernel-relevant parameters and logits stacked as rows. Infinite when
/// the Jacobian is rank deficient.
pub fn estimate_c0(
    model: &dyn Classifier,
    inputs: &[&[f64]],
    labels: &[usize],
    l_ce: f64,
    exec: &Executor,
) -> Result<f64> {
    if inputs.len() != labels.len() {
        return Err(dims("inputs and labels differ in length"));
    }
    let prep = model.prepare(exec, 0)?;
    let mut residual = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let out = model.output(&prep, x, exec, 0)?;
        for (j, p) in out.probabilities.iter().enumerate() {
            let t = if j == y { 1.0 } else { 0.0 };
            residual += (p - t).powi(2);
        }
    }
    let jac = Jacobian::compute(model, inputs, exec)?.stacked(KernelGroup::All);
    let gram = &jac * jac.transpose();
    let lam = lambda_min(&((&gram + gram.transpose()) * 0.5))?;
    Ok(if lam <= 0.0 {
        f64::INFINITY
    } else {
        l_ce * residual.sqrt() / lam.sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, ModelKind};

    #[test]
    fn lambda_min_basics() {
        assert!((lambda_min(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 7.0]));
        assert!((lambda_min(&d).unwrap() - 0.5).abs() < 1e-14);
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = 1e-3;
        assert!(lambda_min(&a).is_err());
    }

    #[test]
    fn constant_and_exponential_traces() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let flat = vec![0.7; 10];
        let r = convergence_bound_check(&t, &flat, 1.0, 1.0, 0.0).unwrap();
        assert!(r.monotone);
        assert!(r.fitted_rate.abs() < 1e-12);
        let exp: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let r = convergence_bound_check(&t, &exp, 1.0, 1.0, 0.0).unwrap();
        assert!((r.fitted_rate - 1.0).abs() < 1e-6);
        assert!(r.bound_violations.is_empty());
        assert!(convergence_bound_check(&t[..2], &exp[..2], 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_input_kernel_is_squared_norm() {
        let spec = ModelSpec::new(ModelKind::VqcMlpNet, ModelDims::new(3, 4, 1, 2, 1));
        let m = spec.build(2).unwrap();
        let x = [0.2, -0.5, 0.9];
        let exec = Executor::exact();
        let k = empirical_ntk(m.classifier(), &[&x], KernelGroup::All, &exec).unwrap();
        let jac = Jacobian::compute(m.classifier(), &[&x], &exec).unwrap();
        let g = jac.stacked(KernelGroup::All);
        assert!((k[(0, 0)] - g.norm_squared()).abs() < 1e-12);
        let k2 = empirical_ntk(m.classifier(), &[&x, &x], KernelGroup::All, &exec).unwrap();
        assert!(k2.iter().all(|v| (v - k[(0, 0)]).abs() < 1e-12));
    }

    #[test]
    fn kernel_group_names() {
        for g in KernelGroup::ALL {
            assert_eq!(g.name().parse::<KernelGroup>().unwrap(), g);
        }
        assert!("delta".parse::<KernelGroup>().is_err());
    }
}
