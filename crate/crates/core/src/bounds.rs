//! Closed-form error bounds and the depth-selection rule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Norm bound on the output-layer parameters.
    pub lambda: f64,
    /// Norm bound on the circuit parameters.
    pub lambda_q: f64,
    /// Input norm bound.
    pub r: f64,
    pub c0: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            alpha: 1.0,
            beta: 0.5,
            lambda: 1.0,
            lambda_q: 1.0,
            r: 1.0,
            c0: 1.0,
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be a finite non-negative number, got {v}"
        )))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be a finite positive number, got {v}"
        )))
    }
}

impl BoundConstants {
    /// C1..C3 may be zero to switch a term off; α, Λ, Λ_Q, r, C0 must be
    /// positive and β must lie in (0, 1/2].
    pub fn validate(&self) -> Result<()> {
        non_negative("C1", self.c1)?;
        non_negative("C2", self.c2)?;
        non_negative("C3", self.c3)?;
        positive("alpha", self.alpha)?;
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(invalid(format!(
                "beta must lie in (0, 1/2], got {}",
                self.beta
            )));
        }
        positive("Lambda", self.lambda)?;
        positive("Lambda_Q", self.lambda_q)?;
        positive("r", self.r)?;
        positive("C0", self.c0)
    }
}

/// C1/√M + C2·e^{−αL} + C3/2^{βU}.
pub fn approximation_bound(c: &BoundConstants, m: usize, l: usize, u: usize) -> Result<f64> {
    c.validate()?;
    if m == 0 || l == 0 || u == 0 {
        return Err(invalid("M, L and U must be at least 1"));
    }
    Ok(c.c1 / (m as f64).sqrt()
        + c.c2 * (-c.alpha * l as f64).exp()
        + c.c3 / 2f64.powf(c.beta * u as f64))
}

/// Smallest L ≥ 0 with C2·e^{−αL} ≤ τ.
pub fn depth_for_tolerance(c2: f64, alpha: f64, tau: f64) -> Result<usize> {
    positive("C2", c2)?;
    positive("alpha", alpha)?;
    positive("tau", tau)?;
    let holds = |l: usize| c2 * (-alpha * l as f64).exp() <= tau;
    let guess = ((c2 / tau).ln() / alpha).ceil();
    let mut l = if guess > 0.0 { guess as usize } else { 0 };
    // the closed form can be off by one in floating point
    while !holds(l) {
        l += 1;
    }
    while l > 0 && holds(l - 1) {
        l -= 1;
    }
    Ok(l)
}

/// 2·Λ·Λ_Q·r/√|S|, or 2·Λ·√L·r/√|S| in the refined form.
pub fn uniform_deviation_bound(
    c: &BoundConstants,
    l: usize,
    sample_count: usize,
    refined: bool,
) -> Result<f64> {
    c.validate()?;
    if sample_count == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let complexity = if refined {
        (l as f64).sqrt()
    } else {
        c.lambda_q
    };
    Ok(2.0 * c.lambda * complexity * c.r / (sample_count as f64).sqrt())
}

/// C0·e^{−λ_min·t}.
pub fn optimization_bound(c0: f64, lambda_min: f64, t: f64) -> Result<f64> {
    positive("C0", c0)?;
    non_negative("lambda_min", lambda_min)?;
    non_negative("t", t)?;
    Ok(c0 * (-lambda_min * t).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFit {
    pub c2: f64,
    pub alpha: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of ln(loss) = ln C2 − α·L over (depth, loss) pairs.
pub fn fit_depth(points: &[(f64, f64)]) -> Result<DepthFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, loss)| *loss > 0.0 && loss.is_finite())
        .map(|&(l, loss)| (l, loss.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(invalid("need at least two positive losses to fit"));
    }
    let ml = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - ml).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("need at least two distinct depths to fit"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - ml) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * ml;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(DepthFit {
        c2: intercept.exp(),
        alpha: -slope,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
        points: pts.len(),
    })
}
