//! Scalar training losses and their gradients.
//!
//! Every loss comes in two forms: a value-only function and an `accumulate_*`
//! variant that also deposits `scale · ∂loss` into a [`LossTape`].

use serde::{Deserialize, Serialize};

use crate::network::{Domain, ForwardPass, LossTape, RepresentationSet};
use crate::numerics::{centered, covariance_matrix, frob_sq_diff, on_simplex, raw_diag_variance, Matrix};
use crate::pseudolabel::PseudoLabelSet;
use crate::{Error, Result};

/// Lower bound applied to probabilities inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IBConfig {
    pub beta: f64,
}

impl Default for IBConfig {
    fn default() -> Self {
        Self { beta: 5e-4 }
    }
}

/// Per-iteration loss values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub ib: f64,
    pub pl: f64,
    pub ca: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(ib: f64, pl: f64, ca: Vec<f64>, gamma: &[f64], alpha1: f64, alpha2: f64) -> Result<Self> {
        let total = overall_loss(ib, pl, &ca, gamma, alpha1, alpha2)?;
        Ok(Self { ib, pl, ca, total })
    }

    pub fn is_finite(&self) -> bool {
        self.ib.is_finite() && self.pl.is_finite() && self.total.is_finite() && self.ca.iter().all(|v| v.is_finite())
    }
}

/// Differential entropy of a Gaussian with the given diagonal covariance.
pub fn gaussian_entropy(diag_var: &[f64]) -> Result<f64> {
    if let Some(v) = diag_var.iter().find(|&&v| v.is_nan() || v <= 0.0) {
        return Err(Error::invalid(format!("variance {v} is not positive")));
    }
    let d = diag_var.len() as f64;
    let log_det: f64 = diag_var.iter().map(|v| v.ln()).sum();
    Ok(0.5 * log_det + 0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} prediction rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= probs.cols()) {
        return Err(Error::invalid(format!("label {y} outside {} classes", probs.cols())));
    }
    Ok(())
}

/// Mean of `−log p(y_n)` over rows.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = labels
        .iter()
        .enumerate()
        .map(|(n, &y)| -probs.get(n, y).max(PROB_FLOOR).ln())
        .sum();
    Ok(sum / labels.len() as f64)
}

/// Adds `scale · ∂CE/∂logits` for the rows in `rows` (mean over `rows`).
fn cross_entropy_grad(probs: &Matrix, rows: &[usize], labels: &[usize], scale: f64, out: &mut Matrix) {
    let inv = scale / rows.len() as f64;
    for (&n, &y) in rows.iter().zip(labels) {
        // Below the floor the loss is constant in the logits.
        if probs.get(n, y) < PROB_FLOOR {
            continue;
        }
        let g = out.row_mut(n);
        for (c, (gc, &p)) in g.iter_mut().zip(probs.row(n)).enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            *gc += inv * (p - target);
        }
    }
}

/// `Σ_i log var_i` of the floored unbiased diagonal variance.
pub fn log_det_diag(z: &Matrix, var_floor: f64) -> Result<f64> {
    Ok(raw_diag_variance(z)?
        .into_iter()
        .map(|v| v.max(var_floor).ln())
        .sum())
}

fn log_det_diag_grad(z: &Matrix, var_floor: f64, scale: f64, out: &mut Matrix) -> Result<()> {
    let var = raw_diag_variance(z)?;
    let zc = centered(z)?;
    let denom = (z.rows() - 1) as f64;
    for n in 0..z.rows() {
        let g = out.row_mut(n);
        for (j, gj) in g.iter_mut().enumerate() {
            // A floored variance is constant locally.
            if var[j] > var_floor {
                *gj += scale * 2.0 * zc.get(n, j) / (denom * var[j]);
            }
        }
    }
    Ok(())
}

/// Information-bottleneck loss on the source batch:
/// `Σ_{m=1}^{M+1} [ (β/2)·log|Σ_m| − (1/N)·Σ_n log p(y_n | z_{n,m}) ]`
/// with the parameter-independent constants dropped.
pub fn ib_loss(
    reps_source: &RepresentationSet,
    probs_source: &[Matrix],
    labels_source: &[usize],
    beta: f64,
    var_floor: f64,
) -> Result<f64> {
    let heads = reps_source.modalities() + 1;
    if probs_source.len() != heads {
        return Err(Error::shape(format!(
            "{} prediction matrices for {heads} heads",
            probs_source.len()
        )));
    }
    if labels_source.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (m, probs) in probs_source.iter().enumerate() {
        total += 0.5 * beta * log_det_diag(reps_source.head(m), var_floor)?;
        total += cross_entropy(probs, labels_source)?;
    }
    Ok(total)
}

/// [`ib_loss`] on the source half of `pass`, depositing `scale · ∂` into `tape`.
pub fn accumulate_ib(
    pass: &ForwardPass,
    labels_source: &[usize],
    beta: f64,
    var_floor: f64,
    scale: f64,
    tape: &mut LossTape,
) -> Result<f64> {
    let src = &pass.source;
    let value = ib_loss(&src.reps, &src.probs, labels_source, beta, var_floor)?;
    let all: Vec<usize> = (0..labels_source.len()).collect();
    for (m, probs) in src.probs.iter().enumerate() {
        cross_entropy_grad(probs, &all, labels_source, scale, &mut tape.source.logits[m]);
        if beta != 0.0 {
            log_det_diag_grad(src.reps.head(m), var_floor, scale * 0.5 * beta, &mut tape.source.reps[m])?;
        }
    }
    Ok(value)
}

/// Correlation-alignment loss `‖cov(Z_t) − cov(Z_s)‖_F²`.
pub fn coral_loss(z_source: &Matrix, z_target: &Matrix) -> Result<f64> {
    if z_source.cols() != z_target.cols() {
        return Err(Error::shape(format!(
            "source has {} columns, target {}",
            z_source.cols(),
            z_target.cols()
        )));
    }
    frob_sq_diff(&covariance_matrix(z_target)?, &covariance_matrix(z_source)?)
}

/// Value and gradients of [`coral_loss`] with respect to both batches.
pub fn coral_loss_grad(z_source: &Matrix, z_target: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    let cs = covariance_matrix(z_source)?;
    let ct = covariance_matrix(z_target)?;
    let value = frob_sq_diff(&ct, &cs)?;
    let mut diff = ct;
    diff.add_scaled(&cs, -1.0)?;
    // ∂/∂Z of ‖C_t − C_s‖² is ±4·Z_c·(C_t − C_s)/(N − 1); the centering term
    // vanishes because centered columns sum to zero.
    let mut gt = centered(z_target)?.matmul(&diff)?;
    gt.scale(4.0 / (z_target.rows() - 1) as f64);
    let mut gs = centered(z_source)?.matmul(&diff)?;
    gs.scale(-4.0 / (z_source.rows() - 1) as f64);
    Ok((value, gs, gt))
}

/// CA losses of all `M+1` heads.
pub fn ca_losses(pass: &ForwardPass) -> Result<Vec<f64>> {
    (0..=pass.modalities())
        .map(|m| coral_loss(pass.source.reps.head(m), pass.target.reps.head(m)))
        .collect()
}

/// CA loss of head `m` (`m == M` is the concatenation), depositing `scale · ∂`.
pub fn accumulate_ca(pass: &ForwardPass, m: usize, scale: f64, tape: &mut LossTape) -> Result<f64> {
    if m > pass.modalities() {
        return Err(Error::invalid(format!("no head {m}")));
    }
    let (value, gs, gt) = coral_loss_grad(pass.source.reps.head(m), pass.target.reps.head(m))?;
    tape.domain_mut(Domain::Source).reps[m].add_scaled(&gs, scale)?;
    tape.domain_mut(Domain::Target).reps[m].add_scaled(&gt, scale)?;
    Ok(value)
}

/// Pseudo-label cross-entropy on the multimodal head; zero when nothing is selected.
pub fn pl_loss(probs_mm_target: &Matrix, pseudo: &PseudoLabelSet) -> Result<f64> {
    if pseudo.indices.is_empty() {
        return Ok(0.0);
    }
    if let Some(&i) = pseudo.indices.iter().find(|&&i| i >= probs_mm_target.rows()) {
        return Err(Error::invalid(format!(
            "pseudo-label index {i} outside {} target rows",
            probs_mm_target.rows()
        )));
    }
    let sum: f64 = pseudo
        .indices
        .iter()
        .zip(&pseudo.labels)
        .map(|(&n, &y)| -probs_mm_target.get(n, y).max(PROB_FLOOR).ln())
        .sum();
    Ok(sum / pseudo.indices.len() as f64)
}

/// [`pl_loss`] on the target multimodal head of `pass`, depositing `scale · ∂`.
pub fn accumulate_pl(pass: &ForwardPass, pseudo: &PseudoLabelSet, scale: f64, tape: &mut LossTape) -> Result<f64> {
    let probs = pass.target.multimodal_probs();
    let value = pl_loss(probs, pseudo)?;
    if !pseudo.indices.is_empty() {
        let head = pass.modalities();
        cross_entropy_grad(probs, &pseudo.indices, &pseudo.labels, scale, &mut tape.target.logits[head]);
    }
    Ok(value)
}

/// `ib + α1·pl + α2·Σ_m γ_m·ca_m`
pub fn overall_loss(ib: f64, pl: f64, ca: &[f64], gamma: &[f64], alpha1: f64, alpha2: f64) -> Result<f64> {
    if ca.len() != gamma.len() {
        return Err(Error::shape(format!(
            "{} alignment losses for {} weights",
            ca.len(),
            gamma.len()
        )));
    }
    if !on_simplex(gamma, 1e-9) {
        return Err(Error::invalid(format!("weights {gamma:?} are not on the simplex")));
    }
    let weighted: f64 = ca.iter().zip(gamma).map(|(c, g)| c * g).sum();
    Ok(ib + alpha1 * pl + alpha2 * weighted)
}
