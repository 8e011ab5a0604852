//! Central finite-difference check of every analytic gradient.
//!
//! Pseudo labels and `γ` are computed once per draw and then held fixed, so
//! each checked loss is a smooth function of the parameters.

use serde::Serialize;

use crate::losses::{accumulate_ca, accumulate_ib, accumulate_pl, LossBreakdown};
use crate::network::{backward, forward_all, Architecture, ForwardPass, LossTape, ModelParams};
use crate::numerics::{seeded_rng, Matrix, VARIANCE_FLOOR};
use crate::pseudolabel::{pseudo_label, PseudoLabelSet};
use crate::Result;

/// Step of the central difference.
pub const STEP: f64 = 1e-5;
/// Lower bound on the denominator of the relative error.
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub seed: u64,
    pub draws: usize,
    pub arch: Architecture,
    pub batch: usize,
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Adds an error to one analytic entry; used to prove the check can fail.
    pub inject_fault: bool,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            draws: 20,
            arch: Architecture {
                input_dims: vec![3, 2],
                hidden: 3,
                rep_dim: 2,
                classes: 3,
            },
            batch: 6,
            // A larger β than in training so the entropy term is visible in the check.
            beta: 0.1,
            alpha1: 0.5,
            alpha2: 0.1,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// Which scalar is differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Ib,
    Ca(usize),
    Pl,
    Total,
}

struct Problem {
    source: Vec<Matrix>,
    target: Vec<Matrix>,
    labels: Vec<usize>,
    pseudo: PseudoLabelSet,
    gamma: Vec<f64>,
}

impl Problem {
    fn loss(&self, pass: &ForwardPass, target: Target, s: &GradcheckSettings, tape: &mut LossTape) -> Result<f64> {
        match target {
            Target::Ib => accumulate_ib(pass, &self.labels, s.beta, VARIANCE_FLOOR, 1.0, tape),
            Target::Ca(m) => accumulate_ca(pass, m, 1.0, tape),
            Target::Pl => accumulate_pl(pass, &self.pseudo, 1.0, tape),
            Target::Total => {
                let ib = accumulate_ib(pass, &self.labels, s.beta, VARIANCE_FLOOR, 1.0, tape)?;
                let pl = accumulate_pl(pass, &self.pseudo, s.alpha1, tape)?;
                let ca = (0..self.gamma.len())
                    .map(|m| accumulate_ca(pass, m, s.alpha2 * self.gamma[m], tape))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LossBreakdown::new(ib, pl, ca, &self.gamma, s.alpha1, s.alpha2)?.total)
            }
        }
    }

    fn value(&self, params: &ModelParams, target: Target, s: &GradcheckSettings) -> Result<f64> {
        let pass = forward_all(&self.source, &self.target, params)?;
        let mut tape = LossTape::new(&pass);
        self.loss(&pass, target, s, &mut tape)
    }

    fn gradient(&self, params: &ModelParams, target: Target, s: &GradcheckSettings) -> Result<Vec<f64>> {
        let pass = forward_all(&self.source, &self.target, params)?;
        let mut tape = LossTape::new(&pass);
        self.loss(&pass, target, s, &mut tape)?;
        Ok(backward(&pass, params, &tape)?.params.flatten())
    }
}

fn set_flat(params: &mut ModelParams, index: usize, value: f64) {
    let mut offset = 0;
    for t in params.tensors_mut() {
        let len = t.as_slice().len();
        if index < offset + len {
            t.as_mut_slice()[index - offset] = value;
            return;
        }
        offset += len;
    }
    panic!("parameter index {index} out of range");
}

/// Relative error with the denominator floored at [`REL_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn draw_problem(settings: &GradcheckSettings, draw: usize) -> Result<(ModelParams, Problem)> {
    let seed = settings.seed.wrapping_mul(1_000_003).wrapping_add(draw as u64);
    let params = ModelParams::init(&settings.arch, seed)?;
    let mut rng = seeded_rng(seed, 0x6C);
    let source: Vec<Matrix> = settings
        .arch
        .input_dims
        .iter()
        .map(|&d| Matrix::random_normal(settings.batch, d, &mut rng))
        .collect();
    let target: Vec<Matrix> = settings
        .arch
        .input_dims
        .iter()
        .map(|&d| {
            let mut x = Matrix::random_normal(settings.batch, d, &mut rng);
            x.scale(1.5);
            x
        })
        .collect();
    let labels = (0..settings.batch)
        .map(|n| (n + draw) % settings.arch.classes)
        .collect();
    let pass = forward_all(&source, &target, &params)?;
    // Every sample is selected at threshold 1, so the pseudo-label term is never empty.
    let pseudo = pseudo_label(&pass.target.probs, 1)?;
    let heads = settings.arch.modalities() + 1;
    let raw: Vec<f64> = (0..heads).map(|m| 1.0 + ((m + draw) % 3) as f64).collect();
    let total: f64 = raw.iter().sum();
    let gamma = raw.into_iter().map(|v| v / total).collect();
    Ok((
        params,
        Problem {
            source,
            target,
            labels,
            pseudo,
            gamma,
        },
    ))
}

fn targets(modalities: usize) -> Vec<(String, Target)> {
    let mut out = vec![("ib".to_string(), Target::Ib)];
    out.extend((0..=modalities).map(|m| (format!("ca_{}", m + 1), Target::Ca(m))));
    out.push(("pl".into(), Target::Pl));
    out.push(("total".into(), Target::Total));
    out
}

/// Checks every loss over `settings.draws` random networks and batches.
pub fn run(settings: &GradcheckSettings) -> Result<Vec<LossCheck>> {
    let names = targets(settings.arch.modalities());
    let mut worst: Vec<(f64, f64)> = vec![(0.0, 0.0); names.len()];
    for draw in 0..settings.draws {
        let (params, problem) = draw_problem(settings, draw)?;
        let theta = params.flatten();
        for (k, (_, target)) in names.iter().enumerate() {
            let mut analytic = problem.gradient(&params, *target, settings)?;
            if settings.inject_fault && draw == 0 {
                analytic[0] += 1e-2;
            }
            let mut probe = params.clone();
            for (i, &t) in theta.iter().enumerate() {
                set_flat(&mut probe, i, t + STEP);
                let plus = problem.value(&probe, *target, settings)?;
                set_flat(&mut probe, i, t - STEP);
                let minus = problem.value(&probe, *target, settings)?;
                set_flat(&mut probe, i, t);
                let numeric = (plus - minus) / (2.0 * STEP);
                let (rel, abs) = &mut worst[k];
                *rel = rel.max(relative_error(analytic[i], numeric));
                *abs = abs.max((analytic[i] - numeric).abs());
            }
        }
    }
    Ok(names
        .into_iter()
        .zip(worst)
        .map(|((loss, _), (max_rel_err, max_abs_err))| LossCheck {
            loss,
            max_rel_err,
            max_abs_err,
            passed: max_rel_err < TOLERANCE,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn small_net_fits_the_budget() {
        let s = GradcheckSettings::default();
        let (params, _) = draw_problem(&s, 0).unwrap();
        assert!(params.num_params() <= 100);
    }

    #[test]
    fn single_draw_passes_and_fault_fails() {
        let s = GradcheckSettings {
            draws: 1,
            ..GradcheckSettings::default()
        };
        assert!(run(&s).unwrap().iter().all(|c| c.passed));
        let bad = GradcheckSettings {
            inject_fault: true,
            ..s
        };
        assert!(run(&bad).unwrap().iter().any(|c| !c.passed));
    }
}
