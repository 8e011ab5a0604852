//! Training loop, evaluation and the ablation suite.
//!
//! Each iteration draws independent source and target mini-batches, labels
//! the target batch by voting, builds the Gram matrix of the alignment
//! gradients, picks `γ`, and takes one Adam step on
//! `L^IB + α1·L^PL + α2·Σ γ_m·L_m^CA`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::balance::{
    assemble_gram, dominance_ratio, solve_weights, two_pass_gradients, BalanceWeights, RepGradDomain, SolverMode,
    SolverSettings, EXACT_MAX_DIM,
};
use crate::losses::{accumulate_ca, accumulate_ib, accumulate_pl, ca_losses, pl_loss, LossBreakdown};
use crate::network::{backward, forward_all, forward_domain, AdamState, Architecture, LossTape, ModelParams};
use crate::numerics::{on_simplex, seeded_rng, Matrix, VARIANCE_FLOOR};
use crate::pseudolabel::{argmax, pl_accuracy, pseudo_label};
use crate::synthdata::MultimodalDataset;
use crate::{Error, Result};

const BATCH_STREAM: u64 = 0xB47C;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Vote threshold `M_v`.
    pub min_votes: usize,
    pub learning_rate: f64,
    /// Number of iterations `K`.
    pub iterations: usize,
    pub batch_size: usize,
    pub solver: SolverMode,
    pub seed: u64,
    pub hidden: usize,
    pub rep_dim: usize,
    pub var_floor: f64,
    pub diag_floor: f64,
    pub fw_max_iter: usize,
    pub fw_tol: f64,
    /// Representation rows entering the balancing gradients.
    pub rep_grad_domain: RepGradDomain,
    /// Reads target-train labels to log pseudo-label accuracy.
    pub pl_diagnostics: bool,
    /// Writes measured wall time; when off every `wall_ns` is 0.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 5e-4,
            alpha1: 0.5,
            alpha2: 0.1,
            min_votes: 3,
            learning_rate: 1e-3,
            iterations: 2000,
            batch_size: 48,
            solver: SolverMode::ClosedForm,
            seed: 0,
            hidden: 32,
            rep_dim: 16,
            var_floor: VARIANCE_FLOOR,
            diag_floor: crate::balance::DIAG_FLOOR,
            fw_max_iter: 50,
            fw_tol: 1e-8,
            rep_grad_domain: RepGradDomain::Both,
            pl_diagnostics: true,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(msg.to_string()));
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !nonneg(self.beta) || !nonneg(self.alpha1) || !nonneg(self.alpha2) {
            return bad("beta, alpha1 and alpha2 must be finite and ≥ 0");
        }
        if !pos(self.learning_rate) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be ≥ 2");
        }
        if self.hidden == 0 || self.rep_dim == 0 {
            return bad("hidden and rep_dim must be ≥ 1");
        }
        if self.min_votes == 0 {
            return bad("min_votes must be ≥ 1");
        }
        if !pos(self.var_floor) || !pos(self.diag_floor) {
            return bad("floors must be > 0");
        }
        if self.fw_max_iter == 0 || !nonneg(self.fw_tol) {
            return bad("fw_max_iter must be ≥ 1 and fw_tol ≥ 0");
        }
        Ok(())
    }

    pub fn check_dataset(&self, ds: &MultimodalDataset) -> Result<()> {
        self.validate()?;
        let heads = ds.modalities() + 1;
        if self.min_votes > heads {
            return Err(Error::Validation(format!(
                "min_votes {} exceeds the {heads} voting heads",
                self.min_votes
            )));
        }
        if self.solver == SolverMode::ExactOracle && heads > EXACT_MAX_DIM {
            return Err(Error::OracleTooLarge(heads));
        }
        let smallest = ds.spec.n_source.min(ds.spec.n_target);
        if self.batch_size > smallest {
            return Err(Error::Validation(format!(
                "batch_size {} exceeds the smaller domain size {smallest}",
                self.batch_size
            )));
        }
        Ok(())
    }

    pub fn architecture(&self, ds: &MultimodalDataset) -> Architecture {
        Architecture {
            input_dims: ds.spec.input_dims.clone(),
            hidden: self.hidden,
            rep_dim: self.rep_dim,
            classes: ds.classes(),
        }
    }

    fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            fw_max_iter: self.fw_max_iter,
            fw_tol: self.fw_tol,
            diag_floor: self.diag_floor,
        }
    }
}

/// One logged training iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub iter: usize,
    pub ib: f64,
    pub pl: f64,
    pub total: f64,
    /// `L_m^CA` for heads `1..=M+1`.
    pub ca: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Dominance ratio of `Q`; NaN when no Gram matrix was built.
    pub r: f64,
    pub stationary: bool,
    pub pl_selected: usize,
    /// `None` when pseudo-label diagnostics are off.
    pub pl_correct: Option<usize>,
    pub wall_ns: u64,
    /// Time spent obtaining `γ`; 0 when the solver was skipped.
    pub solver_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub weighted_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalMetrics {
    pub source_test: Evaluation,
    pub target_test: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub modalities: usize,
    pub rows: Vec<IterationRow>,
    pub final_metrics: FinalMetrics,
}

impl TrainReport {
    pub fn mean_solver_ns(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.solver_ns as f64).sum::<f64>() / self.rows.len() as f64
    }

    /// Pooled pseudo-label accuracy over all iterations, when diagnostics were on.
    pub fn pl_accuracy(&self) -> Option<f64> {
        let mut selected = 0;
        let mut correct = 0;
        for r in &self.rows {
            selected += r.pl_selected;
            correct += r.pl_correct?;
        }
        Some(if selected == 0 { 0.0 } else { correct as f64 / selected as f64 })
    }
}

fn gather(features: &[Matrix], idx: &[usize]) -> Vec<Matrix> {
    features.iter().map(|x| x.select_rows(idx)).collect()
}

fn dump(iter: usize, loss: &LossBreakdown, gamma: &[f64], pl_selected: usize, params: &ModelParams) -> String {
    serde_json::json!({
        "iteration": iter,
        "ib": loss.ib.to_string(),
        "pl": loss.pl.to_string(),
        "ca": loss.ca.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "total": loss.total.to_string(),
        "gamma": gamma,
        "pl_selected": pl_selected,
        "params_finite": params.is_finite(),
    })
    .to_string()
}

/// Runs `K` iterations and evaluates on the held-out splits.
pub fn train(ds: &MultimodalDataset, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    ds.validate()?;
    config.check_dataset(ds)?;
    let mut params = ModelParams::init(&config.architecture(ds), config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = seeded_rng(config.seed, BATCH_STREAM);
    let heads = ds.modalities() + 1;
    let settings = config.solver_settings();
    let b = config.batch_size;
    let mut rows = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let start = Instant::now();
        let src_idx = sample(&mut rng, ds.spec.n_source, b).into_vec();
        let tgt_idx = sample(&mut rng, ds.spec.n_target, b).into_vec();
        let src = gather(&ds.source.features, &src_idx);
        let tgt = gather(&ds.target_train, &tgt_idx);
        let src_labels: Vec<usize> = src_idx.iter().map(|&i| ds.source.labels[i]).collect();

        let pass = forward_all(&src, &tgt, &params)?;
        let pseudo = pseudo_label(&pass.target.probs, config.min_votes)?;
        let pl_correct = config.pl_diagnostics.then(|| {
            let all = ds.target_train_labels.read();
            let batch: Vec<usize> = tgt_idx.iter().map(|&i| all[i]).collect();
            pl_accuracy(&pseudo, &batch).correct
        });

        let mut solver_ns = 0;
        let (weights, r) = if config.alpha2 > 0.0 {
            let blocks = two_pass_gradients(&pass, &params, config.rep_grad_domain)?;
            let gram = assemble_gram(&blocks)?;
            let r = dominance_ratio(&gram.q)?.value;
            let t = Instant::now();
            let w = solve_weights(&gram, config.solver, &settings)?;
            solver_ns = t.elapsed().as_nanos() as u64;
            (w, r)
        } else {
            (BalanceWeights::uniform(heads), f64::NAN)
        };
        debug_assert!(on_simplex(&weights.gamma, 1e-9));

        let mut tape = LossTape::new(&pass);
        let ib = accumulate_ib(&pass, &src_labels, config.beta, config.var_floor, 1.0, &mut tape)?;
        let pl = if config.alpha1 > 0.0 {
            accumulate_pl(&pass, &pseudo, config.alpha1, &mut tape)?
        } else {
            pl_loss(pass.target.multimodal_probs(), &pseudo)?
        };
        let ca = if config.alpha2 > 0.0 {
            (0..heads)
                .map(|m| accumulate_ca(&pass, m, config.alpha2 * weights.gamma[m], &mut tape))
                .collect::<Result<Vec<_>>>()?
        } else {
            ca_losses(&pass)?
        };
        let loss = LossBreakdown::new(ib, pl, ca, &weights.gamma, config.alpha1, config.alpha2)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                dump: dump(iter, &loss, &weights.gamma, pseudo.len(), &params),
            });
        }
        let grads = backward(&pass, &params, &tape)?;
        adam.step(&mut params, &grads.params, config.learning_rate)?;

        let wall_ns = if config.record_timing {
            start.elapsed().as_nanos() as u64
        } else {
            0
        };
        rows.push(IterationRow {
            iter,
            ib: loss.ib,
            pl: loss.pl,
            total: loss.total,
            ca: loss.ca,
            gamma: weights.gamma,
            r,
            stationary: weights.stationary,
            pl_selected: pseudo.len(),
            pl_correct,
            wall_ns,
            solver_ns: if config.record_timing { solver_ns } else { 0 },
        });
    }

    let final_metrics = FinalMetrics {
        source_test: evaluate(&params, &ds.source_test.features, &ds.source_test.labels)?,
        target_test: evaluate(&params, &ds.target_test.features, &ds.target_test.labels)?,
    };
    let report = TrainReport {
        config: config.clone(),
        modalities: ds.modalities(),
        rows,
        final_metrics,
    };
    Ok((params, report))
}

/// Class predicted by the multimodal head for every row.
pub fn predict(params: &ModelParams, features: &[Matrix]) -> Result<Vec<usize>> {
    let pass = forward_domain(features, params)?;
    let probs = pass.multimodal_probs();
    Ok((0..probs.rows()).map(|n| argmax(probs.row(n))).collect())
}

/// Weighted F1 of the multimodal head's predictions.
pub fn evaluate(params: &ModelParams, features: &[Matrix], labels: &[usize]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let preds = predict(params, features)?;
    if preds.len() != labels.len() {
        return Err(Error::shape(format!("{} rows but {} labels", preds.len(), labels.len())));
    }
    f1_scores(labels, &preds, params.classes())
}

/// Weighted and per-class F1 from true and predicted labels.
///
/// `F1_c` is 0 when precision and recall are both 0; the weight of class `c`
/// is its support over `N`.
pub fn f1_scores(truth: &[usize], pred: &[usize], classes: usize) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if truth.len() != pred.len() {
        return Err(Error::shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
    }
    if let Some(&y) = truth.iter().chain(pred).find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {y} outside {classes} classes")));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let n = truth.len() as f64;
    let mut weighted = 0.0;
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        // 2·tp / (support + predicted) equals 2PR/(P+R) and is 0 when tp = 0.
        let f1 = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (support + predicted) as f64
        };
        per_class.push(f1);
        weighted += support as f64 / n * f1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(Evaluation {
        weighted_f1: weighted,
        per_class_f1: per_class,
        accuracy: correct as f64 / n,
        confusion,
    })
}

/// Header of `report.csv` for `M` modalities.
pub fn report_header(modalities: usize) -> Vec<String> {
    let heads = modalities + 1;
    let mut h = vec!["iter".to_string(), "ib".into(), "pl".into()];
    h.extend((1..=heads).map(|m| format!("ca_{m}")));
    h.extend((1..=heads).map(|m| format!("gamma_{m}")));
    h.extend(["r", "pl_selected", "pl_correct", "wall_ns"].map(String::from));
    h
}

pub fn write_report_csv(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
    w.write_record(report_header(report.modalities)).map_err(wrap)?;
    for r in &report.rows {
        let mut rec = vec![r.iter.to_string(), r.ib.to_string(), r.pl.to_string()];
        rec.extend(r.ca.iter().map(f64::to_string));
        rec.extend(r.gamma.iter().map(f64::to_string));
        rec.push(r.r.to_string());
        rec.push(r.pl_selected.to_string());
        rec.push(r.pl_correct.map_or_else(String::new, |c| c.to_string()));
        rec.push(r.wall_ns.to_string());
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    seed: u64,
    iterations: usize,
    config: &'a TrainConfig,
    source_test: &'a Evaluation,
    target_test: &'a Evaluation,
    pl_accuracy: Option<f64>,
    mean_solver_ns: f64,
    total_wall_ns: u64,
    stationary_iterations: usize,
}

pub fn write_summary_json(report: &TrainReport, path: &Path) -> Result<()> {
    let summary = Summary {
        seed: report.config.seed,
        iterations: report.rows.len(),
        config: &report.config,
        source_test: &report.final_metrics.source_test,
        target_test: &report.final_metrics.target_test,
        pl_accuracy: report.pl_accuracy(),
        mean_solver_ns: report.mean_solver_ns(),
        total_wall_ns: report.rows.iter().map(|r| r.wall_ns).sum(),
        stationary_iterations: report.rows.iter().filter(|r| r.stationary).count(),
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One configuration of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    NoCaNoPl,
    CaOnly,
    PlOnly,
    CaUnbalancedPl,
    CaBalancedPl,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::NoCaNoPl,
        AblationVariant::CaOnly,
        AblationVariant::PlOnly,
        AblationVariant::CaUnbalancedPl,
        AblationVariant::CaBalancedPl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::NoCaNoPl => "no_ca_no_pl",
            AblationVariant::CaOnly => "ca_only",
            AblationVariant::PlOnly => "pl_only",
            AblationVariant::CaUnbalancedPl => "ca_unbalanced_pl",
            AblationVariant::CaBalancedPl => "ca_balanced_pl",
        }
    }

    /// `base` with the alignment and pseudo-label terms switched as the variant requires.
    ///
    /// Balanced variants keep the base solver unless it is `uniform`, in
    /// which case they fall back to the closed form.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        let balanced = if base.solver == SolverMode::Uniform {
            SolverMode::ClosedForm
        } else {
            base.solver
        };
        match self {
            AblationVariant::NoCaNoPl => {
                c.alpha1 = 0.0;
                c.alpha2 = 0.0;
            }
            AblationVariant::CaOnly => {
                c.alpha1 = 0.0;
                c.solver = balanced;
            }
            AblationVariant::PlOnly => c.alpha2 = 0.0,
            AblationVariant::CaUnbalancedPl => c.solver = SolverMode::Uniform,
            AblationVariant::CaBalancedPl => c.solver = balanced,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub alpha1: f64,
    pub alpha2: f64,
    pub solver: SolverMode,
    pub seeds: Vec<u64>,
    /// Target-test weighted F1 for each seed.
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every variant for every seed and reports target-test weighted F1.
pub fn ablation_suite(ds: &MultimodalDataset, base: &TrainConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(AblationVariant::ALL.len());
    for variant in AblationVariant::ALL {
        let config = variant.configure(base);
        let mut scores = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let run = TrainConfig { seed, ..config.clone() };
            let (_, report) = train(ds, &run)?;
            scores.push(report.final_metrics.target_test.weighted_f1);
        }
        let (mean, std) = mean_std(&scores);
        rows.push(AblationRow {
            variant,
            alpha1: config.alpha1,
            alpha2: config.alpha2,
            solver: config.solver,
            seeds: seeds.to_vec(),
            scores,
            mean,
            std,
        });
    }
    Ok(rows)
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut out = String::from("variant,alpha1,alpha2,solver,n_seeds,mean_f1,std_f1,scores\n");
    for r in rows {
        let scores: Vec<String> = r.scores.iter().map(f64::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.variant.name(),
            r.alpha1,
            r.alpha2,
            r.solver,
            r.seeds.len(),
            r.mean,
            r.std,
            scores.join(";")
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, DatasetSpec, ShiftSeverity};

    fn tiny_data() -> MultimodalDataset {
        generate(&DatasetSpec {
            input_dims: vec![4, 3],
            n_source: 60,
            n_source_test: 40,
            n_target: 60,
            n_target_test: 40,
            classes: 3,
            class_separation: 1.5,
            shift: vec![ShiftSeverity::new(0.5, 0.0, 0.0), ShiftSeverity::default()],
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            iterations: 15,
            batch_size: 16,
            hidden: 6,
            rep_dim: 4,
            learning_rate: 1e-2,
            record_timing: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn f1_examples() {
        let e = f1_scores(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(e.weighted_f1, 1.0);
        let e = f1_scores(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert!((e.weighted_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.per_class_f1[1], 0.0);
        assert!(f1_scores(&[], &[], 2).is_err());
        assert!(f1_scores(&[0, 3], &[0, 0], 2).is_err());
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let ds = tiny_data();
        let config = TrainConfig {
            iterations: 0,
            ..tiny_config()
        };
        let (params, report) = train(&ds, &config).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(params, ModelParams::init(&config.architecture(&ds), config.seed).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_logs_on_simplex() {
        let ds = tiny_data();
        let (pa, a) = train(&ds, &tiny_config()).unwrap();
        let (pb, b) = train(&ds, &tiny_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        for r in &a.rows {
            assert!(on_simplex(&r.gamma, 1e-9));
            assert!(r.pl_selected <= 16);
            assert_eq!(r.ca.len(), 3);
        }
    }

    #[test]
    fn source_only_gradients_change_the_weights() {
        let ds = tiny_data();
        let (_, both) = train(&ds, &tiny_config()).unwrap();
        let source_only = TrainConfig {
            rep_grad_domain: RepGradDomain::SourceOnly,
            ..tiny_config()
        };
        let (_, src) = train(&ds, &source_only).unwrap();
        assert_ne!(both.rows[0].gamma, src.rows[0].gamma);
        assert!(src.rows.iter().all(|r| on_simplex(&r.gamma, 1e-9)));
    }

    #[test]
    fn alpha2_zero_ignores_solver() {
        let ds = tiny_data();
        let base = TrainConfig {
            alpha2: 0.0,
            ..tiny_config()
        };
        let (_, uniform) = train(
            &ds,
            &TrainConfig {
                solver: SolverMode::Uniform,
                ..base.clone()
            },
        )
        .unwrap();
        let (_, fw) = train(
            &ds,
            &TrainConfig {
                solver: SolverMode::FrankWolfe,
                ..base
            },
        )
        .unwrap();
        // r is NaN in both, so compare the exact textual form.
        assert_eq!(format!("{:?}", uniform.rows), format!("{:?}", fw.rows));
        assert!(fw.rows.iter().all(|r| r.r.is_nan() && r.solver_ns == 0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ds = tiny_data();
        for bad in [
            TrainConfig {
                min_votes: 4,
                ..tiny_config()
            },
            TrainConfig {
                batch_size: 1,
                ..tiny_config()
            },
            TrainConfig {
                batch_size: 61,
                ..tiny_config()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..tiny_config()
            },
        ] {
            assert!(train(&ds, &bad).is_err());
        }
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ablation_variants_toggle_terms() {
        let base = TrainConfig::default();
        let c = AblationVariant::NoCaNoPl.configure(&base);
        assert_eq!((c.alpha1, c.alpha2), (0.0, 0.0));
        assert_eq!(AblationVariant::CaUnbalancedPl.configure(&base).solver, SolverMode::Uniform);
        assert_eq!(AblationVariant::CaBalancedPl.configure(&base).solver, SolverMode::ClosedForm);
        assert_eq!(AblationVariant::PlOnly.configure(&base).alpha2, 0.0);
        assert_eq!(AblationVariant::CaOnly.configure(&base).alpha1, 0.0);
    }
}
