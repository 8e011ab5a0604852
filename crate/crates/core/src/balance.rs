//! Pareto balancing of the per-modality alignment losses.
//!
//! The stacked representation gradients form a block-sparse matrix `P` whose
//! row `m < M` holds `g_m = ∇_{Z_m} L_m` in block `m` and zeros elsewhere,
//! while the last row holds the blocks `g^m = ∇_{Z_m} L_{M+1}`. The weights
//! `γ` minimize `γᵀ Q γ` with `Q = P Pᵀ` over the probability simplex; the
//! minimizer gives the min-norm point of the convex hull of the rows, which
//! is a common descent direction or certifies Pareto stationarity.
//!
//! Three ways to obtain `γ` are provided: Frank–Wolfe on `Q`, exhaustive face
//! enumeration for small instances, and the closed form `γ ∝ 1/diag(Q)` for
//! the diagonal approximation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::losses::accumulate_ca;
use crate::network::{backward_to_representations, ForwardPass, LossTape, ModelParams, RepGrads};
use crate::numerics::{dot, mat_vec, norm_sq, on_simplex, quad_form, Matrix};
use crate::{Error, Result};

/// `‖d‖` at or below this value is reported as Pareto stationary.
pub const STATIONARY_TOL: f64 = 1e-8;

/// Default floor on diagonal entries in [`closed_form`].
pub const DIAG_FLOOR: f64 = 1e-12;

/// Largest dimension accepted by [`solve_qp_exact_small`].
pub const EXACT_MAX_DIM: usize = 5;

/// Flattened representation gradients.
///
/// `g[m]` is the gradient of modality `m`'s alignment loss with respect to
/// its own representation; `g_mm[m]` is the gradient of the multimodal
/// alignment loss with respect to the slice of the concatenation belonging to
/// modality `m`. Flattening order: source rows, then target rows, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlocks {
    pub g: Vec<Vec<f64>>,
    pub g_mm: Vec<Vec<f64>>,
}

impl GradientBlocks {
    pub fn new(g: Vec<Vec<f64>>, g_mm: Vec<Vec<f64>>) -> Result<Self> {
        let blocks = Self { g, g_mm };
        blocks.validate()?;
        Ok(blocks)
    }

    pub fn modalities(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.is_empty() || self.g.len() != self.g_mm.len() {
            return Err(Error::shape(format!(
                "{} modality blocks but {} multimodal blocks",
                self.g.len(),
                self.g_mm.len()
            )));
        }
        for (m, (a, b)) in self.g.iter().zip(&self.g_mm).enumerate() {
            if a.len() != b.len() {
                return Err(Error::shape(format!(
                    "block {m}: {} vs {} entries",
                    a.len(),
                    b.len()
                )));
            }
            if a.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("gradient block {m}")));
            }
        }
        Ok(())
    }
}

/// The Gram matrix `Q = P Pᵀ` of the stacked alignment gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub q: Matrix,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    /// Diagonal of `Q`, i.e. `Q̃`.
    pub fn diag(&self) -> Vec<f64> {
        self.q.diag()
    }
}

/// Builds `Q` from inner products of the nonzero blocks of `P`.
pub fn assemble_gram(blocks: &GradientBlocks) -> Result<GramMatrix> {
    blocks.validate()?;
    let m = blocks.modalities();
    let mut q = Matrix::zeros(m + 1, m + 1);
    let mut corner = 0.0;
    for k in 0..m {
        q.set(k, k, norm_sq(&blocks.g[k]));
        let cross = dot(&blocks.g[k], &blocks.g_mm[k]);
        q.set(k, m, cross);
        q.set(m, k, cross);
        corner += norm_sq(&blocks.g_mm[k]);
    }
    q.set(m, m, corner);
    Ok(GramMatrix { q })
}

/// Which representation rows enter the gradient blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepGradDomain {
    /// Source rows followed by target rows.
    #[default]
    Both,
    SourceOnly,
}

fn flatten_reps(reps: &RepGrads, m: usize, domain: RepGradDomain) -> Vec<f64> {
    let mut out = reps.source[m].as_slice().to_vec();
    if domain == RepGradDomain::Both {
        out.extend_from_slice(reps.target[m].as_slice());
    }
    out
}

/// Gradient blocks from two reverse passes.
///
/// The first pass differentiates the multimodal alignment loss and yields
/// every `g^m`. The second differentiates `Σ_{m<M} L_m`; since `L_m` depends
/// on `Z_m` only, slice `m` of that gradient is exactly `g_m`.
pub fn two_pass_gradients(
    pass: &ForwardPass,
    params: &ModelParams,
    domain: RepGradDomain,
) -> Result<GradientBlocks> {
    let m = pass.modalities();

    let mut tape = LossTape::new(pass);
    accumulate_ca(pass, m, 1.0, &mut tape)?;
    let (_, mm) = backward_to_representations(pass, params, &tape)?;

    let mut tape = LossTape::new(pass);
    for k in 0..m {
        accumulate_ca(pass, k, 1.0, &mut tape)?;
    }
    let (_, own) = backward_to_representations(pass, params, &tape)?;

    GradientBlocks::new(
        (0..m).map(|k| flatten_reps(&own, k, domain)).collect(),
        (0..m).map(|k| flatten_reps(&mm, k, domain)).collect(),
    )
}

/// Weights on the simplex, one per alignment loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceWeights {
    pub gamma: Vec<f64>,
    pub stationary: bool,
}

impl BalanceWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            gamma: vec![1.0 / n as f64; n],
            stationary: false,
        }
    }
}

/// Output of an iterative or enumerative QP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub weights: BalanceWeights,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
}

fn check_symmetric(q: &Matrix) -> Result<()> {
    if q.rows() != q.cols() || q.rows() == 0 {
        return Err(Error::shape(format!("Q must be square and nonempty, got {:?}", q.shape())));
    }
    let scale = q.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..q.rows() {
        for j in (i + 1)..q.rows() {
            if (q.get(i, j) - q.get(j, i)).abs() > 1e-9 * scale {
                return Err(Error::invalid(format!("Q is not symmetric at ({i}, {j})")));
            }
        }
    }
    if !q.is_finite() {
        return Err(Error::invalid("Q has non-finite entries"));
    }
    Ok(())
}

fn is_stationary(objective: f64) -> bool {
    objective.max(0.0).sqrt() <= STATIONARY_TOL
}

/// Fully corrective Frank–Wolfe with exact line search on `min γᵀQγ` over the simplex.
///
/// Starts from the uniform vector. Each iteration takes the classic step
/// toward the vertex `e_i` with `i = argmin (Qγ)_i`, then runs a correction
/// phase on the support of `γ`: line-search toward the minimizer of `γᵀQγ`
/// over the affine hull of the support, clamp at the simplex boundary, drop
/// the coordinates that hit zero and repeat. The correction removes the
/// zig-zagging of the classic method near faces and makes convergence finite
/// on well-posed instances. Stops once the gap `γᵀQγ − (Qγ)_i` falls below
/// `tol` or after `max_iter` iterations. The objective never increases.
pub fn solve_qp_frankwolfe(q: &Matrix, max_iter: usize, tol: f64) -> Result<QpSolution> {
    check_symmetric(q)?;
    let n = q.rows();
    let mut gamma = vec![1.0 / n as f64; n];
    let mut qg = mat_vec(q, &gamma);
    let mut obj = dot(&gamma, &qg);
    let mut trace = vec![obj];
    let mut iterations = 0;
    for _ in 0..max_iter {
        let i = argmin(&qg);
        let gap = obj - qg[i];
        if gap < tol {
            break;
        }
        let mut d: Vec<f64> = gamma.iter().map(|g| -g).collect();
        d[i] += 1.0;
        if !line_step(q, &mut gamma, &mut qg, &mut obj, &d, 1.0) {
            break;
        }
        for _ in 0..n {
            let support: Vec<usize> = (0..n).filter(|&k| gamma[k] > 0.0).collect();
            let Some(y) = affine_minimizer(q, &support) else {
                break;
            };
            let mut d = vec![0.0; n];
            let mut t_max = f64::INFINITY;
            for (&k, &yk) in support.iter().zip(&y) {
                d[k] = yk - gamma[k];
                if d[k] < 0.0 {
                    t_max = t_max.min(gamma[k] / -d[k]);
                }
            }
            if !line_step(q, &mut gamma, &mut qg, &mut obj, &d, t_max.min(1.0)) {
                break;
            }
            if support.iter().all(|&k| gamma[k] > 0.0) {
                break;
            }
        }
        iterations += 1;
        trace.push(obj);
    }
    Ok(QpSolution {
        weights: BalanceWeights {
            gamma,
            stationary: is_stationary(obj),
        },
        objective: obj,
        iterations,
        trace,
    })
}

/// Exact line search along `d` with the step clamped to `[0, t_max]`.
///
/// Coordinates that reach (numerically) zero are set to exactly zero. Returns
/// `false` and leaves the iterate untouched when the step would not lower
/// the objective.
fn line_step(q: &Matrix, gamma: &mut [f64], qg: &mut [f64], obj: &mut f64, d: &[f64], t_max: f64) -> bool {
    let qd = mat_vec(q, d);
    let slope = -dot(gamma, &qd);
    let curvature = dot(d, &qd);
    if slope <= 0.0 || t_max <= 0.0 {
        return false;
    }
    let t = if curvature <= 0.0 {
        t_max
    } else {
        (slope / curvature).min(t_max)
    };
    let next: Vec<f64> = gamma
        .iter()
        .zip(d)
        .map(|(g, dk)| {
            let v = g + t * dk;
            if v < 1e-15 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let next_qg = mat_vec(q, &next);
    let next_obj = dot(&next, &next_qg);
    if next_obj >= *obj {
        // Rounding only; the exact line search never increases the objective.
        return false;
    }
    gamma.copy_from_slice(&next);
    qg.copy_from_slice(&next_qg);
    *obj = next_obj;
    true
}

/// Minimizer of `γᵀQγ` subject to `1ᵀγ = 1` with `γ` supported on `support`.
///
/// A singular face system gets a ridge of `1e-10·max|Q|`; the result is only
/// used as a search direction.
fn affine_minimizer(q: &Matrix, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let build = |ridge: f64| {
        let mut a = vec![vec![0.0; s + 1]; s + 1];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[r][c] = q.get(i, j);
            }
            a[r][r] += ridge;
            a[r][s] = -1.0;
            a[s][r] = 1.0;
        }
        let mut b = vec![0.0; s + 1];
        b[s] = 1.0;
        (a, b)
    };
    let (a, b) = build(0.0);
    let x = solve_linear(a, b).or_else(|| {
        let scale = q.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let (a, b) = build(1e-10 * scale);
        solve_linear(a, b)
    })?;
    let y = x[..s].to_vec();
    y.iter().all(|v| v.is_finite()).then_some(y)
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot is negligible relative to the matrix scale.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Exact minimizer of `γᵀQγ` over the simplex by enumerating its faces.
///
/// On every face `S` the stationarity system `Q_SS γ_S = λ·1, 1ᵀγ_S = 1` is
/// solved; feasible solutions are candidates and the best one is returned.
/// A singular face system means the objective is flat along some feasible
/// direction of that face, so its minimum is also attained on a smaller face.
pub fn solve_qp_exact_small(q: &Matrix) -> Result<QpSolution> {
    check_symmetric(q)?;
    let n = q.rows();
    if n > EXACT_MAX_DIM {
        return Err(Error::OracleTooLarge(n));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut faces = 0;
    for mask in 1u32..(1 << n) {
        faces += 1;
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut a = vec![vec![0.0; k + 1]; k + 1];
        let mut b = vec![0.0; k + 1];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[r][c] = q.get(i, j);
            }
            a[r][k] = -1.0;
            a[k][r] = 1.0;
        }
        b[k] = 1.0;
        let Some(x) = solve_linear(a, b) else {
            continue;
        };
        if x[..k].iter().any(|&v| !v.is_finite() || v < -1e-12) {
            continue;
        }
        let mut gamma = vec![0.0; n];
        for (r, &i) in support.iter().enumerate() {
            gamma[i] = x[r].max(0.0);
        }
        let s: f64 = gamma.iter().sum();
        for g in &mut gamma {
            *g /= s;
        }
        let obj = quad_form(q, &gamma);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, gamma));
        }
    }
    let (objective, gamma) = best.expect("vertex faces always yield candidates");
    Ok(QpSolution {
        weights: BalanceWeights {
            gamma,
            stationary: is_stationary(objective),
        },
        objective,
        iterations: faces,
        trace: vec![objective],
    })
}

/// Closed-form minimizer of `γᵀ diag(q) γ` over the simplex: `γ ∝ 1/q`.
///
/// Entries below `floor` are raised to it. When every entry is below the
/// floor all alignment gradients vanished; the result is uniform and flagged
/// stationary.
pub fn closed_form(diag: &[f64], floor: f64) -> BalanceWeights {
    let n = diag.len();
    if n == 0 {
        return BalanceWeights {
            gamma: vec![],
            stationary: true,
        };
    }
    if diag.iter().all(|&v| v.is_nan() || v < floor) {
        return BalanceWeights {
            gamma: vec![1.0 / n as f64; n],
            stationary: true,
        };
    }
    let inv: Vec<f64> = diag.iter().map(|&v| 1.0 / v.max(floor)).collect();
    let total: f64 = inv.iter().sum();
    BalanceWeights {
        gamma: inv.into_iter().map(|v| v / total).collect(),
        stationary: false,
    }
}

/// Objective of the diagonal problem, `Σ q_i γ_i²`.
pub fn diag_objective(diag: &[f64], gamma: &[f64]) -> f64 {
    diag.iter().zip(gamma).map(|(q, g)| q * g * g).sum()
}

/// KKT residuals of the diagonal problem at `γ`, with `μ = 0` and
/// `λ = 1 / Σ_k q_k⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktResidual {
    pub lambda: f64,
    pub mu: Vec<f64>,
    /// `‖diag(q)·γ − λ·1‖_∞`
    pub stationarity_norm: f64,
    /// `|1ᵀγ − 1|`
    pub sum_residual: f64,
    /// `min_i γ_i`
    pub min_gamma: f64,
    /// `|μᵀγ|`
    pub complementarity: f64,
    /// `max(|1ᵀγ − 1|, −min γ, 0)`
    pub primal_violation: f64,
}

pub fn kkt_residual(diag: &[f64], gamma: &[f64]) -> KktResidual {
    let lambda = 1.0 / diag.iter().map(|q| 1.0 / q).sum::<f64>();
    let mu = vec![0.0; diag.len()];
    let stationarity_norm = diag
        .iter()
        .zip(gamma)
        .map(|(q, g)| (q * g - lambda).abs())
        .fold(0.0, f64::max);
    let sum_residual = (gamma.iter().sum::<f64>() - 1.0).abs();
    let min_gamma = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let complementarity = dot(&mu, gamma).abs();
    KktResidual {
        lambda,
        mu,
        stationarity_norm,
        sum_residual,
        min_gamma,
        complementarity,
        primal_violation: sum_residual.max(-min_gamma).max(0.0),
    }
}

/// Largest off-diagonal magnitude over smallest diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRatio {
    pub value: f64,
    /// Set when the smallest diagonal entry is not positive; `value` is then `+∞`.
    pub degenerate: bool,
}

pub fn dominance_ratio(q: &Matrix) -> Result<DominanceRatio> {
    let n = q.rows();
    if n < 2 || q.cols() != n {
        return Err(Error::invalid(format!("dominance ratio needs a square matrix of size ≥ 2, got {:?}", q.shape())));
    }
    let min_diag = q.diag().into_iter().fold(f64::INFINITY, f64::min);
    if min_diag.is_nan() || min_diag <= 0.0 {
        return Ok(DominanceRatio {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off = off.max(q.get(i, j).abs());
            }
        }
    }
    Ok(DominanceRatio {
        value: off / min_diag,
        degenerate: false,
    })
}

/// Inner products of every row of `P` with `d = Σ γ_m row_m(P)`, and `‖d‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentCheck {
    pub inner_products: Vec<f64>,
    pub direction_norm_sq: f64,
}

pub fn descent_check(blocks: &GradientBlocks, gamma: &[f64]) -> Result<DescentCheck> {
    blocks.validate()?;
    let m = blocks.modalities();
    if gamma.len() != m + 1 {
        return Err(Error::shape(format!("{} weights for {} objectives", gamma.len(), m + 1)));
    }
    let last = gamma[m];
    // Block k of d is γ_k·g_k + γ_M·g^k.
    let direction: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            blocks.g[k]
                .iter()
                .zip(&blocks.g_mm[k])
                .map(|(a, b)| gamma[k] * a + last * b)
                .collect()
        })
        .collect();
    let mut inner_products: Vec<f64> = (0..m).map(|k| dot(&blocks.g[k], &direction[k])).collect();
    inner_products.push((0..m).map(|k| dot(&blocks.g_mm[k], &direction[k])).sum());
    let direction_norm_sq = direction.iter().map(|b| norm_sq(b)).sum();
    Ok(DescentCheck {
        inner_products,
        direction_norm_sq,
    })
}

/// How the trainer obtains `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    ClosedForm,
    FrankWolfe,
    ExactOracle,
    Uniform,
}

impl SolverMode {
    pub const ALL: [SolverMode; 4] = [
        SolverMode::ClosedForm,
        SolverMode::FrankWolfe,
        SolverMode::ExactOracle,
        SolverMode::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverMode::ClosedForm => "closed_form",
            SolverMode::FrankWolfe => "frank_wolfe",
            SolverMode::ExactOracle => "exact_oracle",
            SolverMode::Uniform => "uniform",
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown solver mode `{s}`")))
    }
}

/// Solver parameters used by [`solve_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub fw_max_iter: usize,
    pub fw_tol: f64,
    pub diag_floor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            fw_max_iter: 50,
            fw_tol: 1e-8,
            diag_floor: DIAG_FLOOR,
        }
    }
}

/// `γ` for `Q` under the chosen mode.
pub fn solve_weights(gram: &GramMatrix, mode: SolverMode, settings: &SolverSettings) -> Result<BalanceWeights> {
    let weights = match mode {
        SolverMode::ClosedForm => closed_form(&gram.diag(), settings.diag_floor),
        SolverMode::FrankWolfe => solve_qp_frankwolfe(&gram.q, settings.fw_max_iter, settings.fw_tol)?.weights,
        SolverMode::ExactOracle => solve_qp_exact_small(&gram.q)?.weights,
        SolverMode::Uniform => BalanceWeights::uniform(gram.dim()),
    };
    debug_assert!(on_simplex(&weights.gamma, 1e-9));
    Ok(weights)
}
