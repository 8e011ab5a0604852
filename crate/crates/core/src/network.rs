//! Per-modality encoders and classifiers with hand-derived gradients.
//!
//! Each modality `m` has a two-layer tanh perceptron `d_m → h → d` producing
//! its representation `Z_m`, and a softmax classifier on top of it. One extra
//! classifier reads the concatenation `[Z_1, …, Z_M]` and provides the
//! multimodal prediction.
//!
//! Backpropagation is organized around a [`LossTape`]: losses deposit their
//! upstream gradients with respect to logits and representations, then
//! [`backward`] pushes them through the classifiers and encoders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{seeded_rng, Matrix};
use crate::{Error, Result};

/// Affine layer `x ↦ x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Matrix::random_uniform(fan_in, fan_out, -bound, bound, rng),
            bias: Matrix::random_uniform(1, fan_out, -bound, bound, rng),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.fan_in() {
            return Err(Error::shape(format!(
                "layer expects {} input columns, got {}",
                self.fan_in(),
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.weight)?;
        out.add_row_vector(self.bias.as_slice())?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub hidden: Dense,
    pub output: Dense,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.hidden.fan_in()
    }

    pub fn rep_dim(&self) -> usize {
        self.output.fan_out()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub layer: Dense,
}

impl ClassifierParams {
    pub fn input_dim(&self) -> usize {
        self.layer.fan_in()
    }

    pub fn classes(&self) -> usize {
        self.layer.fan_out()
    }
}

/// Layer sizes shared by every modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dims: Vec<usize>,
    pub hidden: usize,
    pub rep_dim: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn modalities(&self) -> usize {
        self.input_dims.len()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dims.is_empty() || self.input_dims.contains(&0) {
            return Err(Error::invalid("every modality needs a positive input dimension"));
        }
        if self.hidden == 0 || self.rep_dim == 0 || self.classes < 2 {
            return Err(Error::invalid(
                "hidden width and representation dimension must be positive, classes ≥ 2",
            ));
        }
        Ok(())
    }
}

/// Encoders for modalities `1..=M` and classifiers for heads `1..=M+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoders: Vec<EncoderParams>,
    pub classifiers: Vec<ClassifierParams>,
}

impl ModelParams {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded_rng(seed, 0x1417);
        let encoders = arch
            .input_dims
            .iter()
            .map(|&dm| EncoderParams {
                hidden: Dense::init(dm, arch.hidden, &mut rng),
                output: Dense::init(arch.hidden, arch.rep_dim, &mut rng),
            })
            .collect();
        let classifiers = Self::head_inputs(arch)
            .map(|k| ClassifierParams {
                layer: Dense::init(k, arch.classes, &mut rng),
            })
            .collect();
        Ok(Self {
            encoders,
            classifiers,
        })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoders: arch
                .input_dims
                .iter()
                .map(|&dm| EncoderParams {
                    hidden: Dense::zeros(dm, arch.hidden),
                    output: Dense::zeros(arch.hidden, arch.rep_dim),
                })
                .collect(),
            classifiers: Self::head_inputs(arch)
                .map(|k| ClassifierParams {
                    layer: Dense::zeros(k, arch.classes),
                })
                .collect(),
        })
    }

    fn head_inputs(arch: &Architecture) -> impl Iterator<Item = usize> {
        let m = arch.modalities();
        let d = arch.rep_dim;
        (0..=m).map(move |i| if i < m { d } else { m * d })
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.scale(0.0);
        }
        out
    }

    pub fn modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn classes(&self) -> usize {
        self.classifiers[0].classes()
    }

    pub fn rep_dim(&self) -> usize {
        self.encoders[0].rep_dim()
    }

    /// All trainable tensors in a fixed order: encoder layers, then classifiers.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for e in &self.encoders {
            out.extend([&e.hidden.weight, &e.hidden.bias, &e.output.weight, &e.output.bias]);
        }
        for c in &self.classifiers {
            out.extend([&c.layer.weight, &c.layer.bias]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            out.push(&mut e.hidden.weight);
            out.push(&mut e.hidden.bias);
            out.push(&mut e.output.weight);
            out.push(&mut e.output.bias);
        }
        for c in &mut self.classifiers {
            out.push(&mut c.layer.weight);
            out.push(&mut c.layer.bias);
        }
        out
    }

    /// Number of encoder tensors at the front of [`Self::tensors`].
    pub fn encoder_tensor_count(&self) -> usize {
        4 * self.encoders.len()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn check_consistent(&self) -> Result<()> {
        let m = self.encoders.len();
        if m == 0 || self.classifiers.len() != m + 1 {
            return Err(Error::shape(format!(
                "{} encoders need {} classifiers, found {}",
                m,
                m + 1,
                self.classifiers.len()
            )));
        }
        let d = self.rep_dim();
        let c = self.classes();
        for (i, e) in self.encoders.iter().enumerate() {
            if e.rep_dim() != d || e.hidden.fan_out() != e.output.fan_in() {
                return Err(Error::shape(format!("encoder {i} has inconsistent layers")));
            }
        }
        for (i, cl) in self.classifiers.iter().enumerate() {
            let want = if i < m { d } else { m * d };
            if cl.input_dim() != want || cl.classes() != c {
                return Err(Error::shape(format!(
                    "classifier {i} maps {}→{}, expected {want}→{c}",
                    cl.input_dim(),
                    cl.classes()
                )));
            }
        }
        Ok(())
    }
}

/// Encoder forward pass: `tanh(x·W₁ + b₁)·W₂ + b₂`.
pub fn encode(x: &Matrix, enc: &EncoderParams) -> Result<Matrix> {
    Ok(encode_cached(x, enc)?.1)
}

fn encode_cached(x: &Matrix, enc: &EncoderParams) -> Result<(Matrix, Matrix)> {
    let hidden = enc.hidden.forward(x)?.map(f64::tanh);
    let z = enc.output.forward(&hidden)?;
    Ok((hidden, z))
}

pub fn logits(z: &Matrix, clf: &ClassifierParams) -> Result<Matrix> {
    clf.layer.forward(z)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Class probabilities of a classifier head.
pub fn classify(z: &Matrix, clf: &ClassifierParams) -> Result<Matrix> {
    Ok(softmax_rows(&logits(z, clf)?))
}

/// Per-modality representations `Z_1..Z_M` and their concatenation `Z_{M+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub z: Vec<Matrix>,
    pub concat: Matrix,
}

impl RepresentationSet {
    pub fn new(z: Vec<Matrix>) -> Result<Self> {
        let refs: Vec<&Matrix> = z.iter().collect();
        let concat = Matrix::hconcat(&refs)?;
        Ok(Self { z, concat })
    }

    pub fn modalities(&self) -> usize {
        self.z.len()
    }

    /// Representation of head `m`; `m == M` is the concatenation.
    pub fn head(&self, m: usize) -> &Matrix {
        if m < self.z.len() {
            &self.z[m]
        } else {
            &self.concat
        }
    }

    pub fn rows(&self) -> usize {
        self.concat.rows()
    }
}

/// Cached forward state for one domain.
#[derive(Debug, Clone)]
pub struct DomainPass {
    pub inputs: Vec<Matrix>,
    pub hidden: Vec<Matrix>,
    pub reps: RepresentationSet,
    /// Probabilities of all `M+1` heads.
    pub probs: Vec<Matrix>,
}

impl DomainPass {
    fn run(inputs: &[Matrix], params: &ModelParams) -> Result<Self> {
        if inputs.len() != params.modalities() {
            return Err(Error::shape(format!(
                "batch has {} modalities, model has {}",
                inputs.len(),
                params.modalities()
            )));
        }
        let rows = inputs.first().map_or(0, Matrix::rows);
        if inputs.iter().any(|x| x.rows() != rows) {
            return Err(Error::shape("modalities have differing sample counts"));
        }
        let mut hidden = Vec::with_capacity(inputs.len());
        let mut z = Vec::with_capacity(inputs.len());
        for (x, enc) in inputs.iter().zip(&params.encoders) {
            let (h, zm) = encode_cached(x, enc)?;
            hidden.push(h);
            z.push(zm);
        }
        let reps = RepresentationSet::new(z)?;
        let probs = params
            .classifiers
            .iter()
            .enumerate()
            .map(|(m, clf)| classify(reps.head(m), clf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs: inputs.to_vec(),
            hidden,
            reps,
            probs,
        })
    }

    pub fn rows(&self) -> usize {
        self.reps.rows()
    }

    /// Multimodal head probabilities.
    pub fn multimodal_probs(&self) -> &Matrix {
        self.probs.last().expect("at least one head")
    }
}

/// Forward state for a source batch and a target batch.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub source: DomainPass,
    pub target: DomainPass,
}

impl ForwardPass {
    pub fn modalities(&self) -> usize {
        self.source.reps.modalities()
    }
}

/// Runs every encoder and all `M+1` heads on a single batch.
pub fn forward_domain(inputs: &[Matrix], params: &ModelParams) -> Result<DomainPass> {
    params.check_consistent()?;
    DomainPass::run(inputs, params)
}

/// Runs every encoder and all `M+1` heads on both domains.
pub fn forward_all(source: &[Matrix], target: &[Matrix], params: &ModelParams) -> Result<ForwardPass> {
    params.check_consistent()?;
    Ok(ForwardPass {
        source: DomainPass::run(source, params)?,
        target: DomainPass::run(target, params)?,
    })
}

/// Upstream gradients deposited by losses for one domain.
#[derive(Debug, Clone)]
pub struct DomainSeeds {
    /// `∂L/∂logits` for each of the `M+1` heads.
    pub logits: Vec<Matrix>,
    /// `∂L/∂Z` for each head input; entry `M` is the concatenation.
    pub reps: Vec<Matrix>,
}

impl DomainSeeds {
    fn zeros_for(pass: &DomainPass) -> Self {
        let m = pass.reps.modalities();
        Self {
            logits: pass
                .probs
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
            reps: (0..=m)
                .map(|h| {
                    let z = pass.reps.head(h);
                    Matrix::zeros(z.rows(), z.cols())
                })
                .collect(),
        }
    }
}

/// Collected upstream gradients of a scalar loss built from a [`ForwardPass`].
#[derive(Debug, Clone)]
pub struct LossTape {
    pub source: DomainSeeds,
    pub target: DomainSeeds,
}

impl LossTape {
    pub fn new(pass: &ForwardPass) -> Self {
        Self {
            source: DomainSeeds::zeros_for(&pass.source),
            target: DomainSeeds::zeros_for(&pass.target),
        }
    }

    pub fn domain_mut(&mut self, domain: Domain) -> &mut DomainSeeds {
        match domain {
            Domain::Source => &mut self.source,
            Domain::Target => &mut self.target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// Total gradients with respect to `Z_1..Z_M` in both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct RepGrads {
    pub source: Vec<Matrix>,
    pub target: Vec<Matrix>,
}

/// Parameter gradients plus representation gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub reps: RepGrads,
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient(what.to_string()))
    }
}

fn classifier_backward(
    pass: &DomainPass,
    seeds: &DomainSeeds,
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Result<Vec<Matrix>> {
    let m = pass.reps.modalities();
    let d = params.rep_dim();
    let mut dz: Vec<Matrix> = Vec::with_capacity(m);
    let mut dconcat = seeds.reps[m].clone();
    for h in 0..=m {
        let dlogits = &seeds.logits[h];
        let z = pass.reps.head(h);
        let clf = &params.classifiers[h].layer;
        let g = &mut grads.classifiers[h].layer;
        g.weight.add_assign(&z.t_matmul(dlogits)?)?;
        for (b, s) in g.bias.as_mut_slice().iter_mut().zip(dlogits.column_sums()) {
            *b += s;
        }
        let back = dlogits.matmul_t(&clf.weight)?;
        if h < m {
            let mut total = seeds.reps[h].clone();
            total.add_assign(&back)?;
            dz.push(total);
        } else {
            dconcat.add_assign(&back)?;
        }
    }
    for (k, dzk) in dz.iter_mut().enumerate() {
        dzk.add_assign(&dconcat.column_block(k * d, d)?)?;
    }
    Ok(dz)
}

/// Pushes the tape through the classifier heads only.
///
/// Returns classifier gradients (encoder entries zero) and the total gradient
/// with respect to each modality representation.
pub fn backward_to_representations(
    pass: &ForwardPass,
    params: &ModelParams,
    tape: &LossTape,
) -> Result<(ModelParams, RepGrads)> {
    let mut grads = params.zeros_like();
    let source = classifier_backward(&pass.source, &tape.source, params, &mut grads)?;
    let target = classifier_backward(&pass.target, &tape.target, params, &mut grads)?;
    for (k, (s, t)) in source.iter().zip(&target).enumerate() {
        check_finite(s, &format!("source representation {}", k + 1))?;
        check_finite(t, &format!("target representation {}", k + 1))?;
    }
    Ok((grads, RepGrads { source, target }))
}

fn encoder_backward(
    x: &Matrix,
    hidden: &Matrix,
    dz: &Matrix,
    enc: &EncoderParams,
    g: &mut EncoderParams,
) -> Result<()> {
    g.output.weight.add_assign(&hidden.t_matmul(dz)?)?;
    for (b, s) in g.output.bias.as_mut_slice().iter_mut().zip(dz.column_sums()) {
        *b += s;
    }
    let mut da = dz.matmul_t(&enc.output.weight)?;
    for (a, h) in da.as_mut_slice().iter_mut().zip(hidden.as_slice()) {
        *a *= 1.0 - h * h;
    }
    g.hidden.weight.add_assign(&x.t_matmul(&da)?)?;
    for (b, s) in g.hidden.bias.as_mut_slice().iter_mut().zip(da.column_sums()) {
        *b += s;
    }
    Ok(())
}

/// Full reverse pass: gradients for every trainable parameter.
pub fn backward(pass: &ForwardPass, params: &ModelParams, tape: &LossTape) -> Result<Gradients> {
    let (mut grads, reps) = backward_to_representations(pass, params, tape)?;
    for (dom, dzs) in [(&pass.source, &reps.source), (&pass.target, &reps.target)] {
        for (m, dz) in dzs.iter().enumerate() {
            encoder_backward(
                &dom.inputs[m],
                &dom.hidden[m],
                dz,
                &params.encoders[m],
                &mut grads.encoders[m],
            )?;
        }
    }
    for (i, t) in grads.tensors().iter().enumerate() {
        check_finite(t, &format!("parameter tensor {i}"))?;
    }
    Ok(Gradients {
        params: grads,
        reps,
    })
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        let gts = grads.tensors();
        let mut pts = params.tensors_mut();
        if gts.len() != pts.len() || gts.len() != self.first.len() {
            return Err(Error::shape("adam: gradient layout differs from parameters"));
        }
        for (i, (g, p)) in gts.iter().zip(pts.iter()).enumerate() {
            if g.shape() != p.shape() || g.shape() != self.first[i].shape() {
                return Err(Error::shape(format!("adam: tensor {i} shape mismatch")));
            }
            check_finite(g, &format!("parameter tensor {i}"))?;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (g, p)) in gts.iter().zip(pts.iter_mut()).enumerate() {
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for (((pj, &gj), mj), vj) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let mhat = *mj / c1;
                let vhat = *vj / c2;
                *pj -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
