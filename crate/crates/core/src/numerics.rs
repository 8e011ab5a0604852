//! Dense row-major matrices, batch statistics and simplex helpers.
//!
//! Everything here is a pure function of its inputs. Flattening a matrix
//! into a vector always follows row-major order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Default lower bound applied to per-dimension variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Seeded generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

/// Generator for `seed` on an independent substream.
pub fn seeded_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn random_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
        Self { rows, cols, data }
    }

    pub fn random_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape(format!(
                "t_matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let arow = self.row(n);
            let brow = other.row(n);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::shape(format!(
                "bias of length {} on {} columns",
                bias.len(),
                self.cols
            )));
        }
        for i in 0..self.rows {
            for (v, b) in self.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.add_scaled(other, 1.0)
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "add {:?} to {:?}",
                other.shape(),
                self.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Matrix> {
        if start + width > self.cols {
            return Err(Error::shape(format!(
                "column block {start}..{} of {} columns",
                start + width,
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + width]);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    /// Horizontal concatenation in the given order.
    pub fn hconcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::shape("hconcat with differing row counts"));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Largest entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Column-wise arithmetic mean.
pub fn batch_mean(r: &Matrix) -> Result<Vec<f64>> {
    if r.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut mean = r.column_sums();
    let n = r.rows() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Unbiased per-column variance without flooring.
pub fn raw_diag_variance(r: &Matrix) -> Result<Vec<f64>> {
    if r.rows() < 2 {
        return Err(Error::VarianceUndefined(r.rows()));
    }
    let mean = batch_mean(r)?;
    let mut var = vec![0.0; r.cols()];
    for i in 0..r.rows() {
        for ((v, x), mu) in var.iter_mut().zip(r.row(i)).zip(&mean) {
            let c = x - mu;
            *v += c * c;
        }
    }
    let denom = (r.rows() - 1) as f64;
    for v in &mut var {
        *v /= denom;
    }
    Ok(var)
}

/// Unbiased per-column variance, each entry clamped below by `floor`.
pub fn diag_variance(r: &Matrix, floor: f64) -> Result<Vec<f64>> {
    Ok(raw_diag_variance(r)?
        .into_iter()
        .map(|v| v.max(floor))
        .collect())
}

/// Mean and floored diagonal variance of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub diag_var: Vec<f64>,
}

impl BatchStats {
    pub fn of(r: &Matrix, floor: f64) -> Result<Self> {
        if floor <= 0.0 {
            return Err(Error::invalid("variance floor must be positive"));
        }
        Ok(Self {
            mean: batch_mean(r)?,
            diag_var: diag_variance(r, floor)?,
        })
    }
}

/// Batch with its column means removed.
pub fn centered(r: &Matrix) -> Result<Matrix> {
    let mean = batch_mean(r)?;
    let mut out = r.clone();
    for i in 0..out.rows() {
        for (v, mu) in out.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    Ok(out)
}

/// Centered second-moment matrix with divisor `N − 1`, symmetrized.
pub fn covariance_matrix(r: &Matrix) -> Result<Matrix> {
    if r.rows() < 2 {
        return Err(Error::VarianceUndefined(r.rows()));
    }
    let c = centered(r)?;
    let mut cov = c.t_matmul(&c)?;
    cov.scale(1.0 / (r.rows() - 1) as f64);
    let d = cov.rows();
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (cov.get(i, j) + cov.get(j, i));
            cov.set(i, j, s);
            cov.set(j, i, s);
        }
    }
    Ok(cov)
}

/// Squared Frobenius distance `Σ (A − B)²`.
pub fn frob_sq_diff(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "frobenius distance between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Every point of the simplex in `R^m` whose entries are multiples of `step`.
///
/// Points are listed in lexicographic order of their coordinates.
pub fn simplex_grid(m: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    let k = grid_resolution(m, step)?;
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fill_grid(&mut counts, 0, k, k, &mut out);
    Ok(out)
}

/// Number of steps `1/step`, validated to be integral.
pub fn grid_resolution(m: usize, step: f64) -> Result<usize> {
    if m == 0 {
        return Err(Error::invalid("simplex dimension must be at least 1"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("grid step {step} outside (0, 1]")));
    }
    let inv = 1.0 / step;
    let k = inv.round();
    if (inv - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::invalid(format!("1/step = {inv} is not integral")));
    }
    Ok(k as usize)
}

fn fill_grid(counts: &mut [usize], pos: usize, left: usize, k: usize, out: &mut Vec<Vec<f64>>) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        out.push(counts.iter().map(|&c| c as f64 / k as f64).collect());
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        fill_grid(counts, pos + 1, left - c, k, out);
    }
}

/// `γᵀ Q γ`
pub fn quad_form(q: &Matrix, gamma: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..q.rows() {
        acc += gamma[i] * dot(q.row(i), gamma);
    }
    acc
}

/// `Q γ`
pub fn mat_vec(q: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..q.rows()).map(|i| dot(q.row(i), v)).collect()
}

/// True when `γ ≥ −tol` entrywise and `|Σγ − 1| ≤ tol`.
pub fn on_simplex(gamma: &[f64], tol: f64) -> bool {
    !gamma.is_empty()
        && gamma.iter().all(|&g| g.is_finite() && g >= -tol)
        && (gamma.iter().sum::<f64>() - 1.0).abs() <= tol
}
