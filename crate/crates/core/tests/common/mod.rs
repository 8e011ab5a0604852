//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use boomda::balance::GradientBlocks;
use boomda::losses::accumulate_ca;
use boomda::network::{backward_to_representations, ForwardPass, LossTape, ModelParams};
use boomda::numerics::Matrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Sample covariance with divisor `N − 1`, computed through nalgebra.
pub fn cov_oracle(z: &Matrix) -> DMatrix<f64> {
    let a = to_na(z);
    let n = a.nrows() as f64;
    let mean = a.row_mean();
    let mut c = a.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.transpose() * &c / (n - 1.0)
}

/// `‖cov(Z_t) − cov(Z_s)‖_F²`.
pub fn coral_oracle(zs: &Matrix, zt: &Matrix) -> f64 {
    (cov_oracle(zt) - cov_oracle(zs)).norm_squared()
}

/// Dense `P` with row `m < M` holding `g_m` in block `m` and row `M` holding every `g^m`.
pub fn dense_p(blocks: &GradientBlocks) -> DMatrix<f64> {
    let m = blocks.g.len();
    let widths: Vec<usize> = blocks.g.iter().map(Vec::len).collect();
    let total: usize = widths.iter().sum();
    let mut p = DMatrix::zeros(m + 1, total);
    let mut offset = 0;
    for k in 0..m {
        for (j, v) in blocks.g[k].iter().enumerate() {
            p[(k, offset + j)] = *v;
        }
        for (j, v) in blocks.g_mm[k].iter().enumerate() {
            p[(m, offset + j)] = *v;
        }
        offset += widths[k];
    }
    p
}

pub fn random_blocks(rng: &mut impl Rng, modalities: usize, len: usize) -> GradientBlocks {
    let mut g = Vec::new();
    let mut g_mm = Vec::new();
    for _ in 0..modalities {
        let scale = rng.random_range(-1.0f64..1.0).exp();
        g.push((0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect());
        g_mm.push((0..len).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    GradientBlocks::new(g, g_mm).unwrap()
}

/// Random PSD matrix `A Aᵀ / k` with `A` of size `dim × k`; `k < dim` gives rank deficiency.
pub fn random_psd(rng: &mut impl Rng, dim: usize) -> Matrix {
    let k = rng.random_range(1..=dim + 2);
    let a = DMatrix::from_fn(dim, k, |_, _| rng.random_range(-1.0..1.0));
    let q = &a * a.transpose() / k as f64;
    from_na(&(0.5 * (&q + q.transpose())))
}

pub fn quad(q: &DMatrix<f64>, g: &[f64]) -> f64 {
    let v = DVector::from_column_slice(g);
    (v.transpose() * q * &v)[(0, 0)]
}

/// Minimum of `γᵀQγ` over every simplex point whose coordinates are multiples of `1/k`.
///
/// Dimensions up to 4 are enumerated exhaustively. The last two coordinates
/// are handled in closed form along each line `(…, a, rest − a)`, which is a
/// one-dimensional convex quadratic in the integer `a`.
pub fn grid_min(q: &Matrix, k: usize) -> f64 {
    let n = q.rows();
    assert!((2..=4).contains(&n), "grid oracle covers dimensions 2 to 4");
    let mut qa = [[0.0f64; 4]; 4];
    for (i, row) in qa.iter_mut().enumerate().take(n) {
        for (j, v) in row.iter_mut().enumerate().take(n) {
            *v = q.get(i, j);
        }
    }
    let eval = |g: &[f64; 4]| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += g[i] * qa[i][j] * g[j];
            }
        }
        acc
    };
    let kf = k as f64;
    // γ = base + (a/k)·(e_{n−2} − e_{n−1}) with base carrying `rest/k` in the last slot.
    let line = |prefix: &[usize; 2], rest: usize| {
        let mut base = [0.0f64; 4];
        for i in 0..n - 2 {
            base[i] = prefix[i] as f64 / kf;
        }
        base[n - 1] = rest as f64 / kf;
        let (u, v) = (n - 2, n - 1);
        // f(a) = f(base) + c1·a + c2·a² along the direction (e_u − e_v)/k
        let mut c1 = 0.0;
        for j in 0..n {
            c1 += 2.0 * (qa[u][j] - qa[v][j]) * base[j] / kf;
        }
        let c2 = (qa[u][u] - 2.0 * qa[u][v] + qa[v][v]) / (kf * kf);
        let mut best = f64::INFINITY;
        let mut try_a = |a: f64| {
            let mut g = base;
            g[u] += a / kf;
            g[v] -= a / kf;
            best = best.min(eval(&g));
        };
        try_a(0.0);
        try_a(rest as f64);
        if c2 > 0.0 {
            let a = (-c1 / (2.0 * c2)).clamp(0.0, rest as f64);
            try_a(a.floor());
            try_a(a.ceil());
        }
        best
    };
    let mut best = f64::INFINITY;
    match n {
        2 => best = line(&[0, 0], k),
        3 => {
            for a in 0..=k {
                best = best.min(line(&[a, 0], k - a));
            }
        }
        _ => {
            for a in 0..=k {
                for b in 0..=k - a {
                    best = best.min(line(&[a, b], k - a - b));
                }
            }
        }
    }
    best
}

/// Minimum of `γᵀQγ` over lattice points (spacing `1/k`) within `radius`
/// steps of `center` in every free coordinate. This is an upper bound on the
/// full lattice minimum.
pub fn local_grid_min(q: &Matrix, k: usize, center: &[f64], radius: i64) -> f64 {
    let n = q.rows();
    let qq = to_na(q);
    let base: Vec<i64> = center.iter().map(|c| (c * k as f64).round() as i64).collect();
    let mut best = f64::INFINITY;
    let span = 2 * radius + 1;
    let total = (span as usize).pow((n - 1) as u32);
    for code in 0..total {
        let mut c = code;
        let mut counts = vec![0i64; n];
        let mut used = 0;
        let mut ok = true;
        for i in 0..n - 1 {
            let off = (c % span as usize) as i64 - radius;
            c /= span as usize;
            counts[i] = base[i] + off;
            if counts[i] < 0 {
                ok = false;
                break;
            }
            used += counts[i];
        }
        if !ok || used > k as i64 {
            continue;
        }
        counts[n - 1] = k as i64 - used;
        let g: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
        best = best.min(quad(&qq, &g));
    }
    best
}

/// Gradient blocks from `M+1` separate reverse passes, one per alignment loss.
pub fn individual_pass_blocks(pass: &ForwardPass, params: &ModelParams) -> GradientBlocks {
    let m = pass.modalities();
    let per_head: Vec<_> = (0..=m)
        .map(|h| {
            let mut tape = LossTape::new(pass);
            accumulate_ca(pass, h, 1.0, &mut tape).unwrap();
            backward_to_representations(pass, params, &tape).unwrap().1
        })
        .collect();
    let flat = |h: usize, k: usize| {
        let mut v = per_head[h].source[k].as_slice().to_vec();
        v.extend_from_slice(per_head[h].target[k].as_slice());
        v
    };
    GradientBlocks::new((0..m).map(|k| flat(k, k)).collect(), (0..m).map(|k| flat(m, k)).collect()).unwrap()
}

/// Weighted F1 computed from a confusion matrix built independently.
pub fn weighted_f1_oracle(truth: &[usize], pred: &[usize], classes: usize) -> f64 {
    let n = truth.len() as f64;
    let mut total = 0.0;
    for c in 0..classes {
        let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != c && p == c).count() as f64;
        let fneg = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p != c).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += (tp + fneg) / n * f1;
    }
    total
}
