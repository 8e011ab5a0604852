mod common;

use boomda::numerics::{covariance_matrix, frob_sq_diff, raw_diag_variance, seeded_rng, Matrix};
use common::{cov_oracle, to_na};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap())
    })
}

fn matrix_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        let m = move || prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap());
        (m(), m())
    })
}

proptest! {
    #[test]
    fn covariance_is_symmetric_psd_and_matches_oracle(z in matrix(2..30, 1..7)) {
        let c = covariance_matrix(&z).unwrap();
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                prop_assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
        let eig = SymmetricEigen::new(to_na(&c));
        prop_assert!(eig.eigenvalues.min() >= -1e-10);
        let scale = 1.0 + cov_oracle(&z).abs().max();
        prop_assert!((to_na(&c) - cov_oracle(&z)).abs().max() <= 1e-12 * scale);
    }

    #[test]
    fn diag_variance_is_covariance_diagonal(z in matrix(2..30, 1..7)) {
        let c = covariance_matrix(&z).unwrap();
        for (v, d) in raw_diag_variance(&z).unwrap().iter().zip(c.diag()) {
            prop_assert!((v - d).abs() <= 1e-12 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn frobenius_difference_is_symmetric((a, b) in matrix_pair()) {
        prop_assert_eq!(frob_sq_diff(&a, &b).unwrap(), frob_sq_diff(&b, &a).unwrap());
        prop_assert_eq!(frob_sq_diff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn matmul_matches_nalgebra(
        (a, b) in (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(r, k, c)| (
            prop::collection::vec(-3.0f64..3.0, r * k).prop_map(move |v| Matrix::new(r, k, v).unwrap()),
            prop::collection::vec(-3.0f64..3.0, k * c).prop_map(move |v| Matrix::new(k, c, v).unwrap()),
        ))
    ) {
        let ours = to_na(&a.matmul(&b).unwrap());
        let theirs = to_na(&a) * to_na(&b);
        prop_assert!((ours - &theirs).abs().max() <= 1e-12);
        let t = to_na(&a.transpose().t_matmul(&b).unwrap());
        prop_assert!((t - &theirs).abs().max() <= 1e-12);
        let u = to_na(&a.matmul_t(&b.transpose()).unwrap());
        prop_assert!((u - theirs).abs().max() <= 1e-12);
    }

    #[test]
    fn seeded_generation_is_reproducible(seed in any::<u64>(), stream in 0u64..1000) {
        let a = Matrix::random_normal(4, 3, &mut seeded_rng(seed, stream));
        let b = Matrix::random_normal(4, 3, &mut seeded_rng(seed, stream));
        prop_assert_eq!(a, b);
    }
}
