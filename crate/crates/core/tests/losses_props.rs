mod common;

use boomda::losses::{coral_loss, coral_loss_grad, gaussian_entropy};
use boomda::numerics::Matrix;
use common::coral_oracle;
use proptest::prelude::*;

fn batch(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn two_batches() -> impl Strategy<Value = (Matrix, Matrix)> {
    (2usize..12, 2usize..12, 1usize..5).prop_flat_map(|(ns, nt, d)| (batch(ns, d), batch(nt, d)))
}

proptest! {
    #[test]
    fn coral_matches_oracle_and_is_symmetric((a, b) in two_batches()) {
        let l = coral_loss(&a, &b).unwrap();
        prop_assert!((l - coral_oracle(&a, &b)).abs() <= 1e-10 * (1.0 + l));
        prop_assert!((l - coral_loss(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + l));
        prop_assert_eq!(coral_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn coral_ignores_row_order((a, b) in two_batches(), shift in 0usize..11) {
        let n = a.rows();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let l = coral_loss(&a, &b).unwrap();
        let p = coral_loss(&a.select_rows(&perm), &b).unwrap();
        prop_assert!((l - p).abs() <= 1e-10 * (1.0 + l));
    }

    #[test]
    fn coral_gradient_matches_finite_differences((a, b) in two_batches()) {
        let (_, gs, gt) = coral_loss_grad(&a, &b).unwrap();
        let h = 1e-6;
        for (which, grad) in [(0, &gs), (1, &gt)] {
            let base = if which == 0 { &a } else { &b };
            for k in 0..base.as_slice().len() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus.as_mut_slice()[k] += h;
                minus.as_mut_slice()[k] -= h;
                let f = |m: &Matrix| if which == 0 { coral_loss(m, &b) } else { coral_loss(&a, m) }.unwrap();
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = grad.as_slice()[k];
                prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "entry {k}: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn entropy_increases_in_each_variance(
        var in prop::collection::vec(1e-3f64..1e3, 1..6),
        idx in 0usize..6,
        factor in 1.001f64..10.0,
    ) {
        let k = idx % var.len();
        let mut bigger = var.clone();
        bigger[k] *= factor;
        prop_assert!(gaussian_entropy(&bigger).unwrap() > gaussian_entropy(&var).unwrap());
    }
}
