use boomda::numerics::{seeded_rng, Matrix};
use boomda::pseudolabel::{assign, pseudo_label, select, vote};
use proptest::prelude::*;

fn predictions(seed: u64, heads: usize, rows: usize, classes: usize) -> Vec<Matrix> {
    let mut rng = seeded_rng(seed, 0);
    (0..heads)
        .map(|_| Matrix::random_uniform(rows, classes, 0.0, 1.0, &mut rng).map(|v| (v * 3.0).floor()))
        .collect()
}

proptest! {
    #[test]
    fn vote_rows_sum_to_head_count(seed in any::<u64>(), heads in 1usize..7, rows in 1usize..20, classes in 1usize..6) {
        let votes = vote(&predictions(seed, heads, rows, classes)).unwrap();
        for n in 0..rows {
            prop_assert_eq!(votes.row(n).iter().sum::<u32>() as usize, heads);
        }
    }

    #[test]
    fn selection_shrinks_as_threshold_rises(seed in any::<u64>(), heads in 1usize..7, rows in 1usize..20, classes in 1usize..6) {
        let votes = vote(&predictions(seed, heads, rows, classes)).unwrap();
        let mut prev: Option<Vec<usize>> = None;
        for mv in 1..=heads {
            let cur = select(&votes, mv, heads).unwrap();
            if let Some(p) = &prev {
                prop_assert!(cur.iter().all(|i| p.contains(i)));
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn majority_threshold_has_a_unique_winner(seed in any::<u64>(), heads in 1usize..7, rows in 1usize..20, classes in 1usize..6) {
        let preds = predictions(seed, heads, rows, classes);
        let mv = heads / 2 + 1;
        let set = pseudo_label(&preds, mv).unwrap();
        prop_assert_eq!(&set.labels, &assign(&set.vote_counts, &set.indices));
        for (&n, &label) in set.indices.iter().zip(&set.labels) {
            let reaching: Vec<usize> = (0..classes).filter(|&c| set.vote_counts.row(n)[c] as usize >= mv).collect();
            prop_assert_eq!(reaching, vec![label]);
        }
    }
}
