//! Voting pseudo-labels for target samples.
//!
//! Each of the `M+1` heads votes for its argmax class. A sample is kept when
//! some class collects at least `M_v` votes, and it is labeled with the class
//! holding the most votes. Ties always resolve to the lowest class index.

use serde::Serialize;

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Per-sample vote tallies, `rows × classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteCounts {
    rows: usize,
    classes: usize,
    counts: Vec<u32>,
}

impl VoteCounts {
    pub fn zeros(rows: usize, classes: usize) -> Self {
        Self {
            rows,
            classes,
            counts: vec![0; rows * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::shape("vote rows of differing length"));
        }
        Ok(Self {
            rows: rows.len(),
            classes,
            counts: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, n: usize) -> &[u32] {
        &self.counts[n * self.classes..(n + 1) * self.classes]
    }

    pub fn row_max(&self, n: usize) -> u32 {
        self.row(n).iter().copied().max().unwrap_or(0)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One vote per head per sample for the head's argmax class.
pub fn vote(preds: &[Matrix]) -> Result<VoteCounts> {
    let first = preds
        .first()
        .ok_or_else(|| Error::invalid("no predictions to vote with"))?;
    let (rows, classes) = first.shape();
    if let Some(p) = preds.iter().find(|p| p.shape() != (rows, classes)) {
        return Err(Error::shape(format!(
            "prediction of shape {:?}, expected {:?}",
            p.shape(),
            (rows, classes)
        )));
    }
    let mut votes = VoteCounts::zeros(rows, classes);
    for p in preds {
        for n in 0..rows {
            votes.counts[n * classes + argmax(p.row(n))] += 1;
        }
    }
    Ok(votes)
}

/// Samples whose top class received at least `min_votes` votes.
///
/// `voters` is the number of heads that voted (`M+1`).
pub fn select(votes: &VoteCounts, min_votes: usize, voters: usize) -> Result<Vec<usize>> {
    if min_votes < 1 || min_votes > voters {
        return Err(Error::invalid(format!(
            "vote threshold {min_votes} outside [1, {voters}]"
        )));
    }
    Ok((0..votes.rows())
        .filter(|&n| votes.row_max(n) as usize >= min_votes)
        .collect())
}

/// Majority class for each index.
pub fn assign(votes: &VoteCounts, indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|&n| argmax(votes.row(n))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub vote_counts: VoteCounts,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Votes, selects and labels in one go.
pub fn pseudo_label(preds: &[Matrix], min_votes: usize) -> Result<PseudoLabelSet> {
    let vote_counts = vote(preds)?;
    let indices = select(&vote_counts, min_votes, preds.len())?;
    let labels = assign(&vote_counts, &indices);
    Ok(PseudoLabelSet {
        indices,
        labels,
        vote_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlAccuracy {
    pub selected: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Fraction of selected samples whose pseudo label is correct; 0 when none are selected.
pub fn pl_accuracy(pseudo: &PseudoLabelSet, true_labels: &[usize]) -> PlAccuracy {
    let selected = pseudo.indices.len();
    let correct = pseudo
        .indices
        .iter()
        .zip(&pseudo.labels)
        .filter(|(&n, &y)| true_labels.get(n) == Some(&y))
        .count();
    let accuracy = if selected == 0 {
        0.0
    } else {
        correct as f64 / selected as f64
    };
    PlAccuracy {
        selected,
        correct,
        accuracy,
    }
}
