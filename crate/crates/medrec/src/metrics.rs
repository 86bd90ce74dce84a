//! Evaluation metrics over predicted and true medication sets.
//!
//! Sets are sorted, duplicate-free index slices. Per-visit values are
//! averaged without weighting by the caller; the both-empty convention for
//! Jaccard and F1 is 1.0.

use thiserror::Error;

use crate::data::DdiMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("average precision needs at least one positive label")]
    NoPositiveLabels,
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// |pred ∩ truth| / |pred ∪ truth|; 1.0 when both sets are empty.
pub fn jaccard(pred: &[usize], truth: &[usize]) -> f64 {
    debug_assert!(pred.windows(2).all(|w| w[0] < w[1]), "pred not a sorted set");
    debug_assert!(truth.windows(2).all(|w| w[0] < w[1]), "truth not a sorted set");
    if pred.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let inter = intersection_size(pred, truth);
    let union = pred.len() + truth.len() - inter;
    inter as f64 / union as f64
}

/// Harmonic mean of precision and recall; 0.0 when either is undefined with
/// a non-empty counterpart, 1.0 when both sets are empty.
pub fn f1(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() && truth.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let inter = intersection_size(pred, truth) as f64;
    let p = inter / pred.len() as f64;
    let r = inter / truth.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Average precision: mean over positives of precision at that positive's
/// rank, scores descending, ties broken by ascending index.
pub fn prauc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositiveLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// Fraction of recommended unordered medication pairs that are interaction
/// edges, pooled over visits; 0.0 when no visit recommends a pair.
pub fn ddi_rate(pred_sets: &[Vec<usize>], ddi: &DdiMatrix) -> f64 {
    let mut bad = 0usize;
    let mut total = 0usize;
    for set in pred_sets {
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                total += 1;
                if ddi.is_edge(set[i], set[j]) {
                    bad += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Scores, thresholded set and truth set for one visit.
#[derive(Clone, Debug)]
pub struct VisitPrediction {
    pub scores: Vec<f64>,
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
}

impl VisitPrediction {
    /// Applies `score >= threshold` to build the predicted set.
    pub fn from_scores(scores: Vec<f64>, truth: Vec<usize>, threshold: f64) -> Self {
        let predicted = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= threshold)
            .map(|(i, _)| i)
            .collect();
        VisitPrediction {
            scores,
            predicted,
            truth,
        }
    }

    pub fn labels(&self, n: usize) -> Vec<bool> {
        let mut out = vec![false; n];
        for &t in &self.truth {
            out[t] = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&[1, 2, 3], &[2, 3, 4]), 0.5);
        assert_eq!(jaccard(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(jaccard(&[], &[]), 1.0);
        assert_eq!(jaccard(&[1], &[2]), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert!((f1(&[1, 2], &[2]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1(&[1, 2], &[3, 4]), 0.0);
        assert_eq!(f1(&[], &[1]), 0.0);
        assert_eq!(f1(&[], &[]), 1.0);
    }

    #[test]
    fn unit_iff_equal_sets() {
        let sets: Vec<Vec<usize>> = (0..32u32)
            .map(|bits| (0..5).filter(|i| bits >> i & 1 == 1).collect())
            .collect();
        for a in &sets {
            for b in &sets {
                let j = jaccard(a, b);
                let f = f1(a, b);
                assert!((0.0..=1.0).contains(&j));
                assert!((0.0..=1.0).contains(&f));
                assert_eq!(j == 1.0, a == b);
                assert_eq!(f == 1.0, a == b);
            }
        }
    }

    #[test]
    fn prauc_examples() {
        assert_eq!(prauc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(prauc(&[0.9, 0.1], &[false, true]).unwrap(), 0.5);
        assert_eq!(prauc(&[0.2, 0.7, 0.5], &[true, true, true]).unwrap(), 1.0);
        assert_eq!(
            prauc(&[0.1], &[false]).unwrap_err(),
            MetricsError::NoPositiveLabels
        );
        assert!(matches!(
            prauc(&[0.1, 0.2], &[true]).unwrap_err(),
            MetricsError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn prauc_ties_break_by_index() {
        // Equal scores: index order decides ranks deterministically.
        let ap = prauc(&[0.5, 0.5], &[false, true]).unwrap();
        assert_eq!(ap, 0.5);
        let ap = prauc(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn prauc_invariant_under_monotone_transforms() {
        let scores = [0.91, 0.08, 0.44, 0.52, 0.13];
        let labels = [true, false, true, false, true];
        let base = prauc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-5.0 * s).exp())).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| 3.0 * s - 42.0).collect();
        assert_eq!(prauc(&squashed, &labels).unwrap(), base);
        assert_eq!(prauc(&shifted, &labels).unwrap(), base);
    }

    #[test]
    fn ddi_rate_examples() {
        let mut ddi = DdiMatrix::zeros(4);
        ddi.set_edge(0, 1);
        assert!((ddi_rate(&[vec![0, 1, 2]], &ddi) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ddi_rate(&[vec![0, 1, 2]], &DdiMatrix::zeros(4)), 0.0);
        assert_eq!(ddi_rate(&[vec![0], vec![]], &ddi), 0.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let vp = VisitPrediction::from_scores(vec![0.5, 0.49, 0.51], vec![0], 0.5);
        assert_eq!(vp.predicted, vec![0, 2]);
        assert_eq!(vp.labels(3), vec![true, false, false]);
    }
}
