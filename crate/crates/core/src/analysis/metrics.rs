//! Boundary precision, recall and F1 under a step tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{range, Result};
use crate::types::BoundarySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tolerance: usize,
    /// `(predicted, true)` index pairs, one-to-one.
    pub matched_pairs: Vec<(usize, usize)>,
    pub n_predicted: usize,
    pub n_truth: usize,
}

fn ratio(matches: usize, total: usize, other_total: usize) -> f64 {
    if total == 0 {
        if other_total == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        matches as f64 / total as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Matches predicted to true boundaries within `±tolerance` steps.
///
/// Predicted boundaries are taken left to right and each is paired with the
/// earliest unmatched true boundary inside its window. Because every window
/// has the same width, this greedy pass finds a maximum one-to-one matching,
/// so swapping the two sets swaps precision and recall and leaves F1 fixed.
pub fn boundary_metrics(
    predicted: &BoundarySet,
    truth: &BoundarySet,
    tolerance: i64,
) -> Result<BoundaryMetrics> {
    if tolerance < 0 {
        return range(format!("tolerance must be non-negative, got {tolerance}"));
    }
    let tol = tolerance as usize;
    let pred = predicted.indices();
    let tru = truth.indices();

    let mut pairs = Vec::new();
    let mut j = 0;
    for &p in &pred {
        while j < tru.len() && tru[j] + tol < p {
            j += 1;
        }
        if j < tru.len() && tru[j] <= p + tol {
            pairs.push((p, tru[j]));
            j += 1;
        }
    }

    let precision = ratio(pairs.len(), pred.len(), tru.len());
    let recall = ratio(pairs.len(), tru.len(), pred.len());
    Ok(BoundaryMetrics {
        precision,
        recall,
        f1: f1(precision, recall),
        tolerance: tol,
        matched_pairs: pairs,
        n_predicted: pred.len(),
        n_truth: tru.len(),
    })
}

/// Micro-averaged metrics over many trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: usize,
    pub n_predicted: usize,
    pub n_truth: usize,
}

pub fn aggregate_metrics(per_trajectory: &[BoundaryMetrics]) -> MetricSummary {
    let matches = per_trajectory.iter().map(|m| m.matched_pairs.len()).sum();
    let n_predicted = per_trajectory.iter().map(|m| m.n_predicted).sum();
    let n_truth = per_trajectory.iter().map(|m| m.n_truth).sum();
    let precision = ratio(matches, n_predicted, n_truth);
    let recall = ratio(matches, n_truth, n_predicted);
    MetricSummary {
        precision,
        recall,
        f1: f1(precision, recall),
        matches,
        n_predicted,
        n_truth,
    }
}
