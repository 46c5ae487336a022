//! Heuristic gap selection from the excess distribution of a corpus.

use serde::{Deserialize, Serialize};

use crate::detect::segment_corpus;
use crate::error::{range, Result};
use crate::predictor::PredictorModel;
use crate::types::{DetectorConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gap: f64,
    pub quantile: f64,
    /// Excess values the quantile was taken over.
    pub samples: usize,
    pub max_excess: f64,
    /// All excesses were equal, so the quantile carries no information.
    pub degenerate: bool,
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Excess of every step after the first, with no boundaries declared.
pub fn collect_excesses<M: PredictorModel>(
    corpus: &[Trajectory],
    model: &M,
    window: usize,
) -> Result<Vec<f64>> {
    let cfg = DetectorConfig::loss_only(f64::INFINITY, window);
    let runs = segment_corpus(corpus, model, &cfg)?;
    Ok(runs
        .into_iter()
        .flat_map(|r| r.detection.excesses.into_iter().skip(1))
        .collect())
}

/// Gap equal to the `target_quantile` of the loss excesses over `corpus`.
///
/// This is a heuristic: it fixes the fraction of steps that would trigger on
/// their own, not the boundary rate after resets.
pub fn calibrate_gap<M: PredictorModel>(
    corpus: &[Trajectory],
    model: &M,
    window: usize,
    target_quantile: f64,
) -> Result<Calibration> {
    if !(target_quantile > 0.0 && target_quantile <= 1.0) {
        return range(format!(
            "target quantile must lie in (0, 1], got {target_quantile}"
        ));
    }
    if corpus.is_empty() {
        return range("calibration corpus is empty");
    }
    let mut excesses = collect_excesses(corpus, model, window)?;
    if excesses.is_empty() {
        return range("calibration corpus has no steps beyond the first");
    }
    excesses.sort_by(f64::total_cmp);
    let first = excesses[0];
    let last = excesses[excesses.len() - 1];
    Ok(Calibration {
        gap: quantile(&excesses, target_quantile),
        quantile: target_quantile,
        samples: excesses.len(),
        max_excess: last,
        degenerate: first == last,
    })
}
