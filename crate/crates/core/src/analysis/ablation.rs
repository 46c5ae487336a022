//! Segmentation arms compared in the ablation: a fixed-length baseline,
//! events only, loss only, and both signals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::baseline::{baseline_segment, BaselineStrategy};
use super::metrics::{aggregate_metrics, boundary_metrics, MetricSummary};
use crate::detect::segment_corpus;
use crate::error::{Error, Result};
use crate::predictor::PredictorModel;
use crate::synth::LabeledTrajectory;
use crate::types::{BoundarySet, DetectorConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMode {
    Loss,
    Info,
    Both,
    Fixed(usize),
    Uniform { min: usize, max: usize },
}

impl SegmentMode {
    pub fn uses_loss(&self) -> bool {
        matches!(self, SegmentMode::Loss | SegmentMode::Both)
    }
}

impl fmt::Display for SegmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentMode::Loss => f.write_str("loss"),
            SegmentMode::Info => f.write_str("info"),
            SegmentMode::Both => f.write_str("both"),
            SegmentMode::Fixed(len) => write!(f, "fixed:{len}"),
            SegmentMode::Uniform { min, max } => write!(f, "uniform:{min}:{max}"),
        }
    }
}

impl FromStr for SegmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown mode {s:?}; expected loss, info, both, fixed:L or uniform:MIN:MAX"
            ))
        };
        let num = |x: &str| x.parse::<usize>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["loss"] => Ok(SegmentMode::Loss),
            ["info"] => Ok(SegmentMode::Info),
            ["both"] => Ok(SegmentMode::Both),
            ["fixed", len] => Ok(SegmentMode::Fixed(num(len)?)),
            ["uniform", min, max] => Ok(SegmentMode::Uniform {
                min: num(min)?,
                max: num(max)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Boundaries for every trajectory under `mode`. Detector modes take gap,
/// window and kill offset from `base`; `seed` drives the uniform baseline.
pub fn segment_with_mode<M: PredictorModel>(
    corpus: &[Trajectory],
    model: &M,
    mode: SegmentMode,
    base: &DetectorConfig,
    seed: u64,
) -> Result<Vec<BoundarySet>> {
    let strategy = match mode {
        SegmentMode::Fixed(len) => Some(BaselineStrategy::Fixed { len }),
        SegmentMode::Uniform { min, max } => Some(BaselineStrategy::Uniform { min, max, seed }),
        _ => None,
    };
    if let Some(strategy) = strategy {
        return corpus
            .iter()
            .map(|t| baseline_segment(&t.id, t.len(), &strategy))
            .collect();
    }
    let cfg = DetectorConfig {
        use_loss: mode.uses_loss(),
        use_events: matches!(mode, SegmentMode::Info | SegmentMode::Both),
        ..base.clone()
    };
    Ok(segment_corpus(corpus, model, &cfg)?
        .into_iter()
        .map(|r| r.detection.boundaries)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: String,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

/// One micro-averaged metric row per arm: `fixed:L`, `info`, `loss`, `both`.
pub fn run_ablation<M: PredictorModel>(
    corpus: &[LabeledTrajectory],
    model: &M,
    base: &DetectorConfig,
    fixed_len: usize,
    tolerance: i64,
) -> Result<Vec<AblationRow>> {
    let trajectories: Vec<Trajectory> = corpus.iter().map(|l| l.trajectory.clone()).collect();
    [
        SegmentMode::Fixed(fixed_len),
        SegmentMode::Info,
        SegmentMode::Loss,
        SegmentMode::Both,
    ]
    .into_iter()
    .map(|mode| {
        let predicted = segment_with_mode(&trajectories, model, mode, base, 0)?;
        let per_traj = predicted
            .iter()
            .zip(corpus)
            .map(|(p, l)| boundary_metrics(p, &l.true_boundaries, tolerance))
            .collect::<Result<Vec<_>>>()?;
        Ok(AblationRow {
            mode: mode.to_string(),
            metrics: aggregate_metrics(&per_traj),
        })
    })
    .collect()
}
