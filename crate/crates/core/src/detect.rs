//! Streaming skill boundary detection and the event-indicator preprocessor.
//!
//! For each step the detector scores the observed action with the
//! predictor, appends that loss to the history of the current segment and
//! declares a boundary when the loss exceeds the history mean (current loss
//! included) by more than `gap`, or when the step's external indicator is
//! set. At a boundary the segment history and the predictor context are
//! cleared; the boundary step is then observed as the first element of the
//! new context.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::predictor::{step_loss, Predictor, PredictorModel, StepLoss};
use crate::types::{
    segments_from_boundaries, Boundary, BoundaryReason, BoundarySet, DetectorConfig, EventSet,
    Segment, Trajectory, KILL_ENTITY,
};

/// One boolean "this step is a likely boundary" flag per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorTrack {
    flags: Vec<bool>,
}

impl IndicatorTrack {
    pub fn none(len: usize) -> Self {
        IndicatorTrack {
            flags: vec![false; len],
        }
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        IndicatorTrack { flags }
    }

    /// Positions beyond `len` are ignored.
    pub fn from_positions(len: usize, positions: impl IntoIterator<Item = usize>) -> Self {
        let mut flags = vec![false; len];
        for p in positions {
            if let Some(f) = flags.get_mut(p) {
                *f = true;
            }
        }
        IndicatorTrack { flags }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn get(&self, t: usize) -> bool {
        self.flags.get(t).copied().unwrap_or(false)
    }

    pub fn positions(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Flags the last step of every maximal run of identical, non-empty event
/// sets. A run whose event set contains a `kill_entity` event flags
/// `min(t + kill_offset, T - 1)` instead of its last step `t`.
pub fn mark_event_indicators(t: &Trajectory, kill_offset: usize) -> IndicatorTrack {
    let len = t.len();
    let mut track = IndicatorTrack::none(len);
    for (i, step) in t.steps.iter().enumerate() {
        if step.events.is_empty() {
            continue;
        }
        let run_continues = t
            .steps
            .get(i + 1)
            .is_some_and(|next| next.events == step.events);
        if run_continues {
            continue;
        }
        let target = if is_kill(&step.events) {
            (i + kill_offset).min(len - 1)
        } else {
            i
        };
        track.flags[target] = true;
    }
    track
}

fn is_kill(events: &EventSet) -> bool {
    events.has_category(KILL_ENTITY)
}

/// Mutable state of one detector pass.
#[derive(Debug, Clone, Default)]
pub struct DetectorState {
    pub begin: usize,
    pub loss_history: Vec<f64>,
    // Sum of finite losses minus the segment's first finite loss, so that
    // a constant loss gives an excess of exactly zero.
    shift: Option<f64>,
    shifted_sum: f64,
    infinite: usize,
}

impl DetectorState {
    /// Appends a loss and returns its excess over the history mean.
    pub fn push(&mut self, loss: f64) -> f64 {
        self.loss_history.push(loss);
        if loss.is_infinite() {
            self.infinite += 1;
            return f64::INFINITY;
        }
        if self.infinite > 0 {
            return f64::NEG_INFINITY;
        }
        let shift = *self.shift.get_or_insert(loss);
        self.shifted_sum += loss - shift;
        (loss - shift) - self.shifted_sum / self.loss_history.len() as f64
    }

    pub fn restart(&mut self, begin: usize) {
        self.begin = begin;
        self.loss_history.clear();
        self.shift = None;
        self.shifted_sum = 0.0;
        self.infinite = 0;
    }
}

/// Output of [`detect_boundaries`] for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub boundaries: BoundarySet,
    /// Loss of every step, in step order.
    pub losses: Vec<StepLoss>,
    /// Loss minus the running segment mean, per step.
    pub excesses: Vec<f64>,
}

impl Detection {
    pub fn segments(&self) -> Result<Vec<Segment>> {
        segments_from_boundaries(self.losses.len(), &self.boundaries)
    }
}

/// Runs the streaming detector over one trajectory.
///
/// The predictor is reset before the first step. Event indicators at step 0
/// are ignored because a boundary there would be empty.
pub fn detect_boundaries<P: Predictor + ?Sized>(
    t: &Trajectory,
    model: &mut P,
    cfg: &DetectorConfig,
    indicators: &IndicatorTrack,
) -> Result<Detection> {
    cfg.validate()?;
    if indicators.len() != t.len() {
        return config(format!(
            "indicator track has {} flags for a trajectory of {} steps",
            indicators.len(),
            t.len()
        ));
    }
    if model.obs_vocab() != t.obs_vocab || model.act_vocab() != t.act_vocab {
        return config(format!(
            "trajectory {:?} vocabularies ({}, {}) differ from the predictor's ({}, {})",
            t.id,
            t.obs_vocab,
            t.act_vocab,
            model.obs_vocab(),
            model.act_vocab()
        ));
    }

    model.reset();
    let mut state = DetectorState::default();
    let mut boundaries = BoundarySet::empty(t.id.clone());
    let mut losses = Vec::with_capacity(t.len());
    let mut excesses = Vec::with_capacity(t.len());

    for (i, step) in t.steps.iter().enumerate() {
        let loss = step_loss(model, i, step.obs, step.act)?;
        let excess = state.push(loss.loss);
        losses.push(loss);
        excesses.push(excess);

        let by_loss = cfg.use_loss && excess > cfg.gap;
        let by_event = cfg.use_events && indicators.get(i);
        if i > 0 {
            if let Some(reason) = BoundaryReason::from_signals(by_loss, by_event) {
                boundaries.push(Boundary {
                    index: i,
                    reason: Some(reason),
                })?;
                state.restart(i);
                model.reset();
            }
        }
        model.observe(step.obs, step.act);
    }

    Ok(Detection {
        boundaries,
        losses,
        excesses,
    })
}

/// Detection result for one trajectory of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegmentation {
    pub detection: Detection,
    pub segments: Vec<Segment>,
}

/// Marks event indicators and runs the detector on every trajectory,
/// each with its own predictor session. Results keep corpus order.
pub fn segment_corpus<M: PredictorModel>(
    corpus: &[Trajectory],
    model: &M,
    cfg: &DetectorConfig,
) -> Result<Vec<TrajectorySegmentation>> {
    cfg.validate()?;
    corpus
        .par_iter()
        .map(|traj| {
            let indicators = mark_event_indicators(traj, cfg.kill_offset);
            let mut session = model.session(cfg.window);
            let detection = detect_boundaries(traj, &mut session, cfg, &indicators)?;
            let segments = detection.segments()?;
            Ok(TrajectorySegmentation {
                detection,
                segments,
            })
        })
        .collect()
}
