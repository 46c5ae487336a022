//! Domain types shared by every stage of the pipeline: trajectories and
//! their steps, event sets, boundaries, segments and detector settings.
//!
//! Segments are half-open `[start, end)` ranges. A boundary at step `b`
//! closes the segment before it and opens the next one, so the step that
//! triggered the boundary belongs to the *following* segment and a list of
//! segments always partitions the trajectory.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, range, Error, Result};

/// Discrete observation or action symbol.
pub type Token = u32;

/// Event category whose flags are shifted forward by the kill offset.
pub const KILL_ENTITY: &str = "kill_entity";

/// Unordered set of `category:item` event strings recorded at one step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSet(BTreeSet<String>);

impl EventSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, event: impl Into<String>) -> bool {
        self.0.insert(event.into())
    }

    pub fn contains(&self, event: &str) -> bool {
        self.0.contains(event)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// True if any event's category (the text before the first `:`) equals `category`.
    pub fn has_category(&self, category: &str) -> bool {
        self.iter()
            .any(|e| e.split_once(':').map_or(e, |(cat, _)| cat) == category)
    }
}

impl<S: Into<String>> FromIterator<S> for EventSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        EventSet(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    /// 0-based position in the owning trajectory.
    pub index: usize,
    pub obs: Token,
    pub act: Token,
    pub events: EventSet,
    /// Ground-truth skill id, only present on synthetic corpora.
    pub skill: Option<u32>,
}

/// An unsegmented sequence of observation-action steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub id: String,
    pub obs_vocab: usize,
    pub act_vocab: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Builds an event-free, unlabeled trajectory from parallel token slices.
    pub fn from_tokens(
        id: impl Into<String>,
        obs_vocab: usize,
        act_vocab: usize,
        obs: &[Token],
        acts: &[Token],
    ) -> Self {
        assert_eq!(
            obs.len(),
            acts.len(),
            "observation and action lengths differ"
        );
        let steps = obs
            .iter()
            .zip(acts)
            .enumerate()
            .map(|(index, (&obs, &act))| Step {
                index,
                obs,
                act,
                events: EventSet::new(),
                skill: None,
            })
            .collect();
        Trajectory {
            id: id.into(),
            obs_vocab,
            act_vocab,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_trajectory(self)
    }

    /// Fails with a contract error listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "trajectory {:?}: {}",
                self.id, report
            )))
        }
    }
}

/// A single well-formedness problem found by [`validate_trajectory`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTrajectory,
    ZeroVocab {
        which: &'static str,
    },
    IndexGap {
        position: usize,
        found: usize,
    },
    ObsOutOfRange {
        step: usize,
        obs: Token,
        vocab: usize,
    },
    ActOutOfRange {
        step: usize,
        act: Token,
        vocab: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTrajectory => write!(f, "empty trajectory"),
            Violation::ZeroVocab { which } => write!(f, "{which} vocabulary size is zero"),
            Violation::IndexGap { position, found } => {
                write!(f, "step at position {position} carries index {found}")
            }
            Violation::ObsOutOfRange { step, obs, vocab } => {
                write!(
                    f,
                    "step {step}: obs {obs} outside vocabulary of size {vocab}"
                )
            }
            Violation::ActOutOfRange { step, act, vocab } => {
                write!(
                    f,
                    "step {step}: act {act} outside vocabulary of size {vocab}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks vocabulary bounds, contiguous indices and non-emptiness.
/// Violations are returned as data; this never fails.
pub fn validate_trajectory(t: &Trajectory) -> ValidationReport {
    let mut violations = Vec::new();
    if t.steps.is_empty() {
        violations.push(Violation::EmptyTrajectory);
    }
    if t.obs_vocab == 0 {
        violations.push(Violation::ZeroVocab {
            which: "observation",
        });
    }
    if t.act_vocab == 0 {
        violations.push(Violation::ZeroVocab { which: "action" });
    }
    for (position, step) in t.steps.iter().enumerate() {
        if step.index != position {
            violations.push(Violation::IndexGap {
                position,
                found: step.index,
            });
        }
        if step.obs as usize >= t.obs_vocab {
            violations.push(Violation::ObsOutOfRange {
                step: position,
                obs: step.obs,
                vocab: t.obs_vocab,
            });
        }
        if step.act as usize >= t.act_vocab {
            violations.push(Violation::ActOutOfRange {
                step: position,
                act: step.act,
                vocab: t.act_vocab,
            });
        }
    }
    ValidationReport { violations }
}

/// Which detector signal produced a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryReason {
    Loss,
    Event,
    Both,
}

impl BoundaryReason {
    pub fn from_signals(loss: bool, event: bool) -> Option<Self> {
        match (loss, event) {
            (true, true) => Some(BoundaryReason::Both),
            (true, false) => Some(BoundaryReason::Loss),
            (false, true) => Some(BoundaryReason::Event),
            (false, false) => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryReason::Loss => "loss",
            BoundaryReason::Event => "event",
            BoundaryReason::Both => "both",
        }
    }
}

impl fmt::Display for BoundaryReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A step at which a new segment begins.
///
/// `reason` is `None` for boundaries that did not come from the detector
/// (ground truth, fixed or sampled baselines).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub index: usize,
    pub reason: Option<BoundaryReason>,
}

/// Strictly increasing boundaries of one trajectory, all `> 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundarySet")]
pub struct BoundarySet {
    trajectory_id: String,
    boundaries: Vec<Boundary>,
}

#[derive(Deserialize)]
struct RawBoundarySet {
    trajectory_id: String,
    boundaries: Vec<Boundary>,
}

impl TryFrom<RawBoundarySet> for BoundarySet {
    type Error = Error;

    fn try_from(raw: RawBoundarySet) -> Result<Self> {
        BoundarySet::new(raw.trajectory_id, raw.boundaries)
    }
}

impl BoundarySet {
    pub fn new(trajectory_id: impl Into<String>, boundaries: Vec<Boundary>) -> Result<Self> {
        let mut set = BoundarySet::empty(trajectory_id);
        for b in boundaries {
            set.push(b)?;
        }
        Ok(set)
    }

    pub fn empty(trajectory_id: impl Into<String>) -> Self {
        BoundarySet {
            trajectory_id: trajectory_id.into(),
            boundaries: Vec::new(),
        }
    }

    /// Boundaries without a detector reason.
    pub fn from_indices(
        trajectory_id: impl Into<String>,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let boundaries = indices
            .into_iter()
            .map(|index| Boundary {
                index,
                reason: None,
            })
            .collect();
        BoundarySet::new(trajectory_id, boundaries)
    }

    /// Appends a boundary, keeping indices strictly increasing and positive.
    pub fn push(&mut self, b: Boundary) -> Result<()> {
        if b.index == 0 {
            return range(format!(
                "{}: boundary at step 0 precedes the first step",
                self.trajectory_id
            ));
        }
        if let Some(last) = self.boundaries.last() {
            if b.index <= last.index {
                return Err(Error::Contract(format!(
                    "{}: boundary {} does not follow {}",
                    self.trajectory_id, b.index, last.index
                )));
            }
        }
        self.boundaries.push(b);
        Ok(())
    }

    pub fn trajectory_id(&self) -> &str {
        &self.trajectory_id
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn indices(&self) -> Vec<usize> {
        self.boundaries.iter().map(|b| b.index).collect()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn count_reason(&self, reason: BoundaryReason) -> usize {
        self.boundaries
            .iter()
            .filter(|b| b.reason == Some(reason))
            .count()
    }
}

/// Half-open range `[start, end)` of trajectory steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub trajectory_id: String,
    pub start: usize,
    pub end: usize,
    /// Reason of the boundary that opened this segment; `None` for the
    /// first segment and for cuts that do not come from the detector.
    pub reason: Option<BoundaryReason>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Partitions `[0, traj_len)` at the given boundaries.
pub fn segments_from_boundaries(traj_len: usize, b: &BoundarySet) -> Result<Vec<Segment>> {
    if traj_len == 0 {
        return range("trajectory length must be positive");
    }
    if let Some(last) = b.boundaries().last() {
        if last.index >= traj_len {
            return range(format!(
                "{}: boundary {} outside trajectory of length {traj_len}",
                b.trajectory_id(),
                last.index
            ));
        }
    }
    let mut segments = Vec::with_capacity(b.len() + 1);
    let mut start = 0;
    let mut reason = None;
    for boundary in b.boundaries() {
        segments.push(Segment {
            trajectory_id: b.trajectory_id().to_string(),
            start,
            end: boundary.index,
            reason,
        });
        start = boundary.index;
        reason = boundary.reason;
    }
    segments.push(Segment {
        trajectory_id: b.trajectory_id().to_string(),
        start,
        end: traj_len,
        reason,
    });
    Ok(segments)
}

/// Settings for one run of the streaming detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Loss excess over the running segment mean (nats) that triggers a boundary.
    pub gap: f64,
    /// Maximum number of prior steps the predictor may condition on.
    pub window: usize,
    /// Forward shift applied to flags raised by `kill_entity` events.
    pub kill_offset: usize,
    pub use_loss: bool,
    pub use_events: bool,
}

impl DetectorConfig {
    pub const DEFAULT_KILL_OFFSET: usize = 16;

    pub fn new(gap: f64, window: usize, use_loss: bool, use_events: bool) -> Self {
        DetectorConfig {
            gap,
            window,
            kill_offset: Self::DEFAULT_KILL_OFFSET,
            use_loss,
            use_events,
        }
    }

    pub fn loss_only(gap: f64, window: usize) -> Self {
        Self::new(gap, window, true, false)
    }

    pub fn events_only(window: usize) -> Self {
        Self::new(f64::INFINITY, window, false, true)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_loss && !self.use_events {
            return config("detector needs at least one of use_loss or use_events");
        }
        if self.gap.is_nan() || self.gap < 0.0 {
            return config(format!("gap must be non-negative, got {}", self.gap));
        }
        if self.window == 0 {
            return config("window must be at least 1");
        }
        Ok(())
    }
}
