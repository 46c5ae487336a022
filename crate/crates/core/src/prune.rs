//! Greedy length pruning of consecutive segments.
//!
//! Lengths are accumulated left to right. Whenever the accumulator reaches
//! `min_len` it is emitted, capped at `max_len`; anything above the cap
//! stays in the accumulator and starts the next segment. With
//! `min=15, max=200`, the lengths `12, 12, 6, 196, 37` become `24, 200, 39`.

use serde::{Deserialize, Serialize};

use crate::error::{config, range, Error, Result};
use crate::types::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Discard a final accumulator shorter than `min_len`.
    Drop,
    /// Emit it anyway and flag it as undersized.
    KeepFlagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub tail_policy: TailPolicy,
}

impl PruneConfig {
    pub fn new(min_len: usize, max_len: usize) -> Self {
        PruneConfig {
            min_len,
            max_len,
            tail_policy: TailPolicy::Drop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 {
            return config("min_len must be positive");
        }
        if self.min_len > self.max_len {
            return config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            ));
        }
        Ok(())
    }
}

/// Final accumulator that never reached `min_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tail {
    pub len: usize,
    /// True when the tail was appended to the output (`KeepFlagged`).
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedLengths {
    /// Emitted lengths; includes the tail only when it was kept.
    pub lengths: Vec<usize>,
    pub tail: Option<Tail>,
    /// Input pieces that were added to a non-empty accumulator.
    pub merged_count: usize,
}

impl PrunedLengths {
    pub fn dropped_tail_steps(&self) -> usize {
        match self.tail {
            Some(Tail { len, kept: false }) => len,
            _ => 0,
        }
    }
}

pub fn prune_lengths(lengths: &[usize], cfg: &PruneConfig) -> Result<PrunedLengths> {
    cfg.validate()?;
    if lengths.is_empty() {
        return range("length list is empty");
    }
    if let Some(pos) = lengths.iter().position(|&l| l == 0) {
        return range(format!("length at position {pos} is zero"));
    }

    let mut out = Vec::new();
    let mut acc = 0usize;
    let mut merged_count = 0;
    for &len in lengths {
        if acc > 0 {
            merged_count += 1;
        }
        acc += len;
        while acc >= cfg.min_len {
            let emit = acc.min(cfg.max_len);
            out.push(emit);
            acc -= emit;
        }
    }

    let tail = (acc > 0).then(|| Tail {
        len: acc,
        kept: cfg.tail_policy == TailPolicy::KeepFlagged,
    });
    if let Some(Tail { len, kept: true }) = tail {
        out.push(len);
    }
    Ok(PrunedLengths {
        lengths: out,
        tail,
        merged_count,
    })
}

/// Summary written next to pruned segment files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub dropped_tail_steps: usize,
    pub emitted: usize,
    pub merged_count: usize,
    /// Trajectories whose last emitted segment is an undersized kept tail.
    pub undersized_kept: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedSegments {
    pub segments: Vec<Segment>,
    pub report: PruneReport,
}

/// Applies [`prune_lengths`] to the segments of each trajectory and
/// re-materializes contiguous ranges from the first segment's start.
///
/// Segments of one trajectory must be adjacent in the input and contiguous.
/// A pruned segment keeps the reason of the input segment starting at the
/// same step, or `None` if it starts at a truncation cut.
pub fn prune_segments(segments: &[Segment], cfg: &PruneConfig) -> Result<PrunedSegments> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut report = PruneReport::default();
    let mut seen: Vec<&str> = Vec::new();

    for group in segments.chunk_by(|a, b| a.trajectory_id == b.trajectory_id) {
        let id = group[0].trajectory_id.as_str();
        if seen.contains(&id) {
            return Err(Error::Contract(format!(
                "segments of trajectory {id:?} are not adjacent"
            )));
        }
        seen.push(id);
        for pair in group.windows(2) {
            if pair[0].end != pair[1].start {
                return Err(Error::Contract(format!(
                    "{id}: segment [{}, {}) is not followed by a contiguous segment (next starts at {})",
                    pair[0].start, pair[0].end, pair[1].start
                )));
            }
        }
        if let Some(bad) = group.iter().find(|s| s.is_empty()) {
            return Err(Error::Contract(format!(
                "{id}: empty segment [{}, {})",
                bad.start, bad.end
            )));
        }

        let lengths: Vec<usize> = group.iter().map(Segment::len).collect();
        let pruned = prune_lengths(&lengths, cfg)?;
        report.dropped_tail_steps += pruned.dropped_tail_steps();
        report.merged_count += pruned.merged_count;
        if matches!(pruned.tail, Some(Tail { kept: true, .. })) {
            report.undersized_kept.push(id.to_string());
        }

        let mut start = group[0].start;
        for len in pruned.lengths {
            let reason = group
                .iter()
                .find(|s| s.start == start)
                .and_then(|s| s.reason);
            out.push(Segment {
                trajectory_id: id.to_string(),
                start,
                end: start + len,
                reason,
            });
            start += len;
        }
    }
    report.emitted = out.len();
    Ok(PrunedSegments {
        segments: out,
        report,
    })
}
