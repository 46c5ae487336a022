//! Sequential-sampling baselines that ignore the data.
//!
//! Reward-driven segmentation has no counterpart here: synthetic
//! trajectories carry no reward signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::seed::component_rng;
use crate::types::BoundarySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineStrategy {
    /// Boundaries at `L, 2L, ...`.
    Fixed { len: usize },
    /// Segment lengths drawn uniformly from `[min, max]`, seeded per trajectory id.
    Uniform { min: usize, max: usize, seed: u64 },
}

impl BaselineStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineStrategy::Fixed { len: 0 } => config("fixed length must be positive"),
            BaselineStrategy::Uniform { min, max, .. } if min == 0 || min > max => config(format!(
                "uniform range [{min}, {max}] is empty or starts at 0"
            )),
            _ => Ok(()),
        }
    }
}

pub fn baseline_segment(
    trajectory_id: &str,
    traj_len: usize,
    strategy: &BaselineStrategy,
) -> Result<BoundarySet> {
    strategy.validate()?;
    let indices: Vec<usize> = match *strategy {
        BaselineStrategy::Fixed { len } => (1..)
            .map(|k| k * len)
            .take_while(|&b| b < traj_len)
            .collect(),
        BaselineStrategy::Uniform { min, max, seed } => {
            let mut rng = component_rng(seed, &format!("baseline-uniform/{trajectory_id}"), 0);
            let mut out = Vec::new();
            let mut at = 0;
            loop {
                at += rng.random_range(min..=max);
                if at >= traj_len {
                    break;
                }
                out.push(at);
            }
            out
        }
    };
    BoundarySet::from_indices(trajectory_id, indices)
}
