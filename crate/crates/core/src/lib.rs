//! Skill boundary detection from predictive loss.
//!
//! A next-action predictor is run along an unsegmented trajectory; a step
//! whose loss exceeds the running mean of the current segment by a gap, or
//! that carries an external event indicator, opens a new segment. The crate
//! also provides length pruning, a synthetic switching-policy generator and
//! tools to check the detection bounds on it.

pub mod analysis;
pub mod detect;
pub mod error;
pub mod io;
pub mod predictor;
pub mod prune;
pub mod seed;
pub mod synth;
pub mod types;

pub use detect::{
    detect_boundaries, mark_event_indicators, segment_corpus, Detection, IndicatorTrack,
    TrajectorySegmentation,
};
pub use error::{Error, Result};
pub use predictor::{
    step_loss, train_count_predictor, CountModel, MixtureOracle, PolicyTable, Predictor,
    PredictorModel, StepLoss,
};
pub use prune::{prune_lengths, prune_segments, PruneConfig, TailPolicy};
pub use types::{
    segments_from_boundaries, validate_trajectory, Boundary, BoundaryReason, BoundarySet,
    DetectorConfig, EventSet, Segment, Step, Token, Trajectory,
};
