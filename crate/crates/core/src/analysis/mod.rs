//! Theorem checks, segmentation metrics, length statistics, baselines,
//! gap calibration and the four-arm ablation.

mod ablation;
mod baseline;
mod calibrate;
mod lengths;
mod metrics;
mod theorem;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use ablation::{run_ablation, segment_with_mode, AblationRow, SegmentMode};
pub use baseline::{baseline_segment, BaselineStrategy};
pub use calibrate::{calibrate_gap, collect_excesses, quantile, Calibration};
pub use lengths::{length_stats, segment_length_stats, LengthStats};
pub use metrics::{aggregate_metrics, boundary_metrics, BoundaryMetrics, MetricSummary};
pub use theorem::{
    ratio_trace, relative_log_ratio, theorem_bounds, verify_theorem, AgeBucket, AssumptionParams,
    BoundCheck, RatioEntry, RatioTrace, TheoremBounds, VerifyConfig, VerifyReport,
};

/// One histogram bin over `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Writes `bin_low,bin_high,count` rows.
pub fn write_histogram_csv<W: Write>(bins: &[HistBin], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_low", "bin_high", "count"])?;
    for b in bins {
        w.write_record([b.low.to_string(), b.high.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
