//! Segment length distribution summaries.

use serde::{Deserialize, Serialize};

use super::HistBin;
use crate::error::{range, Result};
use crate::types::Segment;

const BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    pub log_mean: f64,
    pub log_std: f64,
    /// Moment skewness of the log lengths; near zero for log-normal data.
    pub log_skewness: f64,
    /// 30 log-spaced bins spanning `[1, max length]`.
    pub histogram: Vec<HistBin>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    // Shifted by the first value so identical inputs give an exact mean.
    let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn skewness(xs: &[f64], mean: f64) -> f64 {
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 > 0.0 {
        m3 / m2.powf(1.5)
    } else {
        0.0
    }
}

fn log_histogram(lengths: &[usize]) -> Vec<HistBin> {
    let max = *lengths.iter().max().expect("non-empty") as f64;
    if max <= 1.0 {
        return vec![HistBin {
            low: 1.0,
            high: 1.0,
            count: lengths.len() as u64,
        }];
    }
    let log_max = max.ln();
    let mut bins: Vec<HistBin> = (0..BINS)
        .map(|i| HistBin {
            low: (log_max * i as f64 / BINS as f64).exp(),
            high: (log_max * (i + 1) as f64 / BINS as f64).exp(),
            count: 0,
        })
        .collect();
    for &l in lengths {
        let i = ((l as f64).ln() / log_max * BINS as f64).floor() as usize;
        bins[i.min(BINS - 1)].count += 1;
    }
    bins
}

pub fn length_stats(lengths: &[usize]) -> Result<LengthStats> {
    if lengths.is_empty() {
        return range("length statistics need at least one length");
    }
    if lengths.contains(&0) {
        return range("lengths must be positive");
    }
    let raw: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let logs: Vec<f64> = raw.iter().map(|l| l.ln()).collect();
    let (mean, std) = mean_std(&raw);
    let (log_mean, log_std) = mean_std(&logs);
    Ok(LengthStats {
        count: lengths.len(),
        mean,
        std,
        log_mean,
        log_std,
        log_skewness: skewness(&logs, log_mean),
        histogram: log_histogram(lengths),
    })
}

pub fn segment_length_stats(segments: &[Segment]) -> Result<LengthStats> {
    let lengths: Vec<usize> = segments.iter().map(Segment::len).collect();
    length_stats(&lengths)
}
