//! Bounds on the relative predictive probability
//! `r_t = P(a_{t+1}) / (∏_{i≤t} P(a_i))^{1/t}` and their Monte Carlo check.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HistBin;
use crate::error::{range, Error, Result};
use crate::predictor::{MixtureOracle, Predictor, PredictorModel};
use crate::seed::component_rng;
use crate::synth::LabeledTrajectory;

/// Switching scale `K`, confidence `c`, slack `δ` and deviance bound `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionParams {
    #[serde(rename = "K")]
    pub k: f64,
    pub c: f64,
    pub delta: f64,
    pub m: f64,
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<()> {
        if self.k.is_nan() || self.k <= 1.0 {
            return range(format!("K must exceed 1, got {}", self.k));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return range(format!("c must lie in (0, 1), got {}", self.c));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return range(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        if !(self.m > 0.0 && self.m < 1.0) {
            return range(format!("m must lie in (0, 1), got {}", self.m));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    /// `(K-1)c/K`: non-transition ratios exceed this with probability `> 1-δ`.
    pub lower_nontransition: f64,
    /// `Km/(2(K-1)) + 1/(c(K-1))`: transition ratios fall below this.
    pub upper_transition: f64,
    /// `c > m` and `(K-4)c² > 2`.
    pub separated: bool,
}

pub fn theorem_bounds(p: &AssumptionParams) -> Result<TheoremBounds> {
    p.validate()?;
    let AssumptionParams { k, c, m, .. } = *p;
    Ok(TheoremBounds {
        lower_nontransition: (k - 1.0) * c / k,
        upper_transition: k * m / (2.0 * (k - 1.0)) + 1.0 / (c * (k - 1.0)),
        separated: c > m && (k - 4.0) * c * c > 2.0,
    })
}

/// `ln r` for a segment history of probabilities and the next probability.
pub fn relative_log_ratio(history: &[f64], next: f64) -> f64 {
    let mean = history.iter().map(|p| p.ln()).sum::<f64>() / history.len() as f64;
    next.ln() - mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    /// Step whose action is in the numerator.
    pub index: usize,
    /// Number of same-segment steps in the denominator.
    pub age: usize,
    pub log_ratio: f64,
    pub is_transition: bool,
}

impl RatioEntry {
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioTrace {
    pub entries: Vec<RatioEntry>,
    /// Steps skipped because a probability in the ratio was zero.
    pub excluded_infinite: usize,
}

/// Relative predictive probabilities along a labeled trajectory.
///
/// The predictor context and the geometric-mean history restart at every
/// true boundary. A boundary step is first scored against the old segment's
/// history (a transition entry) and then re-scored from an empty context as
/// the first element of the new segment.
pub fn ratio_trace<M: PredictorModel + ?Sized>(traj: &LabeledTrajectory, model: &M) -> RatioTrace {
    let mut session = model.session(usize::MAX);
    let truth = traj.true_boundaries.indices();
    let mut next_boundary = truth.iter().copied().peekable();

    let mut trace = RatioTrace::default();
    let mut log_sum = 0.0;
    let mut age = 0usize;

    for step in &traj.trajectory.steps {
        let is_transition = next_boundary.peek() == Some(&step.index);
        if age > 0 {
            let log_p = session.prob(step.obs, step.act).ln();
            let log_ratio = log_p - log_sum / age as f64;
            if log_ratio.is_finite() {
                trace.entries.push(RatioEntry {
                    index: step.index,
                    age,
                    log_ratio,
                    is_transition,
                });
            } else {
                trace.excluded_infinite += 1;
            }
        }
        if is_transition {
            next_boundary.next();
            session.reset();
            log_sum = 0.0;
            age = 0;
        }
        log_sum += session.prob(step.obs, step.act).ln();
        age += 1;
        session.observe(step.obs, step.act);
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Age buckets with fewer transition samples are reported but not judged.
    pub min_bucket_samples: usize,
    /// Binomial standard errors subtracted from each required rate.
    pub sigma_margin: f64,
    /// Randomly permute the transition flags with this seed (negative control).
    pub shuffle_seed: Option<u64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            min_bucket_samples: 100,
            sigma_margin: 3.0,
            shuffle_seed: None,
        }
    }
}

/// Pass rate of one bound against its required rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub samples: usize,
    pub passes: usize,
    pub rate: f64,
    pub required: f64,
    /// `sigma_margin · sqrt(required (1 - required) / samples)`.
    pub margin: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn judge(samples: usize, passes: usize, required: f64, sigma_margin: f64) -> Self {
        let n = samples.max(1) as f64;
        let rate = passes as f64 / n;
        let margin = sigma_margin * (required * (1.0 - required) / n).sqrt();
        BoundCheck {
            samples,
            passes,
            rate,
            required,
            margin,
            pass: samples > 0 && rate >= required - margin,
        }
    }
}

/// Transition samples whose age lies in `[age_lo, age_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBucket {
    pub age_lo: usize,
    pub age_hi: usize,
    /// Mean of `max(0, 1 - tδ)` over the bucket's samples.
    pub check: BoundCheck,
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub params: AssumptionParams,
    pub bounds: TheoremBounds,
    pub shuffled: bool,
    pub excluded_infinite: usize,
    pub nontransition: BoundCheck,
    pub transition_buckets: Vec<AgeBucket>,
    pub transition_pass: bool,
    pub passed: bool,
    /// Histograms of `ln r` per class.
    pub nontransition_hist: Vec<HistBin>,
    pub transition_hist: Vec<HistBin>,
}

const HIST_LO: f64 = -12.0;
const HIST_HI: f64 = 4.0;
const HIST_BINS: usize = 32;

fn log_ratio_histogram(values: impl Iterator<Item = f64>) -> Vec<HistBin> {
    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    let mut bins: Vec<HistBin> = (0..HIST_BINS)
        .map(|i| HistBin {
            low: HIST_LO + i as f64 * width,
            high: HIST_LO + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    // Out-of-range values land in the edge bins.
    for v in values {
        let i = ((v - HIST_LO) / width)
            .floor()
            .clamp(0.0, (HIST_BINS - 1) as f64) as usize;
        bins[i].count += 1;
    }
    bins
}

fn bucket_of(age: usize) -> usize {
    (usize::BITS - 1 - age.leading_zeros()) as usize
}

/// Checks both bounds on the oracle's ratio traces over `corpus`.
///
/// Non-transition entries must satisfy `r > (K-1)c/K` at rate at least
/// `1 - δ`; transition entries at age `t` must satisfy `r < upper` at rate
/// at least `1 - tδ`, judged per power-of-two age bucket.
pub fn verify_theorem(
    corpus: &[LabeledTrajectory],
    oracle: &MixtureOracle,
    p: &AssumptionParams,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    let bounds = theorem_bounds(p)?;
    if !bounds.separated {
        return Err(Error::Refused(format!(
            "K={}, c={}, m={} violate c > m and (K-4)c² > 2; the lower bound {:.6} does not exceed the upper bound {:.6}, so the comparison is vacuous",
            p.k, p.c, p.m, bounds.lower_nontransition, bounds.upper_transition
        )));
    }

    let traces: Vec<RatioTrace> = corpus.par_iter().map(|t| ratio_trace(t, oracle)).collect();
    let excluded_infinite = traces.iter().map(|t| t.excluded_infinite).sum();
    let mut entries: Vec<RatioEntry> = traces.into_iter().flat_map(|t| t.entries).collect();

    if let Some(seed) = cfg.shuffle_seed {
        let mut flags: Vec<bool> = entries.iter().map(|e| e.is_transition).collect();
        flags.shuffle(&mut component_rng(seed, "label-shuffle", 0));
        for (e, f) in entries.iter_mut().zip(flags) {
            e.is_transition = f;
        }
    }

    let lower_log = bounds.lower_nontransition.ln();
    let upper_log = bounds.upper_transition.ln();

    let (non, trans): (Vec<&RatioEntry>, Vec<&RatioEntry>) =
        entries.iter().partition(|e| !e.is_transition);
    let non_pass = non.iter().filter(|e| e.log_ratio > lower_log).count();
    let nontransition = BoundCheck::judge(non.len(), non_pass, 1.0 - p.delta, cfg.sigma_margin);

    let n_buckets = trans
        .iter()
        .map(|e| bucket_of(e.age) + 1)
        .max()
        .unwrap_or(0);
    let mut samples = vec![0usize; n_buckets];
    let mut passes = vec![0usize; n_buckets];
    let mut required_sum = vec![0.0f64; n_buckets];
    for e in &trans {
        let b = bucket_of(e.age);
        samples[b] += 1;
        passes[b] += usize::from(e.log_ratio < upper_log);
        required_sum[b] += (1.0 - e.age as f64 * p.delta).max(0.0);
    }
    let transition_buckets: Vec<AgeBucket> = (0..n_buckets)
        .filter(|&b| samples[b] > 0)
        .map(|b| {
            let required = required_sum[b] / samples[b] as f64;
            AgeBucket {
                age_lo: 1 << b,
                age_hi: (1 << (b + 1)) - 1,
                check: BoundCheck::judge(samples[b], passes[b], required, cfg.sigma_margin),
                evaluated: samples[b] >= cfg.min_bucket_samples,
            }
        })
        .collect();
    let judged: Vec<&AgeBucket> = transition_buckets.iter().filter(|b| b.evaluated).collect();
    let transition_pass = !judged.is_empty() && judged.iter().all(|b| b.check.pass);

    Ok(VerifyReport {
        params: *p,
        bounds,
        shuffled: cfg.shuffle_seed.is_some(),
        excluded_infinite,
        passed: nontransition.pass && transition_pass,
        nontransition,
        transition_buckets,
        transition_pass,
        nontransition_hist: log_ratio_histogram(non.iter().map(|e| e.log_ratio)),
        transition_hist: log_ratio_histogram(trans.iter().map(|e| e.log_ratio)),
    })
}
