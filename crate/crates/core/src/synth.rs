//! Labeled switching-policy trajectories.
//!
//! A corpus is driven by a library of skills, each a table `π(a | obs)`
//! with one dominant action per observation. The executing skill persists
//! from step to step and, with probability `1/K`, jumps to a different
//! skill chosen uniformly. Observations come from an exogenous process;
//! with [`ObsProcess::ActionEcho`] the next observation reflects the
//! previous action, the way a rendered frame reflects the last input.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::AssumptionParams;
use crate::error::{config, Error, Result};
use crate::predictor::{MixtureOracle, PolicyTable};
use crate::seed::component_rng;
use crate::types::{BoundarySet, EventSet, Step, Token, Trajectory};

/// How observations evolve, independently of the executing skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObsProcess {
    IidUniform,
    /// Row-stochastic `obs_vocab × obs_vocab` transition matrix.
    Markov {
        transition: Vec<Vec<f64>>,
    },
    /// `o_{t+1} = a_t mod obs_vocab`, replaced by a uniform draw with
    /// probability `noise`.
    ActionEcho {
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Draw each action from the executing skill's policy.
    Sample,
    /// Always take the executing skill's dominant action.
    Dominant,
}

/// How dominant actions are assigned to `(skill, obs)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantLayout {
    /// An independent random ordering of the actions per observation.
    #[default]
    Shuffled,
    /// One random cyclic order of the actions; skill `s` maps observation
    /// `o` to the action `d_s` places after `o mod act_vocab`, with distinct
    /// offsets `d_s ∈ [1, act_vocab)`. Under action echo every skill walks a
    /// cycle of the whole vocabulary when `act_vocab` is prime.
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Switching scale; the per-step switch probability is `1/K`.
    #[serde(rename = "K")]
    pub k: f64,
    /// When false the initial skill is kept for the whole trajectory.
    pub switching: bool,
    /// Confidence level: dominant actions have probability at least `c`.
    pub c: f64,
    pub delta: f64,
    /// Deviance bound used when building the skill library.
    pub m: f64,
    pub obs_vocab: usize,
    pub act_vocab: usize,
    pub n_skills: usize,
    pub horizon: usize,
    pub seed: u64,
    pub obs_process: ObsProcess,
    pub enforce_deviance: bool,
    #[serde(default)]
    pub layout: DominantLayout,
    /// Probability each skill puts on its dominant action.
    pub dominant_prob: f64,
    pub action_mode: ActionMode,
    /// Probability that a true boundary step carries an injected event.
    pub event_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            k: 100.0,
            switching: true,
            c: 0.9,
            delta: 0.01,
            m: 0.05,
            obs_vocab: 8,
            act_vocab: 8,
            n_skills: 4,
            horizon: 1000,
            seed: 0,
            obs_process: ObsProcess::IidUniform,
            enforce_deviance: true,
            layout: DominantLayout::Shuffled,
            dominant_prob: 0.995,
            action_mode: ActionMode::Sample,
            event_prob: 0.0,
        }
    }
}

impl GeneratorConfig {
    /// Sampled actions over 8 observations and 16 actions with four skills
    /// whose residual mass keeps the deviance bound; used to check the
    /// ratio bounds with the mixture oracle.
    pub fn bound_check() -> Self {
        GeneratorConfig {
            act_vocab: 16,
            dominant_prob: 0.998,
            horizon: 2000,
            ..GeneratorConfig::default()
        }
    }

    /// Echoed observations over a prime vocabulary of 31 tokens, eight
    /// skills in the cyclic layout and events on half of the true boundaries;
    /// used to compare segmentation arms with a count predictor.
    pub fn segmentation_suite() -> Self {
        GeneratorConfig {
            obs_vocab: 31,
            act_vocab: 31,
            n_skills: 8,
            horizon: 2000,
            obs_process: ObsProcess::ActionEcho { noise: 0.0 },
            layout: DominantLayout::Cyclic,
            dominant_prob: 0.9999,
            event_prob: 0.5,
            ..GeneratorConfig::default()
        }
    }

    pub fn switch_prob(&self) -> f64 {
        if self.switching {
            1.0 / self.k
        } else {
            0.0
        }
    }

    pub fn assumption_params(&self) -> AssumptionParams {
        AssumptionParams {
            k: self.k,
            c: self.c,
            delta: self.delta,
            m: self.m,
        }
    }

    fn validate_library(&self) -> Result<()> {
        if self.obs_vocab == 0 || self.act_vocab == 0 {
            return config("obs_vocab and act_vocab must be positive");
        }
        if self.n_skills == 0 {
            return config("n_skills must be at least 1");
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return config(format!("c must lie in (0, 1), got {}", self.c));
        }
        if !(self.m > 0.0 && self.m < 1.0) {
            return config(format!("m must lie in (0, 1), got {}", self.m));
        }
        if !(self.dominant_prob >= self.c && self.dominant_prob <= 1.0) {
            return config(format!(
                "dominant_prob must lie in [c, 1] = [{}, 1], got {}",
                self.c, self.dominant_prob
            ));
        }
        if self.act_vocab == 1 && self.dominant_prob < 1.0 {
            return config("a single-action vocabulary needs dominant_prob = 1");
        }
        if self.enforce_deviance && self.act_vocab < self.n_skills {
            return config(format!(
                "enforce_deviance needs act_vocab >= n_skills ({} < {})",
                self.act_vocab, self.n_skills
            ));
        }
        if self.layout == DominantLayout::Cyclic && self.act_vocab <= self.n_skills {
            return config(format!(
                "cyclic layout needs act_vocab > n_skills ({} <= {})",
                self.act_vocab, self.n_skills
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 1.0) {
            return config(format!(
                "K must be a finite number greater than 1 so the switch probability 1/K is below 1 (skill consistency), got {}",
                self.k
            ));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return config(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        self.validate_library()?;
        if self.n_skills < 2 {
            return config("n_skills must be at least 2");
        }
        if self.horizon == 0 {
            return config("horizon must be positive");
        }
        if !(0.0..=1.0).contains(&self.event_prob) {
            return config(format!(
                "event_prob must lie in [0, 1], got {}",
                self.event_prob
            ));
        }
        match &self.obs_process {
            ObsProcess::IidUniform => {}
            ObsProcess::ActionEcho { noise } => {
                if !(0.0..=1.0).contains(noise) {
                    return config(format!("echo noise must lie in [0, 1], got {noise}"));
                }
            }
            ObsProcess::Markov { transition } => {
                if transition.len() != self.obs_vocab
                    || transition.iter().any(|r| r.len() != self.obs_vocab)
                {
                    return config("Markov transition matrix must be obs_vocab × obs_vocab");
                }
                for (i, row) in transition.iter().enumerate() {
                    let total: f64 = row.iter().sum();
                    if row.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
                        return config(format!("Markov row {i} is not a distribution"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Fails unless `c > m` and `(K - 4) c² > 2`.
    pub fn check_separation(&self) -> Result<()> {
        let bounds = crate::analysis::theorem_bounds(&self.assumption_params())?;
        if bounds.separated {
            Ok(())
        } else {
            Err(Error::Refused(format!(
                "parameters K={}, c={}, m={} do not separate the transition and non-transition bounds",
                self.k, self.c, self.m
            )))
        }
    }
}

/// One skill's policy and its dominant action per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub id: u32,
    pub policy: PolicyTable,
    pub dominant: Vec<Token>,
}

impl SkillSpec {
    pub fn prob(&self, obs: Token, act: Token) -> f64 {
        self.policy.get(obs, act)
    }

    pub fn dominant(&self, obs: Token) -> Token {
        self.dominant[obs as usize]
    }
}

/// Builds `n_skills` policies. With `enforce_deviance`, dominant actions of
/// different skills are distinct at every observation and every skill puts
/// strictly less than `m·c/2` on another skill's dominant action; with
/// filler actions available the cross mass is capped at `m·c/4`.
pub fn build_skill_library(cfg: &GeneratorConfig) -> Result<Vec<SkillSpec>> {
    cfg.validate_library()?;
    let (n, v) = (cfg.n_skills, cfg.act_vocab);
    let mut rng = component_rng(cfg.seed, "skill-library", 0);

    let mut dominant = vec![vec![0 as Token; cfg.obs_vocab]; n];
    if cfg.layout == DominantLayout::Cyclic {
        let mut order: Vec<Token> = (0..v as Token).collect();
        order.shuffle(&mut rng);
        let mut pos = vec![0usize; v];
        for (i, &a) in order.iter().enumerate() {
            pos[a as usize] = i;
        }
        let mut offsets: Vec<usize> = (1..v).collect();
        offsets.shuffle(&mut rng);
        for (d, &off) in dominant.iter_mut().zip(&offsets) {
            for (o, slot) in d.iter_mut().enumerate() {
                *slot = order[(pos[o % v] + off) % v];
            }
        }
    }
    for o in 0..cfg.obs_vocab {
        if cfg.layout == DominantLayout::Cyclic {
            break;
        }
        if cfg.enforce_deviance {
            let mut actions: Vec<Token> = (0..v as Token).collect();
            actions.shuffle(&mut rng);
            for (s, d) in dominant.iter_mut().enumerate() {
                d[o] = actions[s];
            }
        } else {
            for d in dominant.iter_mut() {
                d[o] = rng.random_range(0..v as Token);
            }
        }
    }

    let p = cfg.dominant_prob;
    let residual = 1.0 - p;
    let cap = cfg.m * cfg.c / 2.0;
    let mut library = Vec::with_capacity(n);
    for (s, dom) in dominant.iter().enumerate() {
        let mut probs = Vec::with_capacity(cfg.obs_vocab * v);
        for (o, &own) in dom.iter().enumerate() {
            let mut row = vec![0.0; v];
            if v == 1 {
                row[0] = 1.0;
                probs.extend(row);
                continue;
            }
            let uniform_rest = residual / (v - 1) as f64;
            if cfg.enforce_deviance && n > 1 {
                let fillers = v - n;
                let cross = if fillers == 0 {
                    residual / (n - 1) as f64
                } else {
                    uniform_rest.min(cap / 2.0)
                };
                if cross >= cap {
                    return config(format!(
                        "cannot keep cross-skill mass {cross} below m·c/2 = {cap} without filler actions; raise act_vocab or dominant_prob"
                    ));
                }
                let filler = if fillers == 0 {
                    0.0
                } else {
                    (residual - cross * (n - 1) as f64) / fillers as f64
                };
                row.iter_mut().for_each(|x| *x = filler);
                for other in dominant.iter() {
                    row[other[o] as usize] = cross;
                }
            } else {
                row.iter_mut().for_each(|x| *x = uniform_rest);
            }
            row[own as usize] = p;
            probs.extend(row);
        }
        library.push(SkillSpec {
            id: s as u32,
            policy: PolicyTable::new(cfg.obs_vocab, v, probs)?,
            dominant: dom.clone(),
        });
    }
    Ok(library)
}

/// A synthetic trajectory with its ground-truth skill changes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub trajectory: Trajectory,
    pub true_boundaries: BoundarySet,
}

impl LabeledTrajectory {
    /// Derives the true boundaries from per-step skill labels.
    pub fn from_trajectory(trajectory: Trajectory) -> Result<Self> {
        let mut indices = Vec::new();
        let mut prev = None;
        for step in &trajectory.steps {
            let skill = step.skill.ok_or_else(|| {
                Error::Contract(format!(
                    "{}: step {} has no skill label",
                    trajectory.id, step.index
                ))
            })?;
            if prev.is_some_and(|p| p != skill) {
                indices.push(step.index);
            }
            prev = Some(skill);
        }
        let true_boundaries = BoundarySet::from_indices(trajectory.id.clone(), indices)?;
        Ok(LabeledTrajectory {
            trajectory,
            true_boundaries,
        })
    }
}

/// Corpus generator holding a fixed skill library.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    library: Vec<SkillSpec>,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let library = build_skill_library(&cfg)?;
        Ok(Generator { cfg, library })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn library(&self) -> &[SkillSpec] {
        &self.library
    }

    /// Exact predictive model of this generator's switching process.
    pub fn oracle(&self) -> Result<MixtureOracle> {
        oracle_from_library(&self.library, self.cfg.switch_prob())
    }

    pub fn trajectory_id(index: u64) -> String {
        format!("traj-{index:05}")
    }

    /// Trajectory number `index`; its random stream depends only on
    /// `(seed, index)`.
    pub fn trajectory(&self, index: u64) -> LabeledTrajectory {
        let cfg = &self.cfg;
        let mut rng = component_rng(cfg.seed, "trajectory", index);
        let n = cfg.n_skills;
        let switch_prob = cfg.switch_prob();

        let mut skill = rng.random_range(0..n);
        let mut obs = rng.random_range(0..cfg.obs_vocab) as Token;
        let mut steps = Vec::with_capacity(cfg.horizon);
        let mut boundaries = Vec::new();

        for t in 0..cfg.horizon {
            let mut events = EventSet::new();
            if t > 0 && switch_prob > 0.0 && rng.random::<f64>() < switch_prob {
                skill = (skill + 1 + rng.random_range(0..n - 1)) % n;
                boundaries.push(t);
                if cfg.event_prob > 0.0 && rng.random::<f64>() < cfg.event_prob {
                    events.insert(format!("switch:skill_{skill}"));
                }
            }
            let spec = &self.library[skill];
            let act = match cfg.action_mode {
                ActionMode::Dominant => spec.dominant(obs),
                ActionMode::Sample => sample_row(spec.policy.row(obs), &mut rng),
            };
            steps.push(Step {
                index: t,
                obs,
                act,
                events,
                skill: Some(skill as u32),
            });
            obs = self.next_obs(obs, act, &mut rng);
        }

        let id = Self::trajectory_id(index);
        LabeledTrajectory {
            true_boundaries: BoundarySet::from_indices(id.clone(), boundaries)
                .expect("switch steps are increasing and positive"),
            trajectory: Trajectory {
                id,
                obs_vocab: cfg.obs_vocab,
                act_vocab: cfg.act_vocab,
                steps,
            },
        }
    }

    fn next_obs(&self, obs: Token, act: Token, rng: &mut ChaCha8Rng) -> Token {
        let v = self.cfg.obs_vocab;
        match &self.cfg.obs_process {
            ObsProcess::IidUniform => rng.random_range(0..v) as Token,
            ObsProcess::Markov { transition } => sample_row(&transition[obs as usize], rng),
            ObsProcess::ActionEcho { noise } => {
                if *noise > 0.0 && rng.random::<f64>() < *noise {
                    rng.random_range(0..v) as Token
                } else {
                    act % v as Token
                }
            }
        }
    }

    /// Trajectories for every index in `indices`, in index order.
    pub fn corpus(&self, indices: Range<u64>) -> Vec<LabeledTrajectory> {
        indices
            .into_par_iter()
            .map(|i| self.trajectory(i))
            .collect()
    }
}

/// Generates trajectory 0 of the configured process.
pub fn generate(cfg: &GeneratorConfig) -> Result<LabeledTrajectory> {
    Ok(Generator::new(cfg.clone())?.trajectory(0))
}

pub fn oracle_from_library(library: &[SkillSpec], switch_prob: f64) -> Result<MixtureOracle> {
    MixtureOracle::new(
        library.iter().map(|s| s.policy.clone()).collect(),
        switch_prob,
    )
}

fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> Token {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as Token;
        }
    }
    // Rounding left u above the cumulative sum: take the last positive entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as Token
}

/// Counts true boundaries at which the new action is deviant for the old
/// skill: `π_old(a_t | o_t)` divided by the geometric mean of `π_old` over
/// the old segment's actions is below `m/2`. Returns `(satisfied, total)`.
pub fn deviance_satisfaction(
    traj: &LabeledTrajectory,
    library: &[SkillSpec],
    m: f64,
) -> (usize, usize) {
    let steps = &traj.trajectory.steps;
    let mut satisfied = 0;
    let mut total = 0;
    let mut seg_start = 0;
    for b in traj.true_boundaries.boundaries() {
        let old = &library[steps[b.index - 1].skill.unwrap_or(0) as usize];
        let log_mean = steps[seg_start..b.index]
            .iter()
            .map(|s| old.prob(s.obs, s.act).ln())
            .sum::<f64>()
            / (b.index - seg_start) as f64;
        let next = &steps[b.index];
        let log_ratio = old.prob(next.obs, next.act).ln() - log_mean;
        total += 1;
        if log_ratio < (m / 2.0).ln() {
            satisfied += 1;
        }
        seg_start = b.index;
    }
    (satisfied, total)
}
