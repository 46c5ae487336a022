//! Unconditional next-action predictors.
//!
//! A [`PredictorModel`] holds immutable, shareable parameters; each
//! trajectory gets its own [`Predictor`] session that carries the context
//! memory (`reset` / `observe`) and answers `predict`.

mod count;
mod oracle;

pub use count::{train_count_predictor, CountModel, CountSession};
pub use oracle::{MixtureOracle, OracleSession};

use serde::{Deserialize, Serialize};

use crate::error::{range, Error, Result};
use crate::types::Token;

/// A stateful next-action predictor bound to one trajectory.
pub trait Predictor {
    fn obs_vocab(&self) -> usize;

    fn act_vocab(&self) -> usize;

    /// Forgets all context.
    fn reset(&mut self);

    /// Appends a completed step to the context.
    fn observe(&mut self, obs: Token, act: Token);

    /// Distribution over actions given the context and the current observation.
    fn predict(&self, obs: Token) -> Vec<f64>;

    /// Probability of `act` under [`Predictor::predict`].
    fn prob(&self, obs: Token, act: Token) -> f64 {
        self.predict(obs)[act as usize]
    }
}

/// Shared parameters from which per-trajectory sessions are opened.
pub trait PredictorModel: Sync {
    type Session<'a>: Predictor
    where
        Self: 'a;

    /// Opens a fresh session whose context holds at most `window` steps.
    fn session(&self, window: usize) -> Self::Session<'_>;
}

/// Negative log-likelihood (nats) of the observed action at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub index: usize,
    pub loss: f64,
}

/// Loss of `(obs, act)` under the current context. Does not touch the context.
pub fn step_loss<P: Predictor + ?Sized>(
    model: &P,
    index: usize,
    obs: Token,
    act: Token,
) -> Result<StepLoss> {
    if obs as usize >= model.obs_vocab() {
        return range(format!(
            "step {index}: obs {obs} outside vocabulary of size {}",
            model.obs_vocab()
        ));
    }
    if act as usize >= model.act_vocab() {
        return range(format!(
            "step {index}: act {act} outside vocabulary of size {}",
            model.act_vocab()
        ));
    }
    let p = model.prob(obs, act);
    Ok(StepLoss {
        index,
        loss: -p.ln(),
    })
}

/// Context-free policy `π(a | obs)` stored as a row-major table.
///
/// It is both its own model and its own session; `observe` and `reset` are
/// no-ops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    obs_vocab: usize,
    act_vocab: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    /// Rows must each sum to one (within 1e-9) with non-negative entries.
    pub fn new(obs_vocab: usize, act_vocab: usize, probs: Vec<f64>) -> Result<Self> {
        if obs_vocab == 0 || act_vocab == 0 {
            return range("policy table needs positive vocabulary sizes");
        }
        if probs.len() != obs_vocab * act_vocab {
            return Err(Error::Config(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                obs_vocab * act_vocab
            )));
        }
        for (o, row) in probs.chunks(act_vocab).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Config(format!(
                    "row {o} has a negative or non-finite entry"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("row {o} sums to {total}")));
            }
        }
        Ok(PolicyTable {
            obs_vocab,
            act_vocab,
            probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let act_vocab = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != act_vocab) {
            return Err(Error::Config("policy rows have unequal lengths".into()));
        }
        PolicyTable::new(rows.len(), act_vocab, rows.concat())
    }

    pub fn row(&self, obs: Token) -> &[f64] {
        let start = obs as usize * self.act_vocab;
        &self.probs[start..start + self.act_vocab]
    }

    pub fn get(&self, obs: Token, act: Token) -> f64 {
        self.probs[obs as usize * self.act_vocab + act as usize]
    }

    /// Most probable action at `obs`; ties go to the lowest token.
    pub fn argmax(&self, obs: Token) -> Token {
        let row = self.row(obs);
        let mut best = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = a;
            }
        }
        best as Token
    }

    pub fn obs_vocab(&self) -> usize {
        self.obs_vocab
    }

    pub fn act_vocab(&self) -> usize {
        self.act_vocab
    }
}

impl Predictor for PolicyTable {
    fn obs_vocab(&self) -> usize {
        self.obs_vocab
    }

    fn act_vocab(&self) -> usize {
        self.act_vocab
    }

    fn reset(&mut self) {}

    fn observe(&mut self, _obs: Token, _act: Token) {}

    fn predict(&self, obs: Token) -> Vec<f64> {
        self.row(obs).to_vec()
    }

    fn prob(&self, obs: Token, act: Token) -> f64 {
        self.get(obs, act)
    }
}

impl PredictorModel for PolicyTable {
    type Session<'a> = PolicyTable;

    fn session(&self, _window: usize) -> PolicyTable {
        self.clone()
    }
}
