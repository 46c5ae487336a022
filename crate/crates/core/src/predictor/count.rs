use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Predictor, PredictorModel};
use crate::error::{config, range, Error, Result};
use crate::types::{Token, Trajectory};

const FORMAT: &str = "sbd-count-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ContextKey {
    history: Vec<Token>,
    obs: Token,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    counts: Vec<u64>,
    total: u64,
}

/// Additively smoothed count model of `P(a_t | o_{t-n..t-1}, o_t)`.
///
/// The context key is the (up to `order`) most recent observation tokens
/// before the current one. Unseen keys fall back to the uniform
/// distribution, so every probability is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    order: usize,
    alpha: f64,
    obs_vocab: usize,
    act_vocab: usize,
    rows: HashMap<ContextKey, Row>,
}

impl CountModel {
    /// A model with no observations; it predicts the uniform distribution.
    pub fn empty(order: usize, alpha: f64, obs_vocab: usize, act_vocab: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return range(format!("alpha must be positive and finite, got {alpha}"));
        }
        if obs_vocab == 0 || act_vocab == 0 {
            return range("vocabulary sizes must be positive");
        }
        Ok(CountModel {
            order,
            alpha,
            obs_vocab,
            act_vocab,
            rows: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn obs_vocab(&self) -> usize {
        self.obs_vocab
    }

    pub fn act_vocab(&self) -> usize {
        self.act_vocab
    }

    /// Number of distinct (context, observation) keys seen in training.
    pub fn num_contexts(&self) -> usize {
        self.rows.len()
    }

    /// Adds every step of `traj` to the counts.
    pub fn absorb(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.obs_vocab != self.obs_vocab || traj.act_vocab != self.act_vocab {
            return config(format!(
                "trajectory {:?} has vocabularies ({}, {}), model expects ({}, {})",
                traj.id, traj.obs_vocab, traj.act_vocab, self.obs_vocab, self.act_vocab
            ));
        }
        traj.ensure_valid()?;
        let obs: Vec<Token> = traj.steps.iter().map(|s| s.obs).collect();
        for (i, step) in traj.steps.iter().enumerate() {
            let key = ContextKey {
                history: obs[i.saturating_sub(self.order)..i].to_vec(),
                obs: step.obs,
            };
            let act_vocab = self.act_vocab;
            let row = self.rows.entry(key).or_insert_with(|| Row {
                counts: vec![0; act_vocab],
                total: 0,
            });
            row.counts[step.act as usize] += 1;
            row.total += 1;
        }
        Ok(())
    }

    fn probability(&self, history: &[Token], obs: Token, act: Token) -> f64 {
        let uniform = 1.0 / self.act_vocab as f64;
        // Lookup needs an owned key; contexts are short.
        let key = ContextKey {
            history: history.to_vec(),
            obs,
        };
        match self.rows.get(&key) {
            Some(row) => {
                (row.counts[act as usize] as f64 + self.alpha)
                    / (row.total as f64 + self.alpha * self.act_vocab as f64)
            }
            None => uniform,
        }
    }

    fn distribution(&self, history: &[Token], obs: Token) -> Vec<f64> {
        let key = ContextKey {
            history: history.to_vec(),
            obs,
        };
        match self.rows.get(&key) {
            Some(row) => {
                let denom = row.total as f64 + self.alpha * self.act_vocab as f64;
                row.counts
                    .iter()
                    .map(|&c| (c as f64 + self.alpha) / denom)
                    .collect()
            }
            None => vec![1.0 / self.act_vocab as f64; self.act_vocab],
        }
    }

    /// Writes the model as versioned JSON. Rows are sorted so equal models
    /// produce identical bytes.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut keys: Vec<&ContextKey> = self.rows.keys().collect();
        keys.sort();
        let rows = keys
            .into_iter()
            .map(|k| StoredRow {
                context: k.history.clone(),
                obs: k.obs,
                counts: self.rows[k].counts.clone(),
            })
            .collect();
        let stored = StoredModel {
            format: FORMAT.to_string(),
            version: VERSION,
            order: self.order,
            alpha: self.alpha,
            obs_vocab: self.obs_vocab,
            act_vocab: self.act_vocab,
            rows,
        };
        serde_json::to_writer(writer, &stored)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let stored: StoredModel = serde_json::from_reader(reader)?;
        if stored.format != FORMAT || stored.version != VERSION {
            return config(format!(
                "unsupported model file {:?} version {}",
                stored.format, stored.version
            ));
        }
        let mut model = CountModel::empty(
            stored.order,
            stored.alpha,
            stored.obs_vocab,
            stored.act_vocab,
        )?;
        for row in stored.rows {
            if row.counts.len() != model.act_vocab
                || row.context.len() > model.order
                || row.obs as usize >= model.obs_vocab
                || row.context.iter().any(|&o| o as usize >= model.obs_vocab)
            {
                return Err(Error::Config(format!(
                    "malformed count row for context {:?} obs {}",
                    row.context, row.obs
                )));
            }
            let total = row.counts.iter().sum();
            model.rows.insert(
                ContextKey {
                    history: row.context,
                    obs: row.obs,
                },
                Row {
                    counts: row.counts,
                    total,
                },
            );
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    obs_vocab: usize,
    act_vocab: usize,
    rows: Vec<StoredRow>,
}

#[derive(Serialize, Deserialize)]
struct StoredRow {
    context: Vec<Token>,
    obs: Token,
    counts: Vec<u64>,
}

/// Fits a [`CountModel`] on every step of every trajectory, using the
/// preceding `order` observations of the same trajectory as context.
pub fn train_count_predictor(
    corpus: &[Trajectory],
    order: usize,
    alpha: f64,
) -> Result<CountModel> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::Config("training corpus is empty".into()))?;
    let mut model = CountModel::empty(order, alpha, first.obs_vocab, first.act_vocab)?;
    for traj in corpus {
        model.absorb(traj)?;
    }
    Ok(model)
}

/// Per-trajectory context over a shared [`CountModel`].
#[derive(Debug, Clone)]
pub struct CountSession<'m> {
    model: &'m CountModel,
    capacity: usize,
    history: VecDeque<Token>,
}

impl CountSession<'_> {
    fn context(&self) -> Vec<Token> {
        self.history.iter().copied().collect()
    }
}

impl Predictor for CountSession<'_> {
    fn obs_vocab(&self) -> usize {
        self.model.obs_vocab
    }

    fn act_vocab(&self) -> usize {
        self.model.act_vocab
    }

    fn reset(&mut self) {
        self.history.clear();
    }

    fn observe(&mut self, obs: Token, _act: Token) {
        if self.capacity == 0 {
            return;
        }
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back(obs);
    }

    fn predict(&self, obs: Token) -> Vec<f64> {
        self.model.distribution(&self.context(), obs)
    }

    fn prob(&self, obs: Token, act: Token) -> f64 {
        self.model.probability(&self.context(), obs, act)
    }
}

impl PredictorModel for CountModel {
    type Session<'a> = CountSession<'a>;

    fn session(&self, window: usize) -> CountSession<'_> {
        let capacity = self.order.min(window);
        CountSession {
            model: self,
            capacity,
            history: VecDeque::with_capacity(capacity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repeated(obs: Token, act: Token, n: usize) -> Trajectory {
        Trajectory::from_tokens("r", 2, 2, &vec![obs; n], &vec![act; n])
    }

    #[test]
    fn untrained_model_is_uniform() {
        let model = CountModel::empty(1, 1.0, 3, 4).unwrap();
        let session = model.session(8);
        for obs in 0..3 {
            assert_eq!(session.predict(obs), vec![0.25; 4]);
        }
    }

    #[test]
    fn order_zero_counts() {
        let model = train_count_predictor(&[repeated(0, 1, 10)], 0, 1.0).unwrap();
        let session = model.session(8);
        let p = session.predict(0);
        assert!((p[1] - 11.0 / 12.0).abs() < 1e-15);
        assert!((p[0] - 1.0 / 12.0).abs() < 1e-15);
        let loss = super::super::step_loss(&session, 0, 0, 1).unwrap().loss;
        assert!((loss - (12.0f64 / 11.0).ln()).abs() < 1e-15);
        assert!((loss - 0.0870).abs() < 5e-5);
    }

    /// Brute-force recount of a 20-step toy corpus with order 1: for each
    /// (previous obs, obs) pair, the dominant action's probability must be
    /// (count + 1) / (total + 2).
    #[test]
    fn order_one_matches_brute_force_counts() {
        let obs: Vec<Token> = (0..20).map(|i| ((i * 7) % 3 % 2) as Token).collect();
        let acts: Vec<Token> = obs
            .iter()
            .enumerate()
            .map(|(i, &o)| (o + (i % 5 == 0) as Token) % 2)
            .collect();
        let traj = Trajectory::from_tokens("toy", 2, 2, &obs, &acts);
        let model = train_count_predictor(std::slice::from_ref(&traj), 1, 1.0).unwrap();

        for prev in 0..2 {
            for cur in 0..2 {
                let mut counts = [0usize; 2];
                for i in 1..20 {
                    if obs[i - 1] == prev && obs[i] == cur {
                        counts[acts[i] as usize] += 1;
                    }
                }
                let total = counts[0] + counts[1];
                let mut session = model.session(4);
                session.observe(prev, 0);
                let p = session.predict(cur);
                if total == 0 {
                    assert_eq!(p, vec![0.5, 0.5]);
                    continue;
                }
                for a in 0..2 {
                    let expect = (counts[a] as f64 + 1.0) / (total as f64 + 2.0);
                    assert!((p[a] - expect).abs() < 1e-15, "ctx ({prev},{cur}) act {a}");
                }
            }
        }
        // Empty-context key is only fed by step 0.
        let session = model.session(4);
        let p = session.predict(obs[0]);
        let expect = 2.0 / 3.0;
        assert!((p[acts[0] as usize] - expect).abs() < 1e-15);
    }

    #[test]
    fn vocab_mismatch_is_config_error() {
        let a = repeated(0, 1, 3);
        let b = Trajectory::from_tokens("b", 3, 2, &[0], &[0]);
        assert!(matches!(
            train_count_predictor(&[a, b], 1, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_bad_alpha_and_empty_corpus() {
        assert!(train_count_predictor(&[repeated(0, 1, 3)], 1, 0.0).is_err());
        assert!(train_count_predictor(&[], 1, 1.0).is_err());
    }

    #[test]
    fn window_caps_context() {
        let traj = Trajectory::from_tokens("w", 3, 2, &[0, 1, 2, 0, 1, 2], &[0, 1, 0, 1, 0, 1]);
        let model = train_count_predictor(&[traj], 3, 1.0).unwrap();
        let mut a = model.session(1);
        let mut b = model.session(1);
        a.observe(0, 0);
        a.observe(1, 1);
        b.observe(2, 0);
        b.observe(1, 1);
        assert_eq!(a.predict(2), b.predict(2));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let traj = Trajectory::from_tokens("s", 3, 3, &[0, 1, 2, 2, 1, 0], &[2, 1, 0, 0, 1, 2]);
        let model = train_count_predictor(&[traj], 2, 0.37).unwrap();
        let mut bytes = Vec::new();
        model.save(&mut bytes).unwrap();
        let loaded = CountModel::load(bytes.as_slice()).unwrap();
        assert_eq!(loaded, model);
        let mut again = Vec::new();
        loaded.save(&mut again).unwrap();
        assert_eq!(bytes, again);
        let (mut s1, mut s2) = (model.session(4), loaded.session(4));
        for (o, a) in [(0, 2), (1, 1)] {
            s1.observe(o, a);
            s2.observe(o, a);
        }
        for o in 0..3 {
            assert_eq!(s1.predict(o), s2.predict(o));
        }
    }
}
