use std::collections::VecDeque;

use super::{PolicyTable, Predictor, PredictorModel};
use crate::error::{config, Error, Result};
use crate::types::Token;

/// Exact predictive distribution of a switching-policy process.
///
/// The hidden skill stays put with probability `1 - q` and otherwise jumps
/// uniformly to one of the other skills. A session keeps the filtered
/// belief over the current skill and predicts
/// `P(a | history, obs) = Σ_j prior_j π_j(a | obs)`, where `prior` is the
/// belief propagated through one switching step.
#[derive(Debug, Clone)]
pub struct MixtureOracle {
    policies: Vec<PolicyTable>,
    switch_prob: f64,
}

impl MixtureOracle {
    pub fn new(policies: Vec<PolicyTable>, switch_prob: f64) -> Result<Self> {
        let first = policies
            .first()
            .ok_or_else(|| Error::Config("mixture oracle needs at least one skill".into()))?;
        if policies
            .iter()
            .any(|p| p.obs_vocab() != first.obs_vocab() || p.act_vocab() != first.act_vocab())
        {
            return config("skill policies disagree on vocabulary sizes");
        }
        if !(0.0..=1.0).contains(&switch_prob) {
            return config(format!("switch probability {switch_prob} outside [0, 1]"));
        }
        Ok(MixtureOracle {
            policies,
            switch_prob,
        })
    }

    pub fn num_skills(&self) -> usize {
        self.policies.len()
    }

    pub fn switch_prob(&self) -> f64 {
        self.switch_prob
    }

    pub fn policies(&self) -> &[PolicyTable] {
        &self.policies
    }

    /// Belief over the next step's skill given the belief over the current one.
    pub fn propagate(&self, posterior: &[f64]) -> Vec<f64> {
        let n = posterior.len();
        if n < 2 {
            return posterior.to_vec();
        }
        let q = self.switch_prob;
        posterior
            .iter()
            .map(|&p| (1.0 - q) * p + q * (1.0 - p) / (n - 1) as f64)
            .collect()
    }

    fn condition(&self, prior: Vec<f64>, obs: Token, act: Token) -> Vec<f64> {
        let weighted: Vec<f64> = prior
            .iter()
            .zip(&self.policies)
            .map(|(w, pi)| w * pi.get(obs, act))
            .collect();
        let total: f64 = weighted.iter().sum();
        if total > 0.0 {
            weighted.into_iter().map(|w| w / total).collect()
        } else {
            // Action impossible under every skill: no information.
            prior
        }
    }

    fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.policies.len() as f64; self.policies.len()]
    }
}

/// Filtering state of a [`MixtureOracle`] for one trajectory.
///
/// While fewer than `window` steps have been observed the belief is updated
/// incrementally; afterwards it is re-filtered from the uniform belief over
/// the last `window` steps.
#[derive(Debug, Clone)]
pub struct OracleSession<'m> {
    oracle: &'m MixtureOracle,
    window: usize,
    history: VecDeque<(Token, Token)>,
    posterior: Vec<f64>,
}

impl OracleSession<'_> {
    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    /// Overrides the current belief over skills.
    pub fn set_posterior(&mut self, posterior: Vec<f64>) -> Result<()> {
        if posterior.len() != self.oracle.num_skills() {
            return config("posterior length differs from the number of skills");
        }
        let total: f64 = posterior.iter().sum();
        if posterior.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return config("posterior is not a probability distribution");
        }
        self.posterior = posterior;
        Ok(())
    }

    fn refilter(&mut self) {
        let mut belief = self.oracle.uniform();
        for (i, &(obs, act)) in self.history.iter().enumerate() {
            let prior = if i == 0 {
                belief
            } else {
                self.oracle.propagate(&belief)
            };
            belief = self.oracle.condition(prior, obs, act);
        }
        self.posterior = belief;
    }
}

impl Predictor for OracleSession<'_> {
    fn obs_vocab(&self) -> usize {
        self.oracle.policies[0].obs_vocab()
    }

    fn act_vocab(&self) -> usize {
        self.oracle.policies[0].act_vocab()
    }

    fn reset(&mut self) {
        self.history.clear();
        self.posterior = self.oracle.uniform();
    }

    fn observe(&mut self, obs: Token, act: Token) {
        if self.window == 0 {
            return;
        }
        if self.history.len() == self.window {
            self.history.pop_front();
            self.history.push_back((obs, act));
            self.refilter();
        } else {
            let prior = self.oracle.propagate(&self.posterior);
            self.history.push_back((obs, act));
            self.posterior = self.oracle.condition(prior, obs, act);
        }
    }

    fn predict(&self, obs: Token) -> Vec<f64> {
        let prior = self.oracle.propagate(&self.posterior);
        let mut out = vec![0.0; self.act_vocab()];
        for (w, pi) in prior.iter().zip(&self.oracle.policies) {
            for (o, p) in out.iter_mut().zip(pi.row(obs)) {
                *o += w * p;
            }
        }
        out
    }

    fn prob(&self, obs: Token, act: Token) -> f64 {
        let prior = self.oracle.propagate(&self.posterior);
        prior
            .iter()
            .zip(&self.oracle.policies)
            .map(|(w, pi)| w * pi.get(obs, act))
            .sum()
    }
}

impl PredictorModel for MixtureOracle {
    type Session<'a> = OracleSession<'a>;

    fn session(&self, window: usize) -> OracleSession<'_> {
        OracleSession {
            oracle: self,
            window,
            history: VecDeque::new(),
            posterior: self.uniform(),
        }
    }
}
