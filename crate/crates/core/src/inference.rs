//! Sequential inverse agent modeling: exact Bayesian filtering over every
//! mental-state hypothesis, with marginals, expectations and query answers.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agent::config::{QueryKind, RewardProfile};
use crate::agent::{AgentError, AgentModel, Belief, Hypothesis};
use crate::agent::model::logsumexp;
use crate::world::{StepAction, WorldState};

/// Default bound on |𝒢 × ℛ × 𝒞 × ℬ₀|.
pub const DEFAULT_HYPOTHESIS_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{count} hypotheses exceed the cap of {cap}; reduce the goal, reward, cost or belief spaces")]
    Cap { count: usize, cap: usize },
    #[error("every hypothesis was eliminated at step {step} ({} had finite weight before it)", .survivors.len())]
    Degenerate {
        step: usize,
        /// (hypothesis index, log-likelihood at the failing step) for the
        /// hypotheses alive before it.
        survivors: Vec<(usize, f64)>,
    },
    #[error("query `{0}` is not configured")]
    QueryNotConfigured(QueryKind),
    #[error("action and frame counts disagree: {actions} actions for {frames} frames")]
    Length { actions: usize, frames: usize },
}

/// Hypothesis dimension to marginalize onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dimension {
    Goal,
    RewardProfile,
    CostProfile,
    InitialBelief,
}

/// Labelled ratings answering one query kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub kind: QueryKind,
    pub labels: Vec<String>,
    pub ratings: Vec<f64>,
}

/// Unnormalized log-weights over the hypothesis space at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorTable {
    pub hypotheses: Vec<Hypothesis>,
    pub log_weights: Vec<f64>,
    pub last_log_lik: Vec<f64>,
    pub t: usize,
    /// Current belief of each ℬ₀ element; `None` once contradicted.
    #[serde(skip)]
    pub beliefs: Vec<Option<Belief>>,
    /// Likelihood evaluations where every candidate had Q = −∞.
    pub degenerate_events: usize,
}

impl PosteriorTable {
    pub fn init(model: &AgentModel, s0: &WorldState) -> Result<Self, InferenceError> {
        Self::init_with_cap(model, s0, DEFAULT_HYPOTHESIS_CAP)
    }

    pub fn init_with_cap(model: &AgentModel, s0: &WorldState, cap: usize) -> Result<Self, InferenceError> {
        let count = model.cfg.goals.len() * model.n_rewards().max(1) * model.cfg.costs.len() * model.n_beliefs().max(1);
        if count > cap {
            return Err(InferenceError::Cap { count, cap });
        }
        let beliefs = model.initial_beliefs(s0)?;
        let prior = model.initial_hypotheses(s0, &beliefs)?;
        let (hypotheses, log_weights): (Vec<_>, Vec<_>) = prior.into_iter().unzip();
        Ok(Self {
            last_log_lik: vec![0.0; hypotheses.len()],
            hypotheses,
            log_weights,
            t: 0,
            beliefs: beliefs.into_iter().map(Some).collect(),
            degenerate_events: 0,
        })
    }

    /// Folds in one observed transition `s_prev --action--> s_next`.
    /// On a degenerate posterior the table is left unchanged.
    pub fn step(&mut self, model: &AgentModel, s_prev: &WorldState, action: &StepAction, s_next: &WorldState) -> Result<(), InferenceError> {
        let scores: Vec<Result<(f64, bool), AgentError>> = self
            .hypotheses
            .par_iter()
            .zip(self.log_weights.par_iter())
            .map(|(h, &w)| {
                if w == f64::NEG_INFINITY {
                    return Ok((f64::NEG_INFINITY, false));
                }
                let belief = match h.belief {
                    None => None,
                    Some(b) => match &self.beliefs[b] {
                        Some(bel) => Some(bel),
                        None => return Ok((f64::NEG_INFINITY, false)),
                    },
                };
                let s = model.log_likelihood(h, s_prev, belief, action)?;
                Ok((s.log_lik, s.degenerate))
            })
            .collect();
        let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;

        let next_beliefs: Vec<Option<Belief>> = match &model.belief_space {
            None => Vec::new(),
            Some(bs) => {
                let obs = bs.observe(model.env(), s_next);
                self.beliefs
                    .par_iter()
                    .map(|b| b.as_ref().and_then(|b| bs.update(model.env(), b, action, &obs, self.t + 1).ok()))
                    .collect()
            }
        };

        let mut weights = Vec::with_capacity(self.hypotheses.len());
        for (i, h) in self.hypotheses.iter().enumerate() {
            let alive = h.belief.is_none_or(|b| next_beliefs[b].is_some());
            weights.push(if alive { self.log_weights[i] + scores[i].0 } else { f64::NEG_INFINITY });
        }
        if weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            let survivors = (0..self.hypotheses.len())
                .filter(|&i| self.log_weights[i] > f64::NEG_INFINITY)
                .map(|i| (i, scores[i].0))
                .collect();
            return Err(InferenceError::Degenerate { step: self.t + 1, survivors });
        }
        self.degenerate_events += scores.iter().filter(|s| s.1).count();
        self.last_log_lik = scores.into_iter().map(|s| s.0).collect();
        self.log_weights = weights;
        self.beliefs = next_beliefs;
        self.t += 1;
        Ok(())
    }

    /// Runs the whole filter over a frame sequence.
    pub fn run(model: &AgentModel, states: &[WorldState], actions: &[StepAction]) -> Result<Self, InferenceError> {
        if states.is_empty() || actions.len() + 1 != states.len() {
            return Err(InferenceError::Length {
                actions: actions.len(),
                frames: states.len(),
            });
        }
        let mut table = Self::init(model, &states[0])?;
        for (t, a) in actions.iter().enumerate() {
            table.step(model, &states[t], a, &states[t + 1])?;
        }
        Ok(table)
    }

    pub fn eliminated(&self) -> usize {
        self.log_weights.iter().filter(|w| **w == f64::NEG_INFINITY).count()
    }

    /// Normalized posterior probabilities.
    pub fn probabilities(&self) -> Result<Vec<f64>, InferenceError> {
        let z = logsumexp(&self.log_weights);
        if z == f64::NEG_INFINITY {
            return Err(InferenceError::Degenerate {
                step: self.t,
                survivors: Vec::new(),
            });
        }
        Ok(self.log_weights.iter().map(|w| (w - z).exp()).collect())
    }

    pub fn marginal(&self, model: &AgentModel, dim: Dimension) -> Result<Vec<f64>, InferenceError> {
        let n = match dim {
            Dimension::Goal => model.cfg.goals.len(),
            Dimension::RewardProfile => model.n_rewards().max(1),
            Dimension::CostProfile => model.cfg.costs.len(),
            Dimension::InitialBelief => model.n_beliefs().max(1),
        };
        let p = self.probabilities()?;
        let mut out = vec![0.0; n];
        for (h, p) in self.hypotheses.iter().zip(p) {
            let i = match dim {
                Dimension::Goal => h.goal,
                Dimension::RewardProfile => h.reward.unwrap_or(0),
                Dimension::CostProfile => h.cost,
                Dimension::InitialBelief => h.belief.unwrap_or(0),
            };
            out[i] += p;
        }
        Ok(out)
    }

    pub fn expectation(&self, f: impl Fn(&Hypothesis) -> f64) -> Result<f64, InferenceError> {
        let p = self.probabilities()?;
        Ok(self.hypotheses.iter().zip(p).map(|(h, p)| p * f(h)).sum())
    }

    pub fn answer(&self, model: &AgentModel, kind: QueryKind) -> Result<QueryResult, InferenceError> {
        if !model.cfg.query.contains(&kind) {
            return Err(InferenceError::QueryNotConfigured(kind));
        }
        let (labels, ratings) = match kind {
            QueryKind::Goal => (
                model.cfg.goals.iter().map(|g| g.label()).collect(),
                self.marginal(model, Dimension::Goal)?,
            ),
            QueryKind::Belief => {
                let bs = model.belief_space.as_ref().ok_or(InferenceError::QueryNotConfigured(kind))?;
                (bs.labels(model.env()), self.marginal(model, Dimension::InitialBelief)?)
            }
            QueryKind::Cost => {
                let mut labels = Vec::new();
                let mut ratings = Vec::new();
                for name in model.env().spec.action_names() {
                    labels.push(name.to_owned());
                    ratings.push(self.expectation(|h| model.cfg.costs[h.cost].get(name).unwrap_or(0.0))?);
                }
                (labels, ratings)
            }
            QueryKind::Reward => {
                let profiles = model.cfg.rewards.as_ref().ok_or(InferenceError::QueryNotConfigured(kind))?;
                let per_object = profiles.iter().all(|p| matches!(p, RewardProfile::PerObject(_)));
                if per_object {
                    let mut keys: Vec<&String> = profiles
                        .iter()
                        .flat_map(|p| match p {
                            RewardProfile::PerObject(m) => m.keys().collect::<Vec<_>>(),
                            RewardProfile::PerGoal(_) => Vec::new(),
                        })
                        .collect();
                    keys.sort();
                    keys.dedup();
                    let mut ratings = Vec::new();
                    for k in &keys {
                        ratings.push(self.expectation(|h| match &profiles[h.reward.unwrap_or(0)] {
                            RewardProfile::PerObject(m) => m.get(*k).copied().unwrap_or(0.0),
                            RewardProfile::PerGoal(_) => 0.0,
                        })?);
                    }
                    (keys.into_iter().cloned().collect(), ratings)
                } else {
                    let mut ratings = Vec::new();
                    for g in 0..model.cfg.goals.len() {
                        ratings.push(self.expectation(|h| model.cfg.goal_reward(g, h.reward, &model.env().spec))?);
                    }
                    (model.cfg.goals.iter().map(|g| g.label()).collect(), ratings)
                }
            }
        };
        Ok(QueryResult { kind, labels, ratings })
    }

    /// Answers every configured query, in configured order.
    pub fn answer_all(&self, model: &AgentModel) -> Result<Vec<QueryResult>, InferenceError> {
        model.cfg.query.iter().map(|&k| self.answer(model, k)).collect()
    }
}
