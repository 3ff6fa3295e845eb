//! Mental-state hypotheses, goal priors and Boltzmann-rational action
//! likelihoods.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::belief::{Belief, BeliefError, BeliefSpace, Observation};
use super::config::{AgentConfig, ConfigError, InvalidActionPolicy, Observability};
use crate::pddl::ground::GroundedEnvironment;
use crate::pddl::{parse_formula, Formula, PddlError};
use crate::planner::{from_units, CostTable, Heuristic, PlanGoal, Planner, PlannerError};
use crate::world::{StepAction, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

/// One element of 𝒢 × ℛ × 𝒞 × ℬ₀, by index into the configured spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Hypothesis {
    pub goal: usize,
    pub reward: Option<usize>,
    pub cost: usize,
    pub belief: Option<usize>,
}

/// Candidate actions with their (belief-space) Q-values; unreachable is −∞.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValues {
    pub actions: Vec<StepAction>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepScore {
    pub log_lik: f64,
    /// Every candidate had Q = −∞ and the choice was scored uniformly.
    pub degenerate: bool,
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Boltzmann probabilities exp(βq) / Σ exp(βq). All −∞ gives the uniform
/// distribution and `true`.
pub fn boltzmann(beta: f64, q: &[f64]) -> (Vec<f64>, bool) {
    if q.is_empty() {
        return (Vec::new(), false);
    }
    let scaled: Vec<f64> = q.iter().map(|x| beta * x).collect();
    let z = logsumexp(&scaled);
    if z == f64::NEG_INFINITY {
        return (vec![1.0 / q.len() as f64; q.len()], true);
    }
    let mut p: Vec<f64> = scaled.iter().map(|x| (x - z).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    (p, false)
}

/// The generative agent: configured spaces plus the planner that scores them.
#[derive(Debug)]
pub struct AgentModel {
    pub cfg: AgentConfig,
    pub planner: Planner,
    pub belief_space: Option<BeliefSpace>,
    pub goal_formulas: Vec<Formula>,
    /// [reward profile][goal]; empty without rewards.
    rewards: Vec<Vec<f64>>,
}

impl AgentModel {
    pub fn new(env: Arc<GroundedEnvironment>, cfg: AgentConfig, s0: &WorldState) -> Result<Self, AgentError> {
        Self::with_heuristic(env, cfg, s0, Heuristic::Auto)
    }

    pub fn with_heuristic(
        env: Arc<GroundedEnvironment>,
        cfg: AgentConfig,
        s0: &WorldState,
        heuristic: Heuristic,
    ) -> Result<Self, AgentError> {
        cfg.check_against(&env)?;
        let mut goal_formulas = Vec::new();
        let mut plan_goals = Vec::new();
        for g in &cfg.goals {
            let parts = g
                .literals
                .iter()
                .map(|l| parse_formula(l, &env.spec))
                .collect::<Result<Vec<_>, _>>()?;
            let f = Formula::And(parts);
            plan_goals.push(PlanGoal::new(&env, &f)?);
            goal_formulas.push(f);
        }
        let costs = cfg
            .costs
            .iter()
            .enumerate()
            .map(|(i, c)| CostTable::new(&env, c, i))
            .collect::<Result<Vec<_>, _>>()?;
        let belief_space = match (&cfg.observability, &cfg.belief_config) {
            (Observability::Partial, Some(b)) => Some(BeliefSpace::new(&env, b, s0)?),
            _ => None,
        };
        let rewards = match &cfg.rewards {
            None => Vec::new(),
            Some(profiles) => (0..profiles.len())
                .map(|r| (0..cfg.goals.len()).map(|g| cfg.goal_reward(g, Some(r), &env.spec)).collect())
                .collect(),
        };
        let planner = Planner::new(env, plan_goals, costs).with_heuristic(heuristic);
        Ok(Self {
            cfg,
            planner,
            belief_space,
            goal_formulas,
            rewards,
        })
    }

    pub fn env(&self) -> &GroundedEnvironment {
        self.planner.env()
    }

    pub fn n_rewards(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_beliefs(&self) -> usize {
        self.belief_space.as_ref().map_or(0, BeliefSpace::len)
    }

    pub fn reward(&self, h: &Hypothesis) -> f64 {
        h.reward.map_or(0.0, |r| self.rewards[r][h.goal])
    }

    /// 𝒢 × ℛ × 𝒞 × ℬ₀ in lexicographic order, goal outermost.
    pub fn hypotheses(&self) -> Vec<Hypothesis> {
        let rs: Vec<Option<usize>> = if self.rewards.is_empty() {
            vec![None]
        } else {
            (0..self.rewards.len()).map(Some).collect()
        };
        let bs: Vec<Option<usize>> = match &self.belief_space {
            None => vec![None],
            Some(b) => (0..b.len()).map(Some).collect(),
        };
        let mut out = Vec::new();
        for goal in 0..self.cfg.goals.len() {
            for &reward in &rs {
                for cost in 0..self.cfg.costs.len() {
                    for &belief in &bs {
                        out.push(Hypothesis { goal, reward, cost, belief });
                    }
                }
            }
        }
        out
    }

    pub fn observe(&self, s: &WorldState) -> Observation {
        match &self.belief_space {
            Some(b) => b.observe(self.env(), s),
            None => Observation {
                state: s.clone(),
                visible: Vec::new(),
            },
        }
    }

    /// Initial belief of each ℬ₀ element, conditioned on the first frame.
    pub fn initial_beliefs(&self, s0: &WorldState) -> Result<Vec<Belief>, AgentError> {
        let Some(bs) = &self.belief_space else {
            return Ok(Vec::new());
        };
        let obs = bs.observe(self.env(), s0);
        (0..bs.len())
            .map(|i| bs.initial_belief(self.env(), i, &obs).map_err(AgentError::from))
            .collect()
    }

    /// Expected optimal cost to the goal over the belief, ignoring worlds
    /// where it is unreachable; `None` when it is unreachable everywhere.
    fn expected_path_cost(&self, goal: usize, cost: usize, s0: &WorldState, belief: Option<&Belief>) -> Result<Option<f64>, AgentError> {
        match belief {
            None => Ok(self.planner.path_cost_units(s0, goal, cost)?.map(from_units)),
            Some(b) => {
                let (mut num, mut den) = (0.0, 0.0);
                for p in &b.particles {
                    if let Some(v) = self.planner.path_cost_units(&p.state, goal, cost)? {
                        num += p.weight * from_units(v);
                        den += p.weight;
                    }
                }
                Ok((den > 0.0).then(|| num / den))
            }
        }
    }

    /// Every hypothesis with its prior log-weight: uniform over ℛ, 𝒞 and ℬ₀;
    /// over goals uniform without rewards, otherwise Boltzmann in net
    /// utility (reward minus optimal cost from the first frame).
    pub fn initial_hypotheses(&self, s0: &WorldState, beliefs: &[Belief]) -> Result<Vec<(Hypothesis, f64)>, AgentError> {
        let hyps = self.hypotheses();
        let n_goals = self.cfg.goals.len();
        let ln_r = (self.rewards.len().max(1) as f64).ln();
        let ln_c = (self.cfg.costs.len() as f64).ln();
        let ln_b = (self.n_beliefs().max(1) as f64).ln();
        let mut out = Vec::with_capacity(hyps.len());
        for h in hyps {
            let goal_lp = match h.reward {
                None => -(n_goals as f64).ln(),
                Some(r) => {
                    let belief = h.belief.map(|b| &beliefs[b]);
                    let mut util = Vec::with_capacity(n_goals);
                    for g in 0..n_goals {
                        let u = match self.expected_path_cost(g, h.cost, s0, belief)? {
                            Some(v) => self.cfg.beta * (self.rewards[r][g] - v),
                            None => f64::NEG_INFINITY,
                        };
                        util.push(u);
                    }
                    let z = logsumexp(&util);
                    if z == f64::NEG_INFINITY {
                        -(n_goals as f64).ln()
                    } else {
                        util[h.goal] - z
                    }
                }
            };
            out.push((h, goal_lp - ln_r - ln_c - ln_b));
        }
        Ok(out)
    }

    /// Q-values of the candidate actions in `s` (or under `belief`).
    /// Repeated frames join the candidates only when the cost profile
    /// prices `noop`.
    pub fn action_values(&self, h: &Hypothesis, s: &WorldState, belief: Option<&Belief>) -> Result<ActionValues, AgentError> {
        let env = self.env();
        let r = self.reward(h);
        let noop_priced = self.planner.cost_table(h.cost).noop.is_some();
        let mut actions = Vec::new();
        let mut q = Vec::new();
        match belief {
            None => {
                for a in env.valid_actions(s) {
                    actions.push(StepAction::Ground(a));
                    q.push(self.planner.q_value(s, a, h.goal, h.cost, r)?.unwrap_or(f64::NEG_INFINITY));
                }
                if noop_priced {
                    actions.push(StepAction::NoOp);
                    q.push(self.planner.noop_q_value(s, h.goal, h.cost, r)?.unwrap_or(f64::NEG_INFINITY));
                }
            }
            Some(b) => {
                let mut union: Vec<usize> = b.particles.iter().flat_map(|p| env.valid_actions(&p.state)).collect();
                union.sort_unstable();
                union.dedup();
                for a in union {
                    actions.push(StepAction::Ground(a));
                    q.push(self.belief_q(h, b, Some(a), r)?);
                }
                if noop_priced {
                    actions.push(StepAction::NoOp);
                    q.push(self.belief_q(h, b, None, r)?);
                }
            }
        }
        Ok(ActionValues { actions, q })
    }

    /// Weighted mean of particle Q-values over particles where the goal stays
    /// reachable. `action = None` scores standing still.
    pub fn belief_q(&self, h: &Hypothesis, b: &Belief, action: Option<usize>, reward: f64) -> Result<f64, AgentError> {
        let env = self.env();
        let (mut num, mut den) = (0.0, 0.0);
        for p in &b.particles {
            let q = match action {
                Some(a) => {
                    if !env.is_valid(&p.state, a) {
                        match self.cfg.invalid_action {
                            InvalidActionPolicy::NegInfinity => return Ok(f64::NEG_INFINITY),
                            InvalidActionPolicy::Skip => continue,
                        }
                    }
                    self.planner.q_value(&p.state, a, h.goal, h.cost, reward)?
                }
                None => self.planner.noop_q_value(&p.state, h.goal, h.cost, reward)?,
            };
            if let Some(q) = q {
                num += p.weight * q;
                den += p.weight;
            }
        }
        Ok(if den > 0.0 { num / den } else { f64::NEG_INFINITY })
    }

    /// P(a | h, s) over the candidate actions.
    pub fn action_distribution(&self, h: &Hypothesis, s: &WorldState, belief: Option<&Belief>) -> Result<(Vec<StepAction>, Vec<f64>, bool), AgentError> {
        let v = self.action_values(h, s, belief)?;
        let (p, degenerate) = boltzmann(self.cfg.beta, &v.q);
        Ok((v.actions, p, degenerate))
    }

    /// log P(action | h, s_prev). `belief` is the hypothesis' belief after
    /// observing `s_prev`.
    pub fn log_likelihood(&self, h: &Hypothesis, s_prev: &WorldState, belief: Option<&Belief>, action: &StepAction) -> Result<StepScore, AgentError> {
        if *action == StepAction::NoOp && self.planner.cost_table(h.cost).noop.is_none() {
            return Ok(StepScore {
                log_lik: 0.0,
                degenerate: false,
            });
        }
        let v = self.action_values(h, s_prev, belief)?;
        let Some(i) = v.actions.iter().position(|a| a == action) else {
            return Ok(StepScore {
                log_lik: f64::NEG_INFINITY,
                degenerate: false,
            });
        };
        let scaled: Vec<f64> = v.q.iter().map(|q| self.cfg.beta * q).collect();
        let z = logsumexp(&scaled);
        if z == f64::NEG_INFINITY {
            return Ok(StepScore {
                log_lik: -(v.q.len() as f64).ln(),
                degenerate: true,
            });
        }
        Ok(StepScore {
            log_lik: scaled[i] - z,
            degenerate: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_softmax() {
        let (p, d) = boltzmann(1.0, &[-1.0, -3.0]);
        assert!(!d);
        assert!((p[0] - 0.8807970779778823).abs() < 1e-12);
        let (p, d) = boltzmann(1.0, &[f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert!(d);
        assert_eq!(p, [0.5, 0.5]);
        let (p, _) = boltzmann(100.0, &[-1.0, -1.5, -4.0]);
        assert!(p[0] >= 0.999);
    }

    #[test]
    fn logsumexp_handles_infinities() {
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((logsumexp(&[0.0, f64::NEG_INFINITY]) - 0.0).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
