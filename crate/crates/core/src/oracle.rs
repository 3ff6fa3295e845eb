//! Brute-force reference computations for verification: Bellman sweeps over
//! the explicit reachable graph and a direct product-of-likelihoods
//! posterior. Shares no search or filtering code with the planner or the
//! inference engine.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::agent::config::{InvalidActionPolicy, Observability};
use crate::agent::{AgentModel, Hypothesis};
use crate::inference::PosteriorTable;
use crate::pddl::ground::{Cond, GroundedEnvironment};
use crate::world::{StepAction, WorldState};

pub const DEFAULT_STATE_CAP: usize = 5_000;
pub const DEFAULT_ORACLE_HYPOTHESIS_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("reachable graph exceeds {cap} states")]
    StateCap { cap: usize },
    #[error("{count} hypotheses exceed the oracle cap of {cap}")]
    HypothesisCap { count: usize, cap: usize },
    #[error("oracle input: {0}")]
    Input(String),
}

/// Explicit state graph reachable from a set of roots.
#[derive(Debug, Clone)]
pub struct ReachableGraph {
    pub states: Vec<WorldState>,
    index: HashMap<WorldState, usize>,
    /// (ground action, successor) per state.
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl ReachableGraph {
    pub fn build(env: &GroundedEnvironment, roots: &[WorldState], cap: usize) -> Result<Self, OracleError> {
        let mut g = ReachableGraph {
            states: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
        };
        let mut queue = VecDeque::new();
        for r in roots {
            if !g.index.contains_key(r) {
                g.add(r.clone());
                queue.push_back(g.states.len() - 1);
            }
        }
        while let Some(i) = queue.pop_front() {
            let s = g.states[i].clone();
            let mut out = Vec::new();
            for a in 0..env.actions().len() {
                if !env.eval(&env.compiled(a).precondition, &s) {
                    continue;
                }
                let next = env.apply_unchecked(&s, a);
                let j = match g.index.get(&next) {
                    Some(&j) => j,
                    None => {
                        if g.states.len() >= cap {
                            return Err(OracleError::StateCap { cap });
                        }
                        g.add(next);
                        queue.push_back(g.states.len() - 1);
                        g.states.len() - 1
                    }
                };
                out.push((a, j));
            }
            g.edges[i] = out;
        }
        Ok(g)
    }

    fn add(&mut self, s: WorldState) {
        self.index.insert(s.clone(), self.states.len());
        self.states.push(s);
        self.edges.push(Vec::new());
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn id(&self, s: &WorldState) -> Option<usize> {
        self.index.get(s).copied()
    }
}

/// Optimal cost-to-go (micro-units) for every graph state; `None` where the
/// goal is unreachable. Plain Bellman sweeps to a fixed point.
pub fn exact_cost_to_go(env: &GroundedEnvironment, graph: &ReachableGraph, goal: &Cond, action_cost: &[i64]) -> Vec<Option<i64>> {
    let n = graph.len();
    let mut v: Vec<Option<i64>> = (0..n).map(|i| env.eval(goal, &graph.states[i]).then_some(0)).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if v[i] == Some(0) {
                continue;
            }
            let mut best = v[i];
            for &(a, j) in &graph.edges[i] {
                if let Some(vj) = v[j] {
                    let c = action_cost[a] + vj;
                    if best.is_none_or(|b| c < b) {
                        best = Some(c);
                    }
                }
            }
            if best != v[i] {
                v[i] = best;
                changed = true;
            }
        }
        if !changed {
            return v;
        }
    }
}

fn units(c: f64) -> i64 {
    (c * 1e6).round() as i64
}

/// Weighted candidate worlds for one initial belief, tracked as whole
/// histories: a world keeps its prior weight while it has agreed with every
/// frame so far.
struct WorldHistory {
    state: Option<WorldState>,
    prior: f64,
    agreed: bool,
}

fn oracle_consistent(env: &GroundedEnvironment, model: &AgentModel, p: &WorldState, s: &WorldState) -> bool {
    let bs = model.belief_space.as_ref().expect("partial model");
    let hidden_slots: Vec<u32> = bs
        .hidden
        .iter()
        .flat_map(|&o| [env.func_slot("xloc", &[o]).unwrap(), env.func_slot("yloc", &[o]).unwrap()])
        .collect();
    for f in env.all_fluents() {
        if let crate::pddl::ground::FluentId::Int(i) = f {
            if hidden_slots.contains(&i) {
                continue;
            }
        }
        if p.get(f) != s.get(f) {
            return false;
        }
    }
    let visible = bs.visible_containers(env, s);
    let spots: Vec<(i64, i64)> = bs.containers.iter().map(|&c| env.loc(s, c).unwrap()).collect();
    for &o in &bs.hidden {
        let (pl, sl) = (env.loc(p, o).unwrap(), env.loc(s, o).unwrap());
        let in_container = |l: (i64, i64)| spots.contains(&l);
        let exposed = |l: (i64, i64)| l == (-1, -1) || (env.grid.contains(l.0, l.1) && !in_container(l));
        if (exposed(pl) || exposed(sl)) && pl != sl {
            return false;
        }
        for (k, &spot) in spots.iter().enumerate() {
            if visible[k] && ((pl == spot) != (sl == spot)) {
                return false;
            }
        }
    }
    true
}

fn beliefs_at(histories: &[WorldHistory]) -> Option<Vec<(WorldState, f64)>> {
    let z: f64 = histories.iter().filter(|h| h.agreed && h.state.is_some()).map(|h| h.prior).sum();
    if z <= 0.0 {
        return None;
    }
    Some(
        histories
            .iter()
            .filter(|h| h.agreed && h.state.is_some() && h.prior > 0.0)
            .map(|h| (h.state.clone().unwrap(), h.prior / z))
            .collect(),
    )
}

fn softmax_log_prob(beta: f64, q: &[f64], i: usize) -> (f64, bool) {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return (-(q.len() as f64).ln(), true);
    }
    let z: f64 = q.iter().map(|x| (beta * x - beta * m).exp()).sum();
    (beta * q[i] - beta * m - z.ln(), false)
}

type WeightedWorlds = Vec<(WorldState, f64)>;

/// Posterior over the model's hypothesis space computed directly as prior ×
/// Π likelihoods from exact cost-to-go tables.
pub fn exact_posterior(model: &AgentModel, states: &[WorldState], actions: &[StepAction]) -> Result<PosteriorTable, OracleError> {
    exact_posterior_with_caps(model, states, actions, DEFAULT_STATE_CAP, DEFAULT_ORACLE_HYPOTHESIS_CAP)
}

pub fn exact_posterior_with_caps(
    model: &AgentModel,
    states: &[WorldState],
    actions: &[StepAction],
    state_cap: usize,
    hypothesis_cap: usize,
) -> Result<PosteriorTable, OracleError> {
    if states.len() != actions.len() + 1 {
        return Err(OracleError::Input(format!("{} frames for {} actions", states.len(), actions.len())));
    }
    let env = model.env();
    let cfg = &model.cfg;
    let hyps: Vec<Hypothesis> = model.hypotheses();
    if hyps.len() > hypothesis_cap {
        return Err(OracleError::HypothesisCap {
            count: hyps.len(),
            cap: hypothesis_cap,
        });
    }
    let partial = cfg.observability == Observability::Partial;
    let n_b = model.n_beliefs();

    // belief trajectories: per initial belief, per time, the weighted worlds
    let mut trajectories: Vec<Vec<Option<WeightedWorlds>>> = Vec::new();
    let mut roots = vec![states[0].clone()];
    if partial {
        let bs = model.belief_space.as_ref().unwrap();
        let n = bs.len();
        for b in 0..n {
            let mut hist: Vec<WorldHistory> = (0..n)
                .map(|j| {
                    let prior = if n == 1 {
                        1.0
                    } else if j == b {
                        bs.config.confidence
                    } else {
                        (1.0 - bs.config.confidence) / (n - 1) as f64
                    };
                    let w = bs.world(env, &states[0], j);
                    roots.push(w.clone());
                    WorldHistory {
                        state: Some(w),
                        prior,
                        agreed: true,
                    }
                })
                .collect();
            let mut traj = Vec::new();
            for h in hist.iter_mut() {
                h.agreed = oracle_consistent(env, model, h.state.as_ref().unwrap(), &states[0]);
            }
            traj.push(beliefs_at(&hist));
            for (t, a) in actions.iter().enumerate() {
                for h in hist.iter_mut() {
                    let Some(s) = h.state.take() else { continue };
                    h.state = match a {
                        StepAction::NoOp => Some(s),
                        StepAction::Ground(a) => env.is_valid(&s, *a).then(|| env.apply_unchecked(&s, *a)),
                    };
                    if let Some(s) = &h.state {
                        h.agreed = h.agreed && oracle_consistent(env, model, s, &states[t + 1]);
                    }
                }
                traj.push(beliefs_at(&hist));
            }
            trajectories.push(traj);
        }
    }

    let graph = ReachableGraph::build(env, &roots, state_cap)?;
    let cost_units: Vec<Vec<i64>> = cfg
        .costs
        .iter()
        .map(|c| env.actions().iter().map(|a| units(c.get(&a.schema).unwrap_or(f64::NAN))).collect())
        .collect();
    let noop_units: Vec<Option<i64>> = cfg.costs.iter().map(|c| c.get(crate::agent::config::NOOP_KEY).map(units)).collect();
    let goal_conds: Vec<Cond> = cfg.check_against(env).map_err(|e| OracleError::Input(e.to_string()))?;
    let mut tables: HashMap<(usize, usize), Vec<Option<i64>>> = HashMap::new();
    for (g, cond) in goal_conds.iter().enumerate() {
        for (c, per_action) in cost_units.iter().enumerate() {
            tables.insert((g, c), exact_cost_to_go(env, &graph, cond, per_action));
        }
    }
    let v = |s: &WorldState, g: usize, c: usize| -> Option<i64> { tables[&(g, c)][graph.id(s).expect("state in graph")] };
    let reward = |h: &Hypothesis| -> f64 { h.reward.map_or(0.0, |r| cfg.goal_reward(h.goal, Some(r), &env.spec)) };

    let n_r = model.n_rewards().max(1);
    let mut log_weights = Vec::with_capacity(hyps.len());
    let mut last = Vec::with_capacity(hyps.len());
    let mut degenerate = 0usize;
    for h in &hyps {
        // prior
        let mut lw = -(n_r as f64).ln() - (cfg.costs.len() as f64).ln() - (n_b.max(1) as f64).ln();
        match h.reward {
            None => lw -= (cfg.goals.len() as f64).ln(),
            Some(r) => {
                let utils: Vec<f64> = (0..cfg.goals.len())
                    .map(|g| {
                        let rg = cfg.goal_reward(g, Some(r), &env.spec);
                        let cost = match h.belief {
                            None => v(&states[0], g, h.cost).map(|x| x as f64 / 1e6),
                            Some(b) => {
                                let worlds = trajectories[b][0].as_ref().expect("initial belief");
                                let mut acc = 0.0;
                                let mut mass = 0.0;
                                for (w, p) in worlds {
                                    if let Some(x) = v(w, g, h.cost) {
                                        acc += p * (x as f64 / 1e6);
                                        mass += p;
                                    }
                                }
                                (mass > 0.0).then(|| acc / mass)
                            }
                        };
                        cost.map_or(f64::NEG_INFINITY, |c| cfg.beta * (rg - c))
                    })
                    .collect();
                let m = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lw += if m == f64::NEG_INFINITY {
                    -(cfg.goals.len() as f64).ln()
                } else {
                    utils[h.goal] - m - utils.iter().map(|u| (u - m).exp()).sum::<f64>().ln()
                };
            }
        }
        let mut ll_last = 0.0;
        for (t, a) in actions.iter().enumerate() {
            if lw == f64::NEG_INFINITY {
                ll_last = f64::NEG_INFINITY;
                break;
            }
            let rg = reward(h);
            let q_of = |s: &WorldState, act: Option<usize>| -> f64 {
                match act {
                    Some(a) => {
                        let next = env.apply_unchecked(s, a);
                        v(&next, h.goal, h.cost).map_or(f64::NEG_INFINITY, |x| rg - (cost_units[h.cost][a] + x) as f64 / 1e6)
                    }
                    None => v(s, h.goal, h.cost).map_or(f64::NEG_INFINITY, |x| rg - (noop_units[h.cost].unwrap() + x) as f64 / 1e6),
                }
            };
            let priced = noop_units[h.cost].is_some();
            if *a == StepAction::NoOp && !priced {
                ll_last = 0.0;
            } else {
                let mut cands: Vec<StepAction> = Vec::new();
                let mut q: Vec<f64> = Vec::new();
                match h.belief {
                    None => {
                        let s = &states[t];
                        for act in 0..env.actions().len() {
                            if env.is_valid(s, act) {
                                cands.push(StepAction::Ground(act));
                                q.push(q_of(s, Some(act)));
                            }
                        }
                        if priced {
                            cands.push(StepAction::NoOp);
                            q.push(q_of(s, None));
                        }
                    }
                    Some(b) => {
                        let Some(worlds) = trajectories[b][t].as_ref() else {
                            lw = f64::NEG_INFINITY;
                            ll_last = f64::NEG_INFINITY;
                            break;
                        };
                        let mut acts: Vec<usize> = (0..env.actions().len())
                            .filter(|&act| worlds.iter().any(|(w, _)| env.is_valid(w, act)))
                            .collect();
                        acts.sort_unstable();
                        let mut options: Vec<Option<usize>> = acts.into_iter().map(Some).collect();
                        if priced {
                            options.push(None);
                        }
                        for opt in options {
                            let mut acc = 0.0;
                            let mut mass = 0.0;
                            let mut dead = false;
                            for (w, p) in worlds {
                                if let Some(act) = opt {
                                    if !env.is_valid(w, act) {
                                        if cfg.invalid_action == InvalidActionPolicy::NegInfinity {
                                            dead = true;
                                            break;
                                        }
                                        continue;
                                    }
                                }
                                let x = q_of(w, opt);
                                if x > f64::NEG_INFINITY {
                                    acc += p * x;
                                    mass += p;
                                }
                            }
                            cands.push(opt.map_or(StepAction::NoOp, StepAction::Ground));
                            q.push(if dead || mass == 0.0 { f64::NEG_INFINITY } else { acc / mass });
                        }
                    }
                }
                ll_last = match cands.iter().position(|c| c == a) {
                    None => f64::NEG_INFINITY,
                    Some(i) => {
                        let (lp, d) = softmax_log_prob(cfg.beta, &q, i);
                        if d {
                            degenerate += 1;
                        }
                        if !d && q[i] == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            lp
                        }
                    }
                };
            }
            lw += ll_last;
            if let Some(b) = h.belief {
                if trajectories[b][t + 1].is_none() {
                    lw = f64::NEG_INFINITY;
                }
            }
        }
        log_weights.push(lw);
        last.push(ll_last);
    }
    Ok(PosteriorTable {
        hypotheses: hyps,
        log_weights,
        last_log_lik: last,
        t: actions.len(),
        beliefs: Vec::new(),
        degenerate_events: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_matches_hand_values() {
        let (lp, d) = softmax_log_prob(1.0, &[-1.0, -3.0], 0);
        assert!(!d);
        assert!((lp.exp() - 0.8807970779778823).abs() < 1e-12);
    }
}
