//! Optimal path costs by A* with a shared memo table, and the Q-values built
//! on them.
//!
//! Costs are held as integer micro-units so that sums are exact and the
//! memoized value for a state never depends on which search produced it.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::agent::config::{CostProfile, NOOP_KEY};
use crate::pddl::ground::{Cond, GroundedEnvironment, ObjId};
use crate::pddl::{Formula, Term};
use crate::world::WorldState;

/// Micro-units per unit of cost.
pub const COST_SCALE: f64 = 1e6;

/// Default node budget for one search.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

pub fn to_units(c: f64) -> i64 {
    (c * COST_SCALE).round() as i64
}

pub fn from_units(u: i64) -> f64 {
    u as f64 / COST_SCALE
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("search exceeded the node budget of {budget}")]
    Budget { budget: usize },
    #[error("cost profile {profile}: {message}")]
    Costs { profile: usize, message: String },
}

/// Per-ground-action costs of one profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTable {
    pub per_action: Vec<i64>,
    pub noop: Option<i64>,
    pub min: i64,
}

impl CostTable {
    pub fn new(env: &GroundedEnvironment, profile: &CostProfile, index: usize) -> Result<Self, PlannerError> {
        let per_action = env
            .actions()
            .iter()
            .map(|a| {
                profile
                    .get(&a.schema)
                    .map(to_units)
                    .filter(|&u| u > 0)
                    .ok_or_else(|| PlannerError::Costs {
                        profile: index,
                        message: format!("no positive cost for `{}`", a.schema),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let min = per_action.iter().copied().min().unwrap_or(1);
        Ok(Self {
            per_action,
            noop: profile.get(NOOP_KEY).map(to_units),
            min,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    Zero,
    Manhattan,
    /// Manhattan when every goal literal is an `at`/`has` relation between
    /// located objects, zero otherwise.
    Auto,
}

/// Agent/object pairs whose grid distance bounds the remaining cost.
fn manhattan_targets(env: &GroundedEnvironment, goal: &Formula) -> Option<Vec<(ObjId, ObjId, bool)>> {
    let mut out = Vec::new();
    let mut ok = true;
    fn walk(f: &Formula, env: &GroundedEnvironment, out: &mut Vec<(ObjId, ObjId, bool)>, ok: &mut bool) {
        match f {
            Formula::And(items) => items.iter().for_each(|i| walk(i, env, out, ok)),
            Formula::Atom(a) if (a.predicate == "at" || a.predicate == "has") && a.args.len() == 2 => {
                let ids: Vec<Option<ObjId>> = a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Const(c) => env.object_id(c),
                        Term::Var(_) => None,
                    })
                    .collect();
                match (ids[0], ids[1]) {
                    (Some(x), Some(y)) if env.func_slot("xloc", &[x]).is_some() && env.func_slot("xloc", &[y]).is_some() => {
                        out.push((x, y, a.predicate == "has"))
                    }
                    _ => *ok = false,
                }
            }
            _ => *ok = false,
        }
    }
    walk(goal, env, &mut out, &mut ok);
    (ok && !out.is_empty()).then_some(out)
}

/// A goal compiled for search.
#[derive(Debug, Clone)]
pub struct PlanGoal {
    pub cond: Cond,
    targets: Option<Vec<(ObjId, ObjId, bool)>>,
}

impl PlanGoal {
    pub fn new(env: &GroundedEnvironment, formula: &Formula) -> Result<Self, crate::pddl::PddlError> {
        Ok(Self {
            cond: env.compile_ground(formula)?,
            targets: manhattan_targets(env, formula),
        })
    }

    pub fn from_cond(cond: Cond) -> Self {
        Self { cond, targets: None }
    }

    pub fn supports_manhattan(&self) -> bool {
        self.targets.is_some()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
    pub expansions: u64,
}

type CacheKey = (WorldState, u32, u32);

/// Memoized optimal-cost oracle over one environment.
#[derive(Debug)]
pub struct Planner {
    env: Arc<GroundedEnvironment>,
    goals: Vec<PlanGoal>,
    costs: Vec<CostTable>,
    heuristic: Heuristic,
    budget: usize,
    cache: RwLock<HashMap<CacheKey, Option<i64>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    expansions: AtomicU64,
}

/// States of a path with the cost accumulated at each.
type CostedPath = Vec<(WorldState, i64)>;

impl Planner {
    pub fn new(env: Arc<GroundedEnvironment>, goals: Vec<PlanGoal>, costs: Vec<CostTable>) -> Self {
        Self {
            env,
            goals,
            costs,
            heuristic: Heuristic::Auto,
            budget: DEFAULT_NODE_BUDGET,
            cache: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            expansions: AtomicU64::new(0),
        }
    }

    pub fn with_heuristic(mut self, h: Heuristic) -> Self {
        self.heuristic = h;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn env(&self) -> &GroundedEnvironment {
        &self.env
    }

    pub fn env_arc(&self) -> &Arc<GroundedEnvironment> {
        &self.env
    }

    pub fn goal(&self, g: usize) -> &PlanGoal {
        &self.goals[g]
    }

    pub fn cost_table(&self, c: usize) -> &CostTable {
        &self.costs[c]
    }

    pub fn n_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.cache.read().expect("cache lock").len() as u64,
            expansions: self.expansions.load(Ordering::Relaxed),
        }
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }

    fn h(&self, s: &WorldState, goal: &PlanGoal, costs: &CostTable) -> i64 {
        let use_manhattan = match self.heuristic {
            Heuristic::Zero => false,
            Heuristic::Manhattan | Heuristic::Auto => goal.targets.is_some(),
        };
        if !use_manhattan {
            return 0;
        }
        let env = &*self.env;
        let mut best = 0;
        for &(a, o, _) in goal.targets.as_ref().unwrap() {
            let (Some((ax, ay)), Some((ox, oy))) = (env.loc(s, a), env.loc(s, o)) else {
                continue;
            };
            if !env.grid.contains(ax, ay) || !env.grid.contains(ox, oy) {
                continue;
            }
            best = best.max(((ax - ox).abs() + (ay - oy).abs()) * costs.min);
        }
        best
    }

    /// Heuristic value in cost units, exposed for admissibility checks.
    pub fn heuristic_value(&self, s: &WorldState, goal: usize, cost: usize) -> f64 {
        from_units(self.h(s, &self.goals[goal], &self.costs[cost]))
    }

    /// Optimal remaining cost (micro-units) from `s` to `goal`, `None` when
    /// unreachable.
    pub fn path_cost_units(&self, s: &WorldState, goal: usize, cost: usize) -> Result<Option<i64>, PlannerError> {
        let key = (s.clone(), goal as u32, cost as u32);
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let (result, path) = self.search(s, goal, cost)?;
        let mut cache = self.cache.write().expect("cache lock");
        match result {
            Some(total) => {
                for (state, g) in path {
                    if let Entry::Vacant(e) = cache.entry((state, goal as u32, cost as u32)) {
                        e.insert(Some(total - g));
                    }
                }
            }
            None => {
                cache.entry(key).or_insert(None);
            }
        }
        Ok(result)
    }

    pub fn path_cost(&self, s: &WorldState, goal: usize, cost: usize) -> Result<Option<f64>, PlannerError> {
        Ok(self.path_cost_units(s, goal, cost)?.map(from_units))
    }

    /// A* from `s`; returns the cost and the optimal path with the cost
    /// accumulated at each state.
    fn search(&self, s: &WorldState, goal: usize, cost: usize) -> Result<(Option<i64>, CostedPath), PlannerError> {
        let env = &*self.env;
        let pg = &self.goals[goal];
        let ct = &self.costs[cost];
        let mut states: Vec<WorldState> = vec![s.clone()];
        let mut best_g: Vec<i64> = vec![0];
        let mut parent: Vec<usize> = vec![usize::MAX];
        let mut index: HashMap<WorldState, usize> = HashMap::new();
        index.insert(s.clone(), 0);
        let mut open = BinaryHeap::new();
        let mut seq = 0u64;
        open.push((Reverse(self.h(s, pg, ct)), Reverse(seq), 0usize, 0i64));
        let mut expanded = 0usize;
        while let Some((_, _, node, g)) = open.pop() {
            if g > best_g[node] {
                continue;
            }
            if env.eval(&pg.cond, &states[node]) {
                self.expansions.fetch_add(expanded as u64, Ordering::Relaxed);
                let mut path = Vec::new();
                let mut k = node;
                while k != usize::MAX {
                    path.push((states[k].clone(), best_g[k]));
                    k = parent[k];
                }
                return Ok((Some(g), path));
            }
            expanded += 1;
            if expanded > self.budget {
                self.expansions.fetch_add(expanded as u64, Ordering::Relaxed);
                return Err(PlannerError::Budget { budget: self.budget });
            }
            let cur = states[node].clone();
            for a in env.valid_actions(&cur) {
                let next = env.apply_unchecked(&cur, a);
                let ng = g + ct.per_action[a];
                let id = match index.get(&next) {
                    Some(&id) => {
                        if ng >= best_g[id] {
                            continue;
                        }
                        best_g[id] = ng;
                        parent[id] = node;
                        id
                    }
                    None => {
                        let id = states.len();
                        states.push(next.clone());
                        best_g.push(ng);
                        parent.push(node);
                        index.insert(next, id);
                        id
                    }
                };
                seq += 1;
                let f = ng + self.h(&states[id], pg, ct);
                open.push((Reverse(f), Reverse(seq), id, ng));
            }
        }
        self.expansions.fetch_add(expanded as u64, Ordering::Relaxed);
        Ok((None, Vec::new()))
    }

    /// Q(s, a) = r_g − c(a) − V(apply(s, a)); `None` when the goal is
    /// unreachable after `a`.
    pub fn q_value(&self, s: &WorldState, action: usize, goal: usize, cost: usize, reward: f64) -> Result<Option<f64>, PlannerError> {
        let next = self.env.apply_unchecked(s, action);
        let rest = self.path_cost_units(&next, goal, cost)?;
        Ok(rest.map(|v| reward - from_units(self.costs[cost].per_action[action] + v)))
    }

    /// Q-value of standing still, when the profile prices it.
    pub fn noop_q_value(&self, s: &WorldState, goal: usize, cost: usize, reward: f64) -> Result<Option<f64>, PlannerError> {
        let Some(c) = self.costs[cost].noop else {
            return Ok(None);
        };
        let rest = self.path_cost_units(s, goal, cost)?;
        Ok(rest.map(|v| reward - from_units(c + v)))
    }
}
