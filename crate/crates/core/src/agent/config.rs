//! Agent configuration documents.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::pddl::ground::{Cond, GroundedEnvironment};
use crate::pddl::{parse_formula, DomainSpec, Formula, Term};

/// Cost key used for repeated frames when the config prices them.
pub const NOOP_KEY: &str = "noop";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Observability {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Visibility {
    LineOfSight,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Belief,
    Goal,
    Reward,
    Cost,
}

impl QueryKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "belief" | "beliefs" => QueryKind::Belief,
            "goal" | "goals" | "desire" | "desires" => QueryKind::Goal,
            "reward" | "rewards" => QueryKind::Reward,
            "cost" | "costs" => QueryKind::Cost,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Belief => "belief",
            QueryKind::Goal => "goal",
            QueryKind::Reward => "reward",
            QueryKind::Cost => "cost",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How an action that is invalid in some belief particle is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidActionPolicy {
    /// The particle contributes −∞.
    NegInfinity,
    /// The particle is skipped and the remaining weights renormalized.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefConfig {
    /// Type of the hidden objects.
    pub belief_object: String,
    /// Type of the containers hiding them.
    pub belief_container: String,
    /// A bit-matrix name or an object type that blocks sight.
    pub barrier: String,
    pub agent: String,
    pub visibility: Visibility,
    /// Weight an initial belief puts on its own assignment.
    pub confidence: f64,
    /// Also enumerate worlds where some hidden objects are nowhere.
    pub allow_absent: bool,
}

/// Conjunction of ground literals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoalSpec {
    pub literals: Vec<String>,
}

impl GoalSpec {
    pub fn label(&self) -> String {
        self.literals.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RewardProfile {
    /// One reward per goal, in goal order.
    PerGoal(Vec<f64>),
    /// Reward per object; a goal earns the sum over objects it mentions.
    PerObject(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostProfile {
    pub costs: BTreeMap<String, f64>,
}

impl CostProfile {
    pub fn get(&self, action: &str) -> Option<f64> {
        self.costs.get(action).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentConfig {
    /// (rows, cols).
    pub grid_size: (u32, u32),
    pub observability: Observability,
    pub belief_config: Option<BeliefConfig>,
    pub goals: Vec<GoalSpec>,
    pub rewards: Option<Vec<RewardProfile>>,
    pub costs: Vec<CostProfile>,
    pub query: Vec<QueryKind>,
    /// Rationality; higher is more deterministic.
    pub beta: f64,
    pub invalid_action: InvalidActionPolicy,
}

fn num(v: &Value, field: &str) -> Result<f64, ConfigError> {
    let n = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    match n {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(field_err(field, format!("expected a number, got {v}"))),
    }
}

fn string(v: &Value, field: &str) -> Result<String, ConfigError> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| field_err(field, format!("expected a string, got {v}")))
}

/// Case-insensitive key lookup; the reference schema capitalizes some names.
fn lookup<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

impl AgentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self, ConfigError> {
        let obj = v.as_object().ok_or_else(|| field_err("$", "expected an object"))?;

        let grid = lookup(obj, "grid_size").ok_or_else(|| field_err("grid_size", "missing"))?;
        let grid_size = match grid.as_array().map(Vec::as_slice) {
            Some([r, c]) => {
                let r = num(r, "grid_size")?;
                let c = num(c, "grid_size")?;
                if r < 1.0 || c < 1.0 || r.fract() != 0.0 || c.fract() != 0.0 {
                    return Err(field_err("grid_size", "dimensions must be positive integers"));
                }
                (r as u32, c as u32)
            }
            _ => return Err(field_err("grid_size", "expected [rows, cols]")),
        };

        let observability = match lookup(obj, "observability").map(|o| string(o, "observability")).transpose()? {
            None => Observability::Full,
            Some(s) => match s.to_ascii_lowercase().as_str() {
                "full" => Observability::Full,
                "partial" => Observability::Partial,
                other => return Err(field_err("observability", format!("expected \"full\" or \"partial\", got \"{other}\""))),
            },
        };

        let belief_config = match lookup(obj, "belief_config") {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) if m.is_empty() => None,
            Some(Value::Object(m)) => Some(parse_belief(m)?),
            Some(_) => return Err(field_err("belief_config", "expected an object")),
        };
        match (observability, &belief_config) {
            (Observability::Partial, None) => {
                return Err(field_err("belief_config", "required when observability is partial"))
            }
            (Observability::Full, Some(_)) => {
                return Err(field_err("belief_config", "must be empty when observability is full"))
            }
            _ => {}
        }

        let goals_v = lookup(obj, "goals").ok_or_else(|| field_err("goals", "missing"))?;
        let goals_arr = goals_v.as_array().ok_or_else(|| field_err("goals", "expected a list"))?;
        if goals_arr.is_empty() {
            return Err(field_err("goals", "at least one goal is required"));
        }
        let mut goals = Vec::new();
        for (i, g) in goals_arr.iter().enumerate() {
            let f = format!("goals[{i}]");
            let literals = match g {
                Value::String(s) => vec![s.clone()],
                Value::Array(items) if !items.is_empty() => {
                    items.iter().map(|x| string(x, &f)).collect::<Result<_, _>>()?
                }
                _ => return Err(field_err(&f, "expected a literal string or a non-empty list of them")),
            };
            goals.push(GoalSpec { literals });
        }

        let rewards = match lookup(obj, "rewards").or_else(|| lookup(obj, "reward")) {
            None | Some(Value::Null) => None,
            Some(Value::Array(items)) if items.is_empty() => None,
            Some(Value::Array(items)) => {
                let profiles = if items.iter().all(Value::is_number) {
                    vec![parse_reward(&Value::Array(items.clone()), "rewards")?]
                } else {
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, r)| parse_reward(r, &format!("rewards[{i}]")))
                        .collect::<Result<_, _>>()?
                };
                for (i, p) in profiles.iter().enumerate() {
                    if let RewardProfile::PerGoal(v) = p {
                        if v.len() != goals.len() {
                            return Err(field_err(
                                format!("rewards[{i}]"),
                                format!("has {} entries for {} goals", v.len(), goals.len()),
                            ));
                        }
                    }
                }
                Some(profiles)
            }
            Some(r @ Value::Object(_)) => Some(vec![parse_reward(r, "rewards")?]),
            Some(_) => return Err(field_err("rewards", "expected a list of reward profiles")),
        };

        let costs_v = lookup(obj, "costs").ok_or_else(|| field_err("costs", "missing"))?;
        let costs_arr = match costs_v {
            Value::Array(a) => a.clone(),
            Value::Object(_) => vec![costs_v.clone()],
            _ => return Err(field_err("costs", "expected a list of cost profiles")),
        };
        if costs_arr.is_empty() {
            return Err(field_err("costs", "at least one cost profile is required"));
        }
        let mut costs = Vec::new();
        for (i, c) in costs_arr.iter().enumerate() {
            let f = format!("costs[{i}]");
            let m = c.as_object().ok_or_else(|| field_err(&f, "expected an object"))?;
            let mut map = BTreeMap::new();
            for (k, v) in m {
                let x = num(v, &format!("{f}.{k}"))?;
                if x <= 0.0 {
                    return Err(field_err(format!("{f}.{k}"), "costs must be greater than 0"));
                }
                map.insert(k.clone(), x);
            }
            costs.push(CostProfile { costs: map });
        }

        let query = match lookup(obj, "query") {
            None => vec![QueryKind::Goal],
            Some(Value::String(s)) => vec![QueryKind::parse(s).ok_or_else(|| field_err("query", format!("unknown query kind \"{s}\"")))?],
            Some(Value::Array(items)) => {
                let mut out = Vec::new();
                for q in items {
                    let s = string(q, "query")?;
                    let k = QueryKind::parse(&s).ok_or_else(|| field_err("query", format!("unknown query kind \"{s}\"")))?;
                    if !out.contains(&k) {
                        out.push(k);
                    }
                }
                if out.is_empty() {
                    return Err(field_err("query", "at least one query kind is required"));
                }
                out
            }
            Some(_) => return Err(field_err("query", "expected a list")),
        };
        if query.contains(&QueryKind::Belief) && belief_config.is_none() {
            return Err(field_err("query", "belief queries need partial observability"));
        }
        if query.contains(&QueryKind::Reward) && rewards.is_none() {
            return Err(field_err("query", "reward queries need reward profiles"));
        }

        let beta = match (lookup(obj, "beta"), lookup(obj, "temperature")) {
            (Some(b), _) => {
                let b = num(b, "beta")?;
                if b <= 0.0 {
                    return Err(field_err("beta", "must be greater than 0"));
                }
                b
            }
            (None, Some(t)) => {
                let t = num(t, "temperature")?;
                if t <= 0.0 {
                    return Err(field_err("temperature", "must be greater than 0"));
                }
                1.0 / t
            }
            (None, None) => 1.0,
        };

        let invalid_action = match lookup(obj, "invalid_action").map(|v| string(v, "invalid_action")).transpose()? {
            None => InvalidActionPolicy::NegInfinity,
            Some(s) => match s.as_str() {
                "neg-infinity" | "-inf" => InvalidActionPolicy::NegInfinity,
                "skip" => InvalidActionPolicy::Skip,
                other => return Err(field_err("invalid_action", format!("expected \"neg-infinity\" or \"skip\", got \"{other}\""))),
            },
        };

        Ok(AgentConfig {
            grid_size,
            observability,
            belief_config,
            goals,
            rewards,
            costs,
            query,
            beta,
            invalid_action,
        })
    }

    /// JSON form accepted back by [`AgentConfig::from_json`].
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("grid_size".into(), serde_json::json!([self.grid_size.0, self.grid_size.1]));
        m.insert(
            "observability".into(),
            Value::String(match self.observability {
                Observability::Full => "full".into(),
                Observability::Partial => "partial".into(),
            }),
        );
        m.insert(
            "belief_config".into(),
            match &self.belief_config {
                None => Value::Object(Map::new()),
                Some(b) => serde_json::json!({
                    "belief_object": b.belief_object,
                    "belief_container": b.belief_container,
                    "barrier": b.barrier,
                    "agent": b.agent,
                    "visibility": match b.visibility { Visibility::LineOfSight => "line-of-sight", Visibility::Region => "region" },
                    "confidence": b.confidence,
                    "allow_absent": b.allow_absent,
                }),
            },
        );
        m.insert(
            "goals".into(),
            Value::Array(self.goals.iter().map(|g| serde_json::json!(g.literals)).collect()),
        );
        if let Some(r) = &self.rewards {
            m.insert("rewards".into(), serde_json::to_value(r).expect("rewards serialize"));
        }
        m.insert(
            "costs".into(),
            Value::Array(self.costs.iter().map(|c| serde_json::json!(c.costs)).collect()),
        );
        m.insert(
            "query".into(),
            Value::Array(self.query.iter().map(|q| Value::String(q.as_str().into())).collect()),
        );
        m.insert("beta".into(), serde_json::json!(self.beta));
        if self.invalid_action == InvalidActionPolicy::Skip {
            m.insert("invalid_action".into(), Value::String("skip".into()));
        }
        Value::Object(m)
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    /// Reward of goal `g` under reward profile `r`; zero without rewards.
    pub fn goal_reward(&self, goal: usize, reward: Option<usize>, spec: &DomainSpec) -> f64 {
        let (Some(profiles), Some(r)) = (&self.rewards, reward) else {
            return 0.0;
        };
        match &profiles[r] {
            RewardProfile::PerGoal(v) => v[goal],
            RewardProfile::PerObject(m) => {
                let mut objs = Vec::new();
                for lit in &self.goals[goal].literals {
                    if let Ok(f) = parse_formula(lit, spec) {
                        f.visit_atoms(true, &mut |a, _| {
                            for t in &a.args {
                                if let Term::Const(c) = t {
                                    if !objs.contains(c) {
                                        objs.push(c.clone());
                                    }
                                }
                            }
                        });
                    }
                }
                objs.iter().filter_map(|o| m.get(o)).sum()
            }
        }
    }

    /// Checks names against a grounded environment and compiles the goals.
    pub fn check_against(&self, env: &GroundedEnvironment) -> Result<Vec<Cond>, ConfigError> {
        let grid = env.grid;
        if (grid.rows, grid.cols) != self.grid_size {
            return Err(field_err(
                "grid_size",
                format!("config says {:?} but the environment is {}x{}", self.grid_size, grid.rows, grid.cols),
            ));
        }
        let schemas: Vec<&str> = env.spec.action_names();
        for (i, c) in self.costs.iter().enumerate() {
            for k in c.costs.keys() {
                if k != NOOP_KEY && !schemas.contains(&k.as_str()) {
                    return Err(field_err(format!("costs[{i}].{k}"), "not an action of the domain"));
                }
            }
            for s in &schemas {
                if !c.costs.contains_key(*s) {
                    return Err(field_err(format!("costs[{i}]"), format!("missing cost for action `{s}`")));
                }
            }
        }
        if let Some(b) = &self.belief_config {
            for (f, ty) in [("belief_object", &b.belief_object), ("belief_container", &b.belief_container)] {
                if !env.spec.is_type_declared(ty) {
                    return Err(field_err(format!("belief_config.{f}"), format!("`{ty}` is not a type of the domain")));
                }
            }
            if !env.has_matrix(&b.barrier) && !env.spec.is_type_declared(&b.barrier) {
                return Err(field_err("belief_config.barrier", format!("`{}` is neither a bit-matrix nor a type", b.barrier)));
            }
            if env.object_id(&b.agent).is_none() {
                return Err(field_err("belief_config.agent", format!("unknown object `{}`", b.agent)));
            }
        }
        if let Some(profiles) = &self.rewards {
            for (i, p) in profiles.iter().enumerate() {
                if let RewardProfile::PerObject(m) = p {
                    for k in m.keys() {
                        if env.object_id(k).is_none() {
                            return Err(field_err(format!("rewards[{i}].{k}"), "unknown object"));
                        }
                    }
                }
            }
        }
        let mut compiled = Vec::new();
        for (i, g) in self.goals.iter().enumerate() {
            let mut parts = Vec::new();
            for lit in &g.literals {
                let f = parse_formula(lit, &env.spec).map_err(|e| field_err(format!("goals[{i}]"), e.to_string()))?;
                let mut bad = None;
                f.visit_atoms(true, &mut |a, _| {
                    for t in &a.args {
                        if env.object_id(t.name()).is_none() && bad.is_none() {
                            bad = Some(t.name().to_owned());
                        }
                    }
                });
                if let Some(o) = bad {
                    return Err(field_err(format!("goals[{i}]"), format!("unknown object `{o}`")));
                }
                parts.push(f);
            }
            let cond = env
                .compile_ground(&Formula::And(parts))
                .map_err(|e| field_err(format!("goals[{i}]"), e.to_string()))?;
            compiled.push(cond);
        }
        Ok(compiled)
    }
}

fn parse_belief(m: &Map<String, Value>) -> Result<BeliefConfig, ConfigError> {
    let get = |k: &str| -> Result<String, ConfigError> {
        let v = lookup(m, k).ok_or_else(|| field_err(format!("belief_config.{k}"), "missing"))?;
        string(v, &format!("belief_config.{k}"))
    };
    let visibility = match lookup(m, "visibility").map(|v| string(v, "belief_config.visibility")).transpose()? {
        None => Visibility::LineOfSight,
        Some(s) => match s.as_str() {
            "line-of-sight" | "line_of_sight" | "los" => Visibility::LineOfSight,
            "region" => Visibility::Region,
            other => return Err(field_err("belief_config.visibility", format!("unknown visibility \"{other}\""))),
        },
    };
    let confidence = match lookup(m, "confidence") {
        None => 0.75,
        Some(v) => {
            let c = num(v, "belief_config.confidence")?;
            if !(0.0..=1.0).contains(&c) || c == 0.0 {
                return Err(field_err("belief_config.confidence", "must lie in (0, 1]"));
            }
            c
        }
    };
    let allow_absent = match lookup(m, "allow_absent") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(field_err("belief_config.allow_absent", "expected a boolean")),
    };
    Ok(BeliefConfig {
        belief_object: get("belief_object")?,
        belief_container: get("belief_container")?,
        barrier: get("barrier")?,
        agent: get("agent")?,
        visibility,
        confidence,
        allow_absent,
    })
}

fn parse_reward(v: &Value, field: &str) -> Result<RewardProfile, ConfigError> {
    match v {
        Value::Array(items) => Ok(RewardProfile::PerGoal(
            items
                .iter()
                .enumerate()
                .map(|(i, x)| num(x, &format!("{field}[{i}]")))
                .collect::<Result<_, _>>()?,
        )),
        Value::Object(m) => Ok(RewardProfile::PerObject(
            m.iter()
                .map(|(k, x)| Ok((k.clone(), num(x, &format!("{field}.{k}"))?)))
                .collect::<Result<_, ConfigError>>()?,
        )),
        _ => Err(field_err(field, "expected a list or an object")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_example_config() {
        let cfg = AgentConfig::from_json(include_str!("../../assets/reference/config_example.json")).unwrap();
        assert_eq!(cfg.grid_size, (3, 4));
        assert_eq!(cfg.observability, Observability::Partial);
        assert_eq!(cfg.goals.len(), 3);
        assert_eq!(cfg.costs.len(), 3);
        assert_eq!(cfg.query, [QueryKind::Belief, QueryKind::Goal, QueryKind::Cost]);
        assert_eq!(cfg.beta, 1.0);
        let b = cfg.belief_config.unwrap();
        assert_eq!(b.barrier, "blackterrain");
        assert_eq!(b.agent, "human");
    }

    #[test]
    fn zero_cost_is_rejected() {
        let err = AgentConfig::from_json(r#"{"grid_size":[2,2],"goals":[["(p)"]],"costs":[{"up":0}]}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "costs[0].up"), "{err}");
    }

    #[test]
    fn temperature_maps_to_beta() {
        let cfg = AgentConfig::from_json(r#"{"grid_size":[2,2],"goals":[["(p)"]],"costs":[{"up":1}],"temperature":0.5}"#).unwrap();
        assert_eq!(cfg.beta, 2.0);
        let err = AgentConfig::from_json(r#"{"grid_size":[2,2],"goals":[["(p)"]],"costs":[{"up":1}],"temperature":"-1"}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "temperature"));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = AgentConfig::from_json(include_str!("../../assets/reference/config_example.json")).unwrap();
        let again = AgentConfig::from_value(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }
}
