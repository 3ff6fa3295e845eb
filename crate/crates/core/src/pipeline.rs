//! Bundle + stimulus → grounded environment, agent model and observed
//! trajectory; the shared front half of every run.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::agent::config::AgentConfig;
use crate::agent::AgentModel;
use crate::domains::{builtin, DomainBundle, DomainError};
use crate::inference::{Dimension, InferenceError, PosteriorTable, QueryResult};
use crate::oracle::exact_posterior_with_caps;
use crate::pddl::ground::GroundedEnvironment;
use crate::planner::Heuristic;
use crate::pddl::GridDims;
use crate::stimulus::{stimulus_objects, FrameCodec, FrameGrid, Stimulus};
use crate::world::{StepAction, WorldState};

/// Error tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<AgentConfig>,
    pub beta: Option<f64>,
    pub heuristic: Option<Heuristic>,
}

#[derive(Debug)]
pub struct Prepared {
    pub env: Arc<GroundedEnvironment>,
    pub model: AgentModel,
    pub states: Vec<WorldState>,
    pub actions: Vec<StepAction>,
    pub warnings: Vec<String>,
}

/// A stimulus' `domain` names a bundle directory (as given, or relative to
/// the stimulus file's directory) or a built-in domain sized to its grid.
pub fn resolve_bundle(name: &str, stimulus_dir: &Path, grid: GridDims) -> Result<DomainBundle, DomainError> {
    for dir in [Path::new(name).to_path_buf(), stimulus_dir.join(name)] {
        if dir.is_dir() {
            return DomainBundle::read_dir(&dir);
        }
    }
    builtin(name, grid)
}

pub fn prepare(bundle: &DomainBundle, stim: &Stimulus, overrides: &Overrides) -> Result<Prepared, PipelineError> {
    let legend = stim.legend.as_ref().unwrap_or(&bundle.legend);
    let objects = stimulus_objects(stim, legend, &bundle.spec).map_err(stage("stimulus"))?;
    objects.check(&bundle.spec).map_err(stage("objects"))?;
    let env = Arc::new(GroundedEnvironment::new(&bundle.spec, &objects, stim.grid).map_err(stage("grounding"))?);
    let mut codec = FrameCodec::new(&env, legend);
    let decoded = codec.decode(stim, &bundle.init_facts).map_err(stage("frames"))?;
    let mut cfg = overrides.config.clone().unwrap_or_else(|| bundle.config_for(stim.grid));
    if let Some(b) = overrides.beta {
        if !(b > 0.0 && b.is_finite()) {
            return Err(PipelineError {
                stage: "config",
                message: format!("beta must be a positive number, got {b}"),
            });
        }
        cfg.beta = b;
    }
    if !stim.query.is_empty() {
        for q in &stim.query {
            if !cfg.query.contains(q) {
                cfg.query.push(*q);
            }
        }
        cfg.query.retain(|q| stim.query.contains(q));
    }
    let model = AgentModel::with_heuristic(env.clone(), cfg, &decoded.states[0], overrides.heuristic.unwrap_or(Heuristic::Auto))
        .map_err(stage("agent model"))?;
    let mut warnings: Vec<String> = env.warnings().to_vec();
    warnings.extend(decoded.warnings);
    Ok(Prepared {
        env,
        model,
        states: decoded.states,
        actions: decoded.actions,
        warnings,
    })
}

/// Posterior after every prefix of the trajectory, t = 0..=T.
pub fn filter_trace(p: &Prepared) -> Result<Vec<PosteriorTable>, PipelineError> {
    let mut table = PosteriorTable::init(&p.model, &p.states[0]).map_err(stage("inference"))?;
    let mut out = vec![table.clone()];
    for (t, a) in p.actions.iter().enumerate() {
        table.step(&p.model, &p.states[t], a, &p.states[t + 1]).map_err(stage("inference"))?;
        out.push(table.clone());
    }
    Ok(out)
}

pub fn answers(p: &Prepared, table: &PosteriorTable) -> Result<Vec<QueryResult>, PipelineError> {
    table.answer_all(&p.model).map_err(stage("query"))
}

/// Largest absolute difference between two posteriors over every marginal
/// entry and every configured query rating.
pub fn table_divergence(model: &AgentModel, a: &PosteriorTable, b: &PosteriorTable) -> Result<f64, InferenceError> {
    let mut max: f64 = 0.0;
    let mut fold = |x: &[f64], y: &[f64]| {
        debug_assert_eq!(x.len(), y.len());
        for (p, q) in x.iter().zip(y) {
            max = max.max((p - q).abs());
        }
    };
    for dim in [Dimension::Goal, Dimension::RewardProfile, Dimension::CostProfile, Dimension::InitialBelief] {
        fold(&a.marginal(model, dim)?, &b.marginal(model, dim)?);
    }
    for (x, y) in a.answer_all(model)?.iter().zip(b.answer_all(model)?) {
        fold(&x.ratings, &y.ratings);
    }
    Ok(max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub max: f64,
    /// Divergence after each prefix, t = 0..=T.
    pub per_step: Vec<f64>,
}

/// Compares filter tables (one per prefix, as from [`filter_trace`]) with the
/// exhaustive oracle on the same prefixes.
pub fn oracle_divergence(p: &Prepared, tables: &[PosteriorTable], state_cap: usize, hypothesis_cap: usize) -> Result<Divergence, PipelineError> {
    let mut per_step = Vec::with_capacity(tables.len());
    for (t, table) in tables.iter().enumerate() {
        let exact = exact_posterior_with_caps(&p.model, &p.states[..=t], &p.actions[..t], state_cap, hypothesis_cap).map_err(stage("oracle"))?;
        per_step.push(table_divergence(&p.model, table, &exact).map_err(stage("oracle"))?);
    }
    Ok(Divergence {
        max: per_step.iter().copied().fold(0.0, f64::max),
        per_step,
    })
}

/// Builds a stimulus by playing named ground actions, e.g. `(right player)`,
/// from a first frame drawn with the bundle legend.
pub fn rollout_stimulus(bundle: &DomainBundle, id: &str, rows: &[&str], actions: &[&str]) -> Result<Stimulus, PipelineError> {
    let rows: Vec<String> = rows.iter().map(|r| r.to_string()).collect();
    let first = FrameGrid::parse_rows(&rows, &bundle.legend.empty, 0).map_err(stage("stimulus"))?;
    let (r, c) = first.dims();
    let grid = GridDims::new(r as u32, c as u32);
    let mut stim = Stimulus {
        id: id.to_owned(),
        domain: bundle.name.clone(),
        grid,
        frames: vec![first],
        query: Vec::new(),
        scenario: String::new(),
        legend: None,
        facts: Vec::new(),
        extra_objects: Vec::new(),
    };
    let objects = stimulus_objects(&stim, &bundle.legend, &bundle.spec).map_err(stage("stimulus"))?;
    let env = GroundedEnvironment::new(&bundle.spec, &objects, grid).map_err(stage("grounding"))?;
    let mut codec = FrameCodec::new(&env, &bundle.legend);
    let decoded = codec.decode(&stim, &bundle.init_facts).map_err(stage("frames"))?;
    let mut s = decoded.states[0].clone();
    let multi = env.is_multi_agent();
    if multi {
        stim.frames[0].turn = env.turn(&s);
    }
    for a in actions {
        let idx = env.actions().iter().position(|g| g.to_string() == *a).ok_or_else(|| PipelineError {
            stage: "rollout",
            message: format!("no ground action `{a}`"),
        })?;
        s = env.apply(&s, idx).map_err(stage("rollout"))?;
        stim.frames.push(codec.render(&s, multi));
    }
    Ok(stim)
}
