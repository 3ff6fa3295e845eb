use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use invplan::agent::config::{AgentConfig, Observability};
use invplan::domains::DomainBundle;
use invplan::inference::{Dimension, PosteriorTable, QueryResult};
use invplan::oracle::{DEFAULT_ORACLE_HYPOTHESIS_CAP, DEFAULT_STATE_CAP};
use invplan::pipeline::{filter_trace, oracle_divergence, prepare, resolve_bundle, Overrides, Prepared};
use invplan::planner::CacheStats;
use invplan::report::{align, model_ratings, EvalReport, StimulusRatings};
use invplan::stimulus::{HumanDataTable, Stimulus};
use invplan::synthesis::{
    synthesize_agent_config, synthesize_domain, HttpTransport, ReplayTransport, SynthesisAttemptLog, SynthesisError,
    SynthesisOptions, SynthesisRecord, SynthesisTask, Transport,
};
use invplan::world::StepAction;

use crate::{EvalArgs, ModelArgs, RunArgs, SynthArgs, VerifyArgs};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const MARGINAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub struct CliError {
    pub internal: bool,
    message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn data(e: impl fmt::Display) -> CliError {
    CliError {
        internal: false,
        message: e.to_string(),
    }
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError {
        internal: true,
        message: e.to_string(),
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(internal)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(internal)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A bundle directory (relative to the working directory or the stimulus),
/// else a built-in name.
fn load_bundle(name: &str, stimulus: &Path, stim: &Stimulus) -> Result<DomainBundle> {
    resolve_bundle(name, stimulus.parent().unwrap_or(Path::new(".")), stim.grid).map_err(|e| data(format!("domain `{name}`: {e}")))
}

fn prepare_path(path: &Path, args: &ModelArgs) -> Result<(Stimulus, Prepared)> {
    let stim = Stimulus::load(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let name = args.domain.clone().unwrap_or_else(|| stim.domain.clone());
    let bundle = load_bundle(&name, path, &stim)?;
    let config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            Some(AgentConfig::from_json(&text).map_err(|e| data(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let overrides = Overrides {
        config,
        beta: args.beta,
        heuristic: None,
    };
    let prepared = prepare(&bundle, &stim, &overrides).map_err(|e| data(format!("{}: {e}", stim.id)))?;
    Ok((stim, prepared))
}

/// `*.json` files of a directory, sorted by file name.
fn stimulus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize)]
struct StepMarginals {
    t: usize,
    goal: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward: Option<Vec<f64>>,
    cost: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    belief: Option<Vec<f64>>,
    eliminated: usize,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    hypotheses: usize,
    eliminated: usize,
    degenerate_events: usize,
    actions: Vec<String>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache: Option<CacheStats>,
}

#[derive(Debug, Serialize)]
struct RunReport {
    version: u32,
    stimulus_id: String,
    domain: String,
    goals: Vec<String>,
    marginals: Vec<StepMarginals>,
    answers: Vec<QueryResult>,
    diagnostics: Diagnostics,
}

fn action_name(p: &Prepared, a: &StepAction) -> String {
    match a {
        StepAction::Ground(i) => p.env.actions()[*i].to_string(),
        StepAction::NoOp => "(noop)".to_owned(),
    }
}

fn step_marginals(p: &Prepared, table: &PosteriorTable) -> Result<StepMarginals> {
    let m = &p.model;
    let get = |d| table.marginal(m, d).map_err(data);
    let out = StepMarginals {
        t: table.t,
        goal: get(Dimension::Goal)?,
        reward: if m.cfg.rewards.is_some() { Some(get(Dimension::RewardProfile)?) } else { None },
        cost: get(Dimension::CostProfile)?,
        belief: if m.cfg.observability == Observability::Partial {
            Some(get(Dimension::InitialBelief)?)
        } else {
            None
        },
        eliminated: table.eliminated(),
    };
    for (name, v) in [("goal", Some(&out.goal)), ("reward", out.reward.as_ref()), ("cost", Some(&out.cost)), ("belief", out.belief.as_ref())] {
        if let Some(v) = v {
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > MARGINAL_TOLERANCE {
                return Err(internal(format!("{name} marginal at t={} sums to {s}", table.t)));
            }
        }
    }
    Ok(out)
}

pub fn run(args: RunArgs) -> Result<()> {
    pool(args.jobs)?.install(|| {
        let (stim, p) = prepare_path(&args.stimulus, &args.model)?;
        let tables = filter_trace(&p).map_err(data)?;
        let last = tables.last().expect("at least the prior");
        let marginals = tables.iter().map(|t| step_marginals(&p, t)).collect::<Result<Vec<_>>>()?;
        let answers = last.answer_all(&p.model).map_err(data)?;
        let report = RunReport {
            version: REPORT_SCHEMA_VERSION,
            stimulus_id: stim.id.clone(),
            domain: p.env.spec.name.clone(),
            goals: p.model.cfg.goals.iter().map(|g| g.label()).collect(),
            marginals,
            answers,
            diagnostics: Diagnostics {
                hypotheses: last.hypotheses.len(),
                eliminated: last.eliminated(),
                degenerate_events: last.degenerate_events,
                actions: p.actions.iter().map(|a| action_name(&p, a)).collect(),
                warnings: p.warnings.clone(),
                cache: args.stats.then(|| p.model.planner.stats()),
            },
        };
        emit(&report, args.out.as_deref())
    })
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let files = stimulus_files(&args.stimuli)?;
    if files.is_empty() {
        return Err(data(format!("no stimuli in {}", args.stimuli.display())));
    }
    let human = HumanDataTable::load(&args.human).map_err(|e| data(format!("{}: {e}", args.human.display())))?;
    let mut model: Vec<StimulusRatings> = pool(args.jobs)?.install(|| {
        files
            .par_iter()
            .map(|f| {
                let (stim, p) = prepare_path(f, &args.model)?;
                let table = PosteriorTable::run(&p.model, &p.states, &p.actions).map_err(|e| data(format!("{}: {e}", stim.id)))?;
                let answers = table.answer_all(&p.model).map_err(data)?;
                Ok(StimulusRatings {
                    stimulus_id: stim.id,
                    domain: stim.domain,
                    ratings: model_ratings(&answers),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    model.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
    let pairs = align(&model, &human).map_err(data)?;
    let report = EvalReport::build(pairs, args.resamples, args.seed).map_err(data)?;
    if let Some(p) = &args.scatter {
        std::fs::write(p, report.scatter_csv()).map_err(|e| data(format!("{}: {e}", p.display())))?;
    }
    emit(&report, args.out.as_deref())
}

#[derive(Debug, Serialize)]
struct VerifyInstance {
    stimulus_id: String,
    hypotheses: usize,
    max_divergence: f64,
    per_step: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct VerifyFailure {
    stimulus: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    version: u32,
    tolerance: f64,
    max_divergence: f64,
    instances: Vec<VerifyInstance>,
    failures: Vec<VerifyFailure>,
}

fn verify_one(path: &Path, args: &VerifyArgs) -> Result<VerifyInstance> {
    let (stim, p) = prepare_path(path, &args.model)?;
    let mut tables = filter_trace(&p).map_err(data)?;
    if let Some(delta) = args.inject_fault {
        let last = tables.last_mut().expect("at least the prior");
        if let Some(w) = last.log_weights.iter_mut().find(|w| w.is_finite()) {
            *w += delta;
        }
    }
    let d = oracle_divergence(&p, &tables, DEFAULT_STATE_CAP, DEFAULT_ORACLE_HYPOTHESIS_CAP).map_err(data)?;
    Ok(VerifyInstance {
        stimulus_id: stim.id,
        hypotheses: tables[0].hypotheses.len(),
        max_divergence: d.max,
        per_step: d.per_step,
    })
}

pub fn verify(args: VerifyArgs) -> Result<()> {
    let files = stimulus_files(&args.stimuli)?;
    if files.is_empty() {
        eprintln!("warning: no stimuli in {}", args.stimuli.display());
    }
    let results: Vec<Result<VerifyInstance>> = pool(args.jobs)?.install(|| files.par_iter().map(|f| verify_one(f, &args)).collect());
    let mut instances = Vec::new();
    let mut failures = Vec::new();
    for (f, r) in files.iter().zip(results) {
        match r {
            Ok(i) => instances.push(i),
            Err(e) => failures.push(VerifyFailure {
                stimulus: f.display().to_string(),
                error: e.to_string(),
            }),
        }
    }
    let report = VerifyReport {
        version: REPORT_SCHEMA_VERSION,
        tolerance: args.tolerance,
        max_divergence: instances.iter().map(|i| i.max_divergence).fold(0.0, f64::max),
        instances,
        failures,
    };
    emit(&report, args.out.as_deref())?;
    if !report.failures.is_empty() {
        return Err(data(format!("{} instance(s) could not be verified", report.failures.len())));
    }
    if report.max_divergence.is_nan() || report.max_divergence > args.tolerance {
        return Err(internal(format!(
            "filter and oracle diverge by {:e} (tolerance {:e})",
            report.max_divergence, args.tolerance
        )));
    }
    Ok(())
}

pub const DOMAIN_OUT: &str = "domain.pddl";
pub const CONFIG_OUT: &str = "config.json";
pub const LOG_OUT: &str = "synthesis_log.json";

pub fn synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.task).map_err(|e| data(format!("{}: {e}", args.task.display())))?;
    let task: SynthesisTask = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", args.task.display())))?;
    if !(args.temperature > 0.0 && args.temperature.is_finite()) {
        return Err(data(format!("temperature must be positive, got {}", args.temperature)));
    }
    if args.cap == 0 {
        return Err(data("attempt cap must be at least 1"));
    }
    let transport: Box<dyn Transport> = match (&args.replay, &args.transport_url) {
        (Some(p), _) => {
            let t = std::fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
            Box::new(ReplayTransport::new(&SynthesisRecord::from_json(&t).map_err(data)?))
        }
        (None, Some(url)) => Box::new(HttpTransport::from_env(url.clone(), args.model_name.clone()).map_err(data)?),
        (None, None) => return Err(data("either --replay or --transport-url is required")),
    };
    let opts = SynthesisOptions {
        cap: args.cap,
        temperature: args.temperature,
        ..SynthesisOptions::default()
    };
    std::fs::create_dir_all(&args.out).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    let write = |name: &str, body: &str| -> Result<()> {
        let p = args.out.join(name);
        std::fs::write(&p, body).map_err(|e| data(format!("{}: {e}", p.display())))
    };
    let write_log = |logs: Vec<SynthesisAttemptLog>| write(LOG_OUT, &(SynthesisRecord::new(logs).to_json() + "\n"));
    let fail = |mut logs: Vec<SynthesisAttemptLog>, e: SynthesisError| -> CliError {
        if let Some(l) = e.log() {
            logs.push(l.clone());
        }
        match write_log(logs) {
            Ok(()) => data(e),
            Err(w) => w,
        }
    };

    let domain = synthesize_domain(&task, transport.as_ref(), &opts).map_err(|e| fail(Vec::new(), e))?;
    let config = synthesize_agent_config(&task, &domain.value, transport.as_ref(), &opts).map_err(|e| fail(vec![domain.log.clone()], e))?;
    write(DOMAIN_OUT, &domain.text)?;
    write(CONFIG_OUT, &config.text)?;
    write_log(vec![domain.log, config.log])?;
    eprintln!(
        "synthesized `{}` with {} goal(s) into {}",
        domain.value.name,
        config.value.goals.len(),
        args.out.display()
    );
    Ok(())
}
