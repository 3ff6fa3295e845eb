//! Language-model synthesis of domains, agent configurations and cell
//! parses, behind a swappable transport and a rejection-sampling loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::config::AgentConfig;
use crate::pddl::{parse_domain, validate_domain, DomainSpec, GridDims, GroundedEnvironment, ObjectSet, ObjectTag};

pub const DEFAULT_ATTEMPT_CAP: usize = 8;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
/// Environment variable holding the bearer token for the live transport.
pub const API_KEY_VAR: &str = "INVPLAN_API_KEY";
pub const LOG_SCHEMA_VERSION: u32 = 1;
/// Bumped whenever a bundled prompt asset changes.
pub const PROMPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Env,
    Agent,
    Cell,
}

impl TemplateId {
    /// The slot contract of each template.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            TemplateId::Env => &["description", "grid", "objects"],
            TemplateId::Agent => &["actions", "description", "objects"],
            TemplateId::Cell => &["instruction", "object_types", "pddl_predicates"],
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateId::Env => include_str!("../assets/prompts/env.txt"),
            TemplateId::Agent => include_str!("../assets/prompts/agent.txt"),
            TemplateId::Cell => include_str!("../assets/prompts/cell.txt"),
        }
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemplateId::Env => "env",
            TemplateId::Agent => "agent",
            TemplateId::Cell => "cell",
        })
    }
}

/// Instruction prompt with `{{slot}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    text: String,
}

impl PromptTemplate {
    pub fn builtin(id: TemplateId) -> Self {
        Self {
            id,
            text: id.builtin_text().to_owned(),
        }
    }

    /// Rejects a template whose slots differ from the id's contract.
    pub fn new(id: TemplateId, text: impl Into<String>) -> Result<Self, SynthesisError> {
        let text = text.into();
        let found = Self::slots_of(&text);
        let want: BTreeSet<String> = id.slots().iter().map(|s| s.to_string()).collect();
        if found != want {
            return Err(SynthesisError::Template(format!(
                "{id} template has slots {found:?}, expected {want:?}"
            )));
        }
        Ok(Self { id, text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn slots_of(text: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut rest = text;
        while let Some(i) = rest.find("{{") {
            let after = &rest[i + 2..];
            match after.find("}}") {
                Some(j) => {
                    out.insert(after[..j].trim().to_owned());
                    rest = &after[j + 2..];
                }
                None => break,
            }
        }
        out
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, SynthesisError> {
        let given: BTreeSet<String> = values.keys().map(|s| s.to_string()).collect();
        let want = Self::slots_of(&self.text);
        if given != want {
            return Err(SynthesisError::Template(format!(
                "{} template needs {want:?}, got {given:?}",
                self.id
            )));
        }
        let mut out = self.text.clone();
        for (k, v) in values {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub task: TemplateId,
    pub prompt: String,
    pub temperature: f64,
    pub image: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("transport configuration: {0}")]
    Config(String),
    #[error("request failed: {0}")]
    Http(String),
    #[error("no recorded response left for the {0} task")]
    Exhausted(TemplateId),
}

pub trait Transport: Send + Sync {
    fn complete(&self, req: &Request) -> Result<String, TransportError>;

    fn supports_vision(&self) -> bool {
        false
    }
}

/// Scripted responses per task, served in order.
#[derive(Debug, Default)]
pub struct MockTransport {
    queues: Mutex<BTreeMap<TemplateId, VecDeque<String>>>,
    repeat: Mutex<BTreeMap<TemplateId, String>>,
    vision: bool,
}

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond<S: Into<String>>(self, task: TemplateId, responses: impl IntoIterator<Item = S>) -> Self {
        self.queues
            .lock()
            .unwrap()
            .entry(task)
            .or_default()
            .extend(responses.into_iter().map(Into::into));
        self
    }

    /// Served once the scripted queue for `task` is empty.
    pub fn always(self, task: TemplateId, response: impl Into<String>) -> Self {
        self.repeat.lock().unwrap().insert(task, response.into());
        self
    }

    pub fn with_vision(mut self) -> Self {
        self.vision = true;
        self
    }
}

impl Transport for MockTransport {
    fn complete(&self, req: &Request) -> Result<String, TransportError> {
        if let Some(r) = self.queues.lock().unwrap().get_mut(&req.task).and_then(VecDeque::pop_front) {
            return Ok(r);
        }
        self.repeat
            .lock()
            .unwrap()
            .get(&req.task)
            .cloned()
            .ok_or(TransportError::Exhausted(req.task))
    }

    fn supports_vision(&self) -> bool {
        self.vision
    }
}

/// Serves the raw responses of recorded attempt logs, in recorded order.
#[derive(Debug)]
pub struct ReplayTransport {
    inner: MockTransport,
}

impl ReplayTransport {
    pub fn new(record: &SynthesisRecord) -> Self {
        let mut inner = MockTransport::new();
        for log in &record.logs {
            inner = inner.respond(log.task, log.attempts.iter().map(|a| a.raw.clone()));
            if log.task == TemplateId::Cell {
                inner.vision = true;
            }
        }
        Self { inner }
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, req: &Request) -> Result<String, TransportError> {
        self.inner.complete(req)
    }

    fn supports_vision(&self) -> bool {
        self.inner.supports_vision()
    }
}

/// Chat-completions style JSON endpoint.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub url: String,
    pub model: String,
    api_key: String,
    pub timeout: Duration,
}

impl HttpTransport {
    /// Reads the key from [`API_KEY_VAR`]; fails before any request is sent.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Result<Self, TransportError> {
        let api_key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| TransportError::Config(format!("environment variable {API_KEY_VAR} is not set")))?;
        let url = url.into();
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(TransportError::Config(format!("`{url}` is not an http(s) URL")));
        }
        Ok(Self {
            url,
            model: model.into(),
            api_key,
            timeout: Duration::from_secs(120),
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, req: &Request) -> Result<String, TransportError> {
        let content = match &req.image {
            None => json!(req.prompt),
            Some(bytes) => {
                let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                json!([
                    {"type": "text", "text": req.prompt},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}
                ])
            }
        };
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [{"role": "user", "content": content}],
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut resp = agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| TransportError::Http(e.to_string()))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| TransportError::Http(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| TransportError::Http("response has no choices[0].message.content".into()))
    }

    fn supports_vision(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// No PDDL or JSON found in the response.
    NoArtifact,
    Syntax,
    Validation,
    Grounding,
    Schema,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::NoArtifact,
        RejectReason::Syntax,
        RejectReason::Validation,
        RejectReason::Grounding,
        RejectReason::Schema,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based.
    pub index: usize,
    pub prompt: String,
    pub raw: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Every attempt of one synthesis request; append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisAttemptLog {
    pub task: TemplateId,
    attempts: Vec<Attempt>,
}

impl SynthesisAttemptLog {
    pub fn new(task: TemplateId) -> Self {
        Self {
            task,
            attempts: Vec::new(),
        }
    }

    pub fn attempts(&self) -> &[Attempt] {
        &self.attempts
    }

    pub fn len(&self) -> usize {
        self.attempts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attempts.is_empty()
    }

    fn push(&mut self, prompt: &str, raw: String, outcome: Result<(), (RejectReason, String)>) {
        let (accepted, reason, detail) = match outcome {
            Ok(()) => (true, None, None),
            Err((r, d)) => (false, Some(r), Some(d)),
        };
        self.attempts.push(Attempt {
            index: self.attempts.len() + 1,
            prompt: prompt.to_owned(),
            raw,
            accepted,
            reason,
            detail,
        });
    }

    pub fn reasons(&self) -> Vec<RejectReason> {
        self.attempts.iter().filter_map(|a| a.reason).collect()
    }
}

/// The attempt logs of one `synth` run, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub version: u32,
    pub logs: Vec<SynthesisAttemptLog>,
}

impl SynthesisRecord {
    pub fn new(logs: Vec<SynthesisAttemptLog>) -> Self {
        Self {
            version: LOG_SCHEMA_VERSION,
            logs,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        let r: Self = serde_json::from_str(text).map_err(|e| SynthesisError::Record(e.to_string()))?;
        if r.version != LOG_SCHEMA_VERSION {
            return Err(SynthesisError::Record(format!("unsupported log version {}", r.version)));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attempt logs serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("prompt template: {0}")]
    Template(String),
    #[error("{task} synthesis: {source}")]
    Transport {
        task: TemplateId,
        source: TransportError,
        log: SynthesisAttemptLog,
    },
    #[error("{task} synthesis gave no valid sample in {cap} attempts: {}", .log.attempts().iter().map(|a| format!("#{} {:?}: {}", a.index, a.reason.unwrap(), a.detail.as_deref().unwrap_or(""))).collect::<Vec<_>>().join("; "))]
    CapExhausted {
        task: TemplateId,
        cap: usize,
        log: SynthesisAttemptLog,
    },
    #[error("transport does not support {0}")]
    NotSupported(&'static str),
    #[error("attempt log: {0}")]
    Record(String),
}

impl SynthesisError {
    pub fn log(&self) -> Option<&SynthesisAttemptLog> {
        match self {
            SynthesisError::Transport { log, .. } | SynthesisError::CapExhausted { log, .. } => Some(log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub cap: usize,
    pub temperature: f64,
    /// Overrides the bundled template of the matching id.
    pub templates: Vec<PromptTemplate>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ATTEMPT_CAP,
            temperature: DEFAULT_TEMPERATURE,
            templates: Vec::new(),
        }
    }
}

impl SynthesisOptions {
    fn template(&self, id: TemplateId) -> PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .cloned()
            .unwrap_or_else(|| PromptTemplate::builtin(id))
    }
}

/// The object dictionary handed to the prompts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDictionary {
    #[serde(default)]
    pub generic_objects: Vec<String>,
    #[serde(default)]
    pub unique_objects: Vec<String>,
    #[serde(default)]
    pub background_cells: Vec<String>,
    #[serde(default)]
    pub agent: Vec<String>,
}

impl ObjectDictionary {
    pub fn to_prompt(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    /// One instance per generic type, plus agents the domain does not
    /// declare as constants.
    fn trial_objects(&self, spec: &DomainSpec) -> Result<ObjectSet, String> {
        let constant = |n: &str| spec.constants.iter().any(|c| c.name == n);
        let mut objects = ObjectSet::new();
        for g in &self.generic_objects {
            if !spec.is_type_declared(g) {
                return Err(format!("generic object `{g}` is not a declared type"));
            }
            objects.push(format!("{g}_1"), g.clone(), ObjectTag::GenericObjects);
        }
        for u in &self.unique_objects {
            if !constant(u) {
                return Err(format!("unique object `{u}` is not a constant"));
            }
        }
        for a in &self.agent {
            if constant(a) {
                continue;
            }
            if !spec.is_type_declared("agent") {
                return Err(format!("agent `{a}` is not a constant and there is no `agent` type"));
            }
            objects.push(a.clone(), "agent", ObjectTag::Agent);
        }
        for b in &self.background_cells {
            let is_matrix = spec
                .function(b)
                .is_some_and(|f| f.range == crate::pddl::FunctionRange::BitMatrix);
            if !is_matrix {
                return Err(format!("background cell `{b}` is not a bit-matrix function"));
            }
        }
        Ok(objects)
    }
}

/// Natural-language task given to `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTask {
    pub description: String,
    pub objects: ObjectDictionary,
    /// (rows, cols) used for trial grounding.
    pub grid_size: (u32, u32),
}

impl SynthesisTask {
    pub fn grid(&self) -> GridDims {
        GridDims::new(self.grid_size.0, self.grid_size.1)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized<T> {
    pub value: T,
    /// Accepted artifact text, exactly as extracted from the response.
    pub text: String,
    pub log: SynthesisAttemptLog,
}

type Check<T> = Result<T, (RejectReason, String)>;

fn fenced(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let body = &raw[start + 3..];
    let body = &body[body.find('\n')? + 1..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// The artifact inside a response: a fenced block, the whole response when it
/// starts with `open`, or the span from the first `open` to the last `close`.
fn extract(raw: &str, open: &str, close: char) -> Check<String> {
    if let Some(b) = fenced(raw) {
        return Ok(b.to_owned());
    }
    if raw.trim_start().starts_with(open) {
        return Ok(raw.to_owned());
    }
    match (raw.find(open), raw.rfind(close)) {
        (Some(i), Some(j)) if j > i => Ok(raw[i..=j].to_owned()),
        _ => Err((RejectReason::NoArtifact, format!("response contains no `{open}`"))),
    }
}

fn check_domain(raw: &str, task: &SynthesisTask) -> Check<(DomainSpec, String)> {
    let text = extract(raw, "(define", ')')?;
    let spec = parse_domain(&text).map_err(|e| (RejectReason::Syntax, e.to_string()))?;
    let report = validate_domain(&spec);
    if !report.is_valid() {
        return Err((RejectReason::Validation, report.summary()));
    }
    let objects = task.objects.trial_objects(&spec).map_err(|e| (RejectReason::Grounding, e))?;
    GroundedEnvironment::new(&spec, &objects, task.grid()).map_err(|e| (RejectReason::Grounding, e.to_string()))?;
    Ok((spec, text))
}

fn check_config(raw: &str, task: &SynthesisTask, spec: &DomainSpec) -> Check<(AgentConfig, String)> {
    let text = extract(raw, "{", '}')?;
    let v: Value = serde_json::from_str(&text).map_err(|e| (RejectReason::Syntax, e.to_string()))?;
    let cfg = AgentConfig::from_value(&v).map_err(|e| (RejectReason::Schema, e.to_string()))?;
    let objects = task.objects.trial_objects(spec).map_err(|e| (RejectReason::Grounding, e))?;
    let grid = GridDims::new(cfg.grid_size.0, cfg.grid_size.1);
    let env = GroundedEnvironment::new(spec, &objects, grid).map_err(|e| (RejectReason::Grounding, e.to_string()))?;
    cfg.check_against(&env).map_err(|e| (RejectReason::Grounding, e.to_string()))?;
    Ok((cfg, text))
}

/// Cell parse in the reference output shape; `$i`/`$j` stand for row/column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReport {
    pub object_name: Vec<String>,
    pub object_pddl_str: String,
}

fn check_cell(raw: &str) -> Check<(CellReport, String)> {
    let text = extract(raw, "{", '}')?;
    let v: Value = serde_json::from_str(&text).map_err(|e| (RejectReason::Syntax, e.to_string()))?;
    let names = v
        .get("object_name")
        .and_then(Value::as_array)
        .ok_or((RejectReason::Schema, "missing `object_name` list".to_owned()))?;
    let object_name = names
        .iter()
        .map(|n| n.as_str().map(str::to_owned))
        .collect::<Option<Vec<_>>>()
        .ok_or((RejectReason::Schema, "`object_name` must hold strings".to_owned()))?;
    let object_pddl_str = v
        .get("object_pddl_str")
        .and_then(Value::as_str)
        .ok_or((RejectReason::Schema, "missing `object_pddl_str` string".to_owned()))?
        .to_owned();
    Ok((
        CellReport {
            object_name,
            object_pddl_str,
        },
        text,
    ))
}

fn rejection_loop<T>(
    task: TemplateId,
    prompt: String,
    image: Option<Vec<u8>>,
    transport: &dyn Transport,
    opts: &SynthesisOptions,
    check: impl Fn(&str) -> Check<(T, String)>,
) -> Result<Synthesized<T>, SynthesisError> {
    let mut log = SynthesisAttemptLog::new(task);
    let req = Request {
        task,
        prompt,
        temperature: opts.temperature,
        image,
    };
    for _ in 0..opts.cap {
        let raw = match transport.complete(&req) {
            Ok(r) => r,
            Err(source) => return Err(SynthesisError::Transport { task, source, log }),
        };
        match check(&raw) {
            Ok((value, text)) => {
                log.push(&req.prompt, raw, Ok(()));
                return Ok(Synthesized { value, text, log });
            }
            Err(why) => log.push(&req.prompt, raw, Err(why)),
        }
    }
    Err(SynthesisError::CapExhausted {
        task,
        cap: opts.cap,
        log,
    })
}

pub fn synthesize_domain(task: &SynthesisTask, transport: &dyn Transport, opts: &SynthesisOptions) -> Result<Synthesized<DomainSpec>, SynthesisError> {
    let mut slots = BTreeMap::new();
    slots.insert("description", task.description.clone());
    slots.insert("grid", format!("{}x{}", task.grid_size.0, task.grid_size.1));
    slots.insert("objects", task.objects.to_prompt());
    let prompt = opts.template(TemplateId::Env).render(&slots)?;
    rejection_loop(TemplateId::Env, prompt, None, transport, opts, |raw| check_domain(raw, task))
}

pub fn synthesize_agent_config(
    task: &SynthesisTask,
    domain: &DomainSpec,
    transport: &dyn Transport,
    opts: &SynthesisOptions,
) -> Result<Synthesized<AgentConfig>, SynthesisError> {
    let mut slots = BTreeMap::new();
    slots.insert("description", task.description.clone());
    slots.insert("actions", domain.action_names().join(", "));
    slots.insert("objects", task.objects.to_prompt());
    let prompt = opts.template(TemplateId::Agent).render(&slots)?;
    rejection_loop(TemplateId::Agent, prompt, None, transport, opts, |raw| check_config(raw, task, domain))
}

/// What the cell prompt needs besides the image.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPayload {
    pub instruction: String,
    pub object_types: ObjectDictionary,
    pub pddl_predicates: String,
    pub image: Vec<u8>,
}

pub fn classify_cell(payload: &CellPayload, transport: &dyn Transport, opts: &SynthesisOptions) -> Result<Synthesized<CellReport>, SynthesisError> {
    if !transport.supports_vision() {
        return Err(SynthesisError::NotSupported("image payloads"));
    }
    let mut slots = BTreeMap::new();
    slots.insert("instruction", payload.instruction.clone());
    slots.insert("object_types", payload.object_types.to_prompt());
    slots.insert("pddl_predicates", payload.pddl_predicates.clone());
    let prompt = opts.template(TemplateId::Cell).render(&slots)?;
    rejection_loop(TemplateId::Cell, prompt, Some(payload.image.clone()), transport, opts, check_cell)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_honour_their_slot_contracts() {
        for id in [TemplateId::Env, TemplateId::Agent, TemplateId::Cell] {
            let t = PromptTemplate::builtin(id);
            assert!(PromptTemplate::new(id, t.text()).is_ok(), "{id}");
        }
        assert!(PromptTemplate::new(TemplateId::Env, "{{description}}").is_err());
    }

    #[test]
    fn extraction_prefers_fences_then_verbatim() {
        assert_eq!(extract("x\n```pddl\n(define)\n```\n", "(define", ')').unwrap(), "(define)\n");
        assert_eq!(extract("(define (domain d))\n", "(define", ')').unwrap(), "(define (domain d))\n");
        assert_eq!(extract("Sure: {\"a\": 1} done", "{", '}').unwrap(), "{\"a\": 1}");
        assert_eq!(extract("no idea", "{", '}').unwrap_err().0, RejectReason::NoArtifact);
    }
}
