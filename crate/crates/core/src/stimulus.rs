//! Stimuli as symbolic frame sequences: legend-driven cell decoding, state
//! assembly, action derivation, rendering back to frames, and human rating
//! tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::config::QueryKind;
use crate::pddl::ground::{GroundedEnvironment, ObjId};
use crate::pddl::{parse_facts, DomainSpec, GridDims, ObjectSet, ObjectTag};
use crate::world::{StepAction, WorldError, WorldState};

pub const STIMULUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StimulusError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("stimulus schema: {0}")]
    Schema(String),
    #[error("frame {frame}: unknown symbol `{symbol}` at (row {row}, col {col})")]
    UnknownSymbol { frame: usize, row: usize, col: usize, symbol: String },
    #[error("frame {frame}: row {row} has {found} cells, expected {expected}")]
    Ragged { frame: usize, row: usize, found: usize, expected: usize },
    #[error("frame {frame}: {found_rows}x{found_cols} does not match grid_size {rows}x{cols}")]
    Dims { frame: usize, rows: u32, cols: u32, found_rows: usize, found_cols: usize },
    #[error("frame {frame}: cannot decode cell (row {row}, col {col}): {message}")]
    Decode { frame: usize, row: usize, col: usize, message: String },
    #[error("frame {frame}: no single action from the previous frame produces it: {message}")]
    Inconsistent { frame: usize, message: String },
    #[error("frame {frame}: turn {value} is not 0 or 1")]
    Turn { frame: usize, value: i64 },
    #[error("frame {frame}: turn {value} breaks strict alternation")]
    Alternation { frame: usize, value: i64 },
    #[error("step {step}: {source}")]
    Action { step: usize, source: WorldError },
    #[error("{0}")]
    Domain(String),
}

/// What one legend symbol stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LegendEntry {
    /// Name of a unique object. Generic objects leave this empty and are
    /// named after their type and cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub ty: Option<String>,
    /// Attribute facts; `$o` stands for the object.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<String>,
    /// Bit-matrix set true on the symbol's cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub agent: bool,
}

impl LegendEntry {
    pub fn terrain(matrix: &str) -> Self {
        Self {
            terrain: Some(matrix.into()),
            ..Self::default()
        }
    }

    pub fn unique(name: &str, ty: &str) -> Self {
        Self {
            object: Some(name.into()),
            ty: Some(ty.into()),
            ..Self::default()
        }
    }

    pub fn generic(ty: &str, facts: &[&str]) -> Self {
        Self {
            ty: Some(ty.into()),
            facts: facts.iter().map(|f| f.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn is_object(&self) -> bool {
        self.object.is_some() || self.ty.is_some()
    }
}

/// Symbol table for frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Legend {
    pub symbols: BTreeMap<String, LegendEntry>,
    /// Bit-matrix set on every cell without a terrain symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_terrain: Option<String>,
    /// Token written for a cell with nothing to show.
    #[serde(default = "default_empty")]
    pub empty: String,
}

fn default_empty() -> String {
    ".".into()
}

impl Legend {
    pub fn new() -> Self {
        Self {
            symbols: BTreeMap::new(),
            default_terrain: None,
            empty: default_empty(),
        }
    }

    pub fn with(mut self, symbol: &str, entry: LegendEntry) -> Self {
        self.symbols.insert(symbol.into(), entry);
        self
    }

    pub fn check(&self, spec: &DomainSpec) -> Result<(), StimulusError> {
        let mut names = BTreeSet::new();
        for (sym, e) in &self.symbols {
            if sym.is_empty() || sym.contains(char::is_whitespace) || sym.contains('+') || *sym == self.empty {
                return Err(StimulusError::Schema(format!("legend symbol `{sym}` is not a usable token")));
            }
            if !e.is_object() && e.terrain.is_none() {
                return Err(StimulusError::Schema(format!("legend symbol `{sym}` names neither an object nor a terrain")));
            }
            if let Some(m) = &e.terrain {
                if spec.function(m).is_none() {
                    return Err(StimulusError::Schema(format!("legend symbol `{sym}`: unknown bit-matrix `{m}`")));
                }
            }
            if e.is_object() {
                let ty = e.ty.as_deref().or_else(|| e.object.as_deref().and_then(|o| constant_type(spec, o)));
                match ty {
                    Some(t) if spec.is_type_declared(t) => {}
                    _ => return Err(StimulusError::Schema(format!("legend symbol `{sym}` needs a declared type"))),
                }
            }
            if let Some(o) = &e.object {
                if !names.insert(o.clone()) {
                    return Err(StimulusError::Schema(format!("object `{o}` has two legend symbols")));
                }
            }
        }
        Ok(())
    }
}

impl Default for Legend {
    fn default() -> Self {
        Self::new()
    }
}

fn constant_type<'a>(spec: &'a DomainSpec, name: &str) -> Option<&'a str> {
    spec.constants.iter().find(|c| c.name == name).map(|c| c.ty.as_str())
}

/// One frame: a row-major grid of cells, each a sorted list of symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameGrid {
    pub cells: Vec<Vec<Vec<String>>>,
    pub turn: Option<i64>,
}

impl FrameGrid {
    /// Rows as whitespace-separated tokens; stacked symbols joined by `+`.
    pub fn parse_rows(rows: &[String], empty: &str, frame: usize) -> Result<Self, StimulusError> {
        let mut cells = Vec::new();
        for (r, line) in rows.iter().enumerate() {
            let row: Vec<Vec<String>> = line
                .split_whitespace()
                .map(|tok| {
                    let mut syms: Vec<String> = tok.split('+').filter(|s| *s != empty && !s.is_empty()).map(str::to_owned).collect();
                    syms.sort();
                    syms
                })
                .collect();
            if let Some(first) = cells.first() {
                let first: &Vec<Vec<String>> = first;
                if row.len() != first.len() {
                    return Err(StimulusError::Ragged {
                        frame,
                        row: r + 1,
                        found: row.len(),
                        expected: first.len(),
                    });
                }
            }
            cells.push(row);
        }
        Ok(Self { cells, turn: None })
    }

    pub fn to_rows(&self, empty: &str) -> Vec<String> {
        self.cells
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| if c.is_empty() { empty.to_owned() } else { c.join("+") })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cells.len(), self.cells.first().map_or(0, Vec::len))
    }
}

/// A frame sequence with its question.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub id: String,
    /// Bundle name or path.
    pub domain: String,
    pub grid: GridDims,
    pub frames: Vec<FrameGrid>,
    pub query: Vec<QueryKind>,
    pub scenario: String,
    /// Overrides the bundle legend when present.
    pub legend: Option<Legend>,
    /// Extra ground facts for the first frame (e.g. objects already held).
    pub facts: Vec<String>,
    /// Objects not drawn in the first frame, as (name, type).
    pub extra_objects: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct FrameDoc {
    rows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turn: Option<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FrameJson {
    Rows(Vec<String>),
    Doc(FrameDoc),
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    name: String,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Serialize, Deserialize)]
struct StimulusDoc {
    #[serde(default = "one")]
    version: u32,
    id: String,
    domain: String,
    grid_size: (u32, u32),
    frames: Vec<FrameJson>,
    #[serde(default)]
    query: Vec<String>,
    #[serde(default)]
    scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    legend: Option<Legend>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    facts: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    objects: Vec<ObjectDoc>,
}

fn one() -> u32 {
    1
}

impl Stimulus {
    pub fn from_json(text: &str) -> Result<Self, StimulusError> {
        let v: Value = serde_json::from_str(text).map_err(|e| StimulusError::Json(e.to_string()))?;
        let doc: StimulusDoc = serde_json::from_value(v).map_err(|e| StimulusError::Schema(e.to_string()))?;
        if doc.version != STIMULUS_SCHEMA_VERSION {
            return Err(StimulusError::Schema(format!("unsupported version {}", doc.version)));
        }
        if doc.frames.is_empty() {
            return Err(StimulusError::Schema("at least one frame is required".into()));
        }
        let grid = GridDims::new(doc.grid_size.0, doc.grid_size.1);
        let empty = doc.legend.as_ref().map_or_else(default_empty, |l| l.empty.clone());
        let mut frames = Vec::new();
        for (i, f) in doc.frames.into_iter().enumerate() {
            let (rows, turn) = match f {
                FrameJson::Rows(r) => (r, None),
                FrameJson::Doc(d) => (d.rows, d.turn),
            };
            let mut g = FrameGrid::parse_rows(&rows, &empty, i)?;
            g.turn = turn;
            let (r, c) = g.dims();
            if r != grid.rows as usize || c != grid.cols as usize {
                return Err(StimulusError::Dims {
                    frame: i,
                    rows: grid.rows,
                    cols: grid.cols,
                    found_rows: r,
                    found_cols: c,
                });
            }
            frames.push(g);
        }
        let query = doc
            .query
            .iter()
            .map(|q| QueryKind::parse(q).ok_or_else(|| StimulusError::Schema(format!("unknown query kind `{q}`"))))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            id: doc.id,
            domain: doc.domain,
            grid,
            frames,
            query,
            scenario: doc.scenario,
            legend: doc.legend,
            facts: doc.facts,
            extra_objects: doc.objects.into_iter().map(|o| (o.name, o.ty)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, StimulusError> {
        let text = std::fs::read_to_string(path).map_err(|e| StimulusError::Json(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Value {
        let empty = self.legend.as_ref().map_or_else(default_empty, |l| l.empty.clone());
        let doc = StimulusDoc {
            version: STIMULUS_SCHEMA_VERSION,
            id: self.id.clone(),
            domain: self.domain.clone(),
            grid_size: (self.grid.rows, self.grid.cols),
            frames: self
                .frames
                .iter()
                .map(|f| match f.turn {
                    None => FrameJson::Rows(f.to_rows(&empty)),
                    Some(t) => FrameJson::Doc(FrameDoc {
                        rows: f.to_rows(&empty),
                        turn: Some(t),
                    }),
                })
                .collect(),
            query: self.query.iter().map(|q| q.as_str().to_owned()).collect(),
            scenario: self.scenario.clone(),
            legend: self.legend.clone(),
            facts: self.facts.clone(),
            objects: self
                .extra_objects
                .iter()
                .map(|(n, t)| ObjectDoc {
                    name: n.clone(),
                    ty: t.clone(),
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("stimulus serializes")
    }
}

/// Object found in one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellObject {
    pub name: String,
    pub ty: String,
    pub symbol: String,
    pub facts: Vec<String>,
    pub agent: bool,
}

/// Decoding of a single cell, independent of every other cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellParse {
    pub objects: Vec<CellObject>,
    pub terrains: Vec<String>,
}

/// Per-cell contract so another classifier (e.g. a vision service) can
/// stand in for the legend lookup.
pub trait CellClassifier {
    fn classify(&self, symbols: &[String], row: usize, col: usize) -> Result<CellParse, String>;
}

pub fn generic_name(ty: &str, row: usize, col: usize) -> String {
    format!("{ty}_{row}_{col}")
}

/// Legend lookup as a cell classifier.
pub struct LegendClassifier<'a> {
    pub legend: &'a Legend,
    pub spec: &'a DomainSpec,
}

impl CellClassifier for LegendClassifier<'_> {
    fn classify(&self, symbols: &[String], row: usize, col: usize) -> Result<CellParse, String> {
        let mut out = CellParse::default();
        for s in symbols {
            let e = self.legend.symbols.get(s).ok_or_else(|| format!("unknown symbol `{s}`"))?;
            if let Some(m) = &e.terrain {
                out.terrains.push(m.clone());
            }
            if e.is_object() {
                let name = e.object.clone().unwrap_or_else(|| generic_name(e.ty.as_deref().unwrap(), row, col));
                let ty = e
                    .ty
                    .clone()
                    .or_else(|| constant_type(self.spec, &name).map(str::to_owned))
                    .ok_or_else(|| format!("no type for `{name}`"))?;
                out.objects.push(CellObject {
                    facts: e.facts.iter().map(|f| f.replace("$o", &name)).collect(),
                    agent: e.agent || self.spec.is_subtype(&ty, "agent"),
                    name,
                    ty,
                    symbol: s.clone(),
                });
            }
        }
        Ok(out)
    }
}

/// A whole decoded frame: object positions and terrain cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameFacts {
    /// name → (x, y) and the cell parse it came from.
    pub objects: BTreeMap<String, ((i64, i64), CellObject)>,
    /// (matrix, row, col) set true.
    pub terrain: BTreeSet<(String, i64, i64)>,
    pub turn: Option<i64>,
}

pub fn decode_frame(frame: &FrameGrid, index: usize, classifier: &dyn CellClassifier, default_terrain: Option<&str>) -> Result<FrameFacts, StimulusError> {
    let mut out = FrameFacts {
        turn: frame.turn,
        ..FrameFacts::default()
    };
    for (r, row) in frame.cells.iter().enumerate() {
        for (c, syms) in row.iter().enumerate() {
            let parse = classifier.classify(syms, r + 1, c + 1).map_err(|message| {
                match syms.iter().find(|s| message.contains(&format!("`{s}`")) && message.starts_with("unknown symbol")) {
                    Some(s) => StimulusError::UnknownSymbol {
                        frame: index,
                        row: r + 1,
                        col: c + 1,
                        symbol: s.clone(),
                    },
                    None => StimulusError::Decode {
                        frame: index,
                        row: r + 1,
                        col: c + 1,
                        message,
                    },
                }
            })?;
            let (x, y) = ((c + 1) as i64, (r + 1) as i64);
            if parse.terrains.is_empty() {
                if let Some(d) = default_terrain {
                    out.terrain.insert((d.to_owned(), y, x));
                }
            }
            for m in parse.terrains {
                out.terrain.insert((m, y, x));
            }
            for o in parse.objects {
                if out.objects.contains_key(&o.name) {
                    return Err(StimulusError::Decode {
                        frame: index,
                        row: r + 1,
                        col: c + 1,
                        message: format!("object `{}` appears twice", o.name),
                    });
                }
                out.objects.insert(o.name.clone(), ((x, y), o));
            }
        }
    }
    Ok(out)
}

/// Observable part of a state: where each on-grid object is, which terrain
/// cells are set, and the turn.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Projection {
    objects: BTreeMap<ObjId, (i64, i64)>,
    terrain: BTreeSet<u32>,
    turn: Option<i64>,
}

/// Decoded stimulus: objects, states per frame and actions between them.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub states: Vec<WorldState>,
    pub actions: Vec<StepAction>,
    /// Frames where several actions explained the transition.
    pub warnings: Vec<String>,
}

/// Object set of a stimulus: everything drawn in the first frame that is
/// not a domain constant, plus declared extras.
pub fn stimulus_objects(stim: &Stimulus, legend: &Legend, spec: &DomainSpec) -> Result<ObjectSet, StimulusError> {
    legend.check(spec)?;
    let cls = LegendClassifier { legend, spec };
    let f0 = decode_frame(&stim.frames[0], 0, &cls, legend.default_terrain.as_deref())?;
    let mut set = ObjectSet::new();
    for (name, (_, o)) in &f0.objects {
        if constant_type(spec, name).is_some() {
            continue;
        }
        let tag = if o.agent {
            ObjectTag::Agent
        } else if legend.symbols[&o.symbol].object.is_some() {
            ObjectTag::UniqueObjects
        } else {
            ObjectTag::GenericObjects
        };
        set.push(name.clone(), o.ty.clone(), tag);
    }
    for (name, ty) in &stim.extra_objects {
        if set.get(name).is_none() && constant_type(spec, name).is_none() {
            let tag = if spec.is_subtype(ty, "agent") { ObjectTag::Agent } else { ObjectTag::UniqueObjects };
            set.push(name.clone(), ty.clone(), tag);
        }
    }
    Ok(set)
}

/// Turns frames into states and states into symbols for one environment.
pub struct FrameCodec<'a> {
    pub env: &'a GroundedEnvironment,
    pub legend: &'a Legend,
    /// Symbol drawn for each object.
    symbol_of: HashMap<ObjId, String>,
    /// Terrain symbol per matrix.
    terrain_symbol: HashMap<String, String>,
}

impl<'a> FrameCodec<'a> {
    pub fn new(env: &'a GroundedEnvironment, legend: &'a Legend) -> Self {
        let mut symbol_of = HashMap::new();
        let mut terrain_symbol = HashMap::new();
        for (sym, e) in &legend.symbols {
            if let Some(o) = &e.object {
                if let Some(id) = env.object_id(o) {
                    symbol_of.insert(id, sym.clone());
                }
            } else if e.is_object() {
                // generic objects are named `<type>_<row>_<col>`
                for id in 0..env.objects().len() as ObjId {
                    let ty = e.ty.as_deref().unwrap();
                    let name = env.object_name(id);
                    if env.object_type(id) == ty && name.starts_with(&format!("{ty}_")) {
                        symbol_of.entry(id).or_insert_with(|| sym.clone());
                    }
                }
            }
            if !e.is_object() {
                if let Some(m) = &e.terrain {
                    terrain_symbol.entry(m.clone()).or_insert_with(|| sym.clone());
                }
            }
        }
        Self {
            env,
            legend,
            symbol_of,
            terrain_symbol,
        }
    }

    /// Generic objects of the same type but different attributes share a
    /// type; learn their symbols from the first frame.
    pub fn learn_symbols(&mut self, facts: &FrameFacts) {
        for (name, (_, o)) in &facts.objects {
            if let Some(id) = self.env.object_id(name) {
                self.symbol_of.insert(id, o.symbol.clone());
            }
        }
    }

    fn projection_of_facts(&self, f: &FrameFacts, frame: usize) -> Result<Projection, StimulusError> {
        let mut objects = BTreeMap::new();
        for (name, (loc, _)) in &f.objects {
            let id = self.env.object_id(name).ok_or_else(|| StimulusError::Inconsistent {
                frame,
                message: format!("object `{name}` was not in the first frame"),
            })?;
            objects.insert(id, *loc);
        }
        let mut terrain = BTreeSet::new();
        for (m, r, c) in &f.terrain {
            let bit = self.env.cell_bit(m, *r, *c).ok_or_else(|| StimulusError::Decode {
                frame,
                row: *r as usize,
                col: *c as usize,
                message: format!("`{m}` is not a bit-matrix of the domain"),
            })?;
            terrain.insert(bit);
        }
        Ok(Projection {
            objects,
            terrain,
            turn: f.turn,
        })
    }

    fn projection_of_state(&self, s: &WorldState, with_turn: bool) -> Projection {
        let env = self.env;
        let mut objects = BTreeMap::new();
        for id in 0..env.objects().len() as ObjId {
            if let Some((x, y)) = env.loc(s, id) {
                if env.grid.contains(x, y) {
                    objects.insert(id, (x, y));
                }
            }
        }
        let mut terrain = BTreeSet::new();
        for m in env.matrix_names() {
            if self.legend.symbols.values().all(|e| e.terrain.as_deref() != Some(m)) && self.legend.default_terrain.as_deref() != Some(m) {
                continue;
            }
            for y in 1..=env.grid.rows as i64 {
                for x in 1..=env.grid.cols as i64 {
                    let b = env.cell_bit(m, y, x).unwrap();
                    if s.bit(b) {
                        terrain.insert(b);
                    }
                }
            }
        }
        Projection {
            objects,
            terrain,
            turn: if with_turn { env.turn(s) } else { None },
        }
    }

    /// First-frame state: positions, attribute facts, terrain and extras.
    pub fn initial_state(&self, f0: &FrameFacts, extra_facts: &[String]) -> Result<WorldState, StimulusError> {
        let env = self.env;
        let mut s = env.blank_state();
        for id in 0..env.objects().len() as ObjId {
            env.set_loc(&mut s, id, -1, -1);
        }
        let mut facts = Vec::new();
        for (name, ((x, y), o)) in &f0.objects {
            let id = env.object_id(name).expect("object set built from this frame");
            env.set_loc(&mut s, id, *x, *y);
            facts.extend(o.facts.iter().cloned());
        }
        for (m, r, c) in &f0.terrain {
            let b = env.cell_bit(m, *r, *c).ok_or_else(|| StimulusError::Domain(format!("`{m}` is not a bit-matrix")))?;
            s.set_bit(b, true);
        }
        facts.extend(extra_facts.iter().cloned());
        for text in facts {
            let parsed = parse_facts(&text, &env.spec).map_err(|e| StimulusError::Domain(format!("fact `{text}`: {e}")))?;
            for f in parsed {
                env.apply_fact(&mut s, &f).map_err(|e| StimulusError::Domain(format!("fact `{text}`: {e}")))?;
            }
        }
        if let Some(t) = f0.turn {
            if let Some(slot) = env.func_slot("turn", &[]) {
                s.ints[slot as usize] = t;
            }
        }
        Ok(s)
    }

    /// Decodes every frame and assembles states: the first from its facts,
    /// each later one as the unique successor of the previous state whose
    /// observable part matches the frame (identity when nothing changed).
    pub fn decode(&mut self, stim: &Stimulus, extra_facts: &[String]) -> Result<Decoded, StimulusError> {
        let env = self.env;
        let cls = LegendClassifier {
            legend: self.legend,
            spec: &env.spec,
        };
        let default = self.legend.default_terrain.clone();
        let frames: Vec<FrameFacts> = stim
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| decode_frame(f, i, &cls, default.as_deref()))
            .collect::<Result<_, _>>()?;
        self.learn_symbols(&frames[0]);
        let multi = env.is_multi_agent();
        for (i, f) in frames.iter().enumerate() {
            if let Some(t) = f.turn {
                if multi && !(t == 0 || t == 1) {
                    return Err(StimulusError::Turn { frame: i, value: t });
                }
            }
        }
        let mut facts = stim.facts.clone();
        facts.extend(extra_facts.iter().cloned());
        let s0 = self.initial_state(&frames[0], &facts)?;
        let mut states = vec![s0];
        let mut actions = Vec::new();
        let mut warnings = Vec::new();
        for (t, f) in frames.iter().enumerate().skip(1) {
            let want = self.projection_of_facts(f, t)?;
            let prev = states.last().unwrap().clone();
            let with_turn = want.turn.is_some();
            let matches: Vec<usize> = env
                .valid_actions(&prev)
                .into_iter()
                .filter(|&a| self.projection_of_state(&env.apply_unchecked(&prev, a), with_turn) == want)
                .collect();
            let (action, next) = match matches.first() {
                Some(&a) => {
                    let next = env.apply_unchecked(&prev, a);
                    let distinct: BTreeSet<WorldState> = matches.iter().map(|&b| env.apply_unchecked(&prev, b)).collect();
                    if distinct.len() > 1 {
                        return Err(StimulusError::Inconsistent {
                            frame: t,
                            message: format!("{} different successor states match the frame", distinct.len()),
                        });
                    }
                    if matches.len() > 1 {
                        warnings.push(format!(
                            "frame {t}: {} explain the transition; using {}",
                            matches.iter().map(|&b| env.actions()[b].to_string()).collect::<Vec<_>>().join(", "),
                            env.actions()[a]
                        ));
                    }
                    (StepAction::Ground(a), next)
                }
                None if self.projection_of_state(&prev, with_turn) == want => (StepAction::NoOp, prev.clone()),
                None => {
                    return Err(StimulusError::Inconsistent {
                        frame: t,
                        message: describe_mismatch(env, &self.projection_of_state(&prev, with_turn), &want),
                    })
                }
            };
            if multi {
                if let (Some(before), Some(after)) = (env.turn(&prev), env.turn(&next)) {
                    if action != StepAction::NoOp && before == after {
                        return Err(StimulusError::Alternation { frame: t, value: after });
                    }
                }
            }
            actions.push(action);
            states.push(next);
        }
        Ok(Decoded {
            states,
            actions,
            warnings,
        })
    }

    /// Draws a state as a frame.
    pub fn render(&self, s: &WorldState, with_turn: bool) -> FrameGrid {
        let env = self.env;
        let (rows, cols) = (env.grid.rows as usize, env.grid.cols as usize);
        let mut cells = vec![vec![Vec::<String>::new(); cols]; rows];
        let mut implied: BTreeSet<(String, i64, i64)> = BTreeSet::new();
        for id in 0..env.objects().len() as ObjId {
            let Some((x, y)) = env.loc(s, id) else { continue };
            if !env.grid.contains(x, y) {
                continue;
            }
            if let Some(sym) = self.symbol_of.get(&id) {
                cells[(y - 1) as usize][(x - 1) as usize].push(sym.clone());
                if let Some(m) = &self.legend.symbols[sym].terrain {
                    implied.insert((m.clone(), y, x));
                }
            }
        }
        for y in 1..=rows as i64 {
            for x in 1..=cols as i64 {
                for m in env.matrix_names() {
                    let b = env.cell_bit(m, y, x).unwrap();
                    if !s.bit(b) || implied.contains(&(m.to_owned(), y, x)) {
                        continue;
                    }
                    if let Some(sym) = self.terrain_symbol.get(m) {
                        cells[(y - 1) as usize][(x - 1) as usize].push(sym.clone());
                    }
                }
            }
        }
        for row in &mut cells {
            for c in row.iter_mut() {
                c.sort();
            }
        }
        FrameGrid {
            cells,
            turn: if with_turn { env.turn(s) } else { None },
        }
    }
}

fn describe_mismatch(env: &GroundedEnvironment, have: &Projection, want: &Projection) -> String {
    let mut parts = Vec::new();
    for (id, loc) in &want.objects {
        match have.objects.get(id) {
            Some(l) if l == loc => {}
            Some(l) => parts.push(format!("{} moved {:?} -> {:?}", env.object_name(*id), l, loc)),
            None => parts.push(format!("{} appeared at {:?}", env.object_name(*id), loc)),
        }
    }
    for (id, loc) in &have.objects {
        if !want.objects.contains_key(id) {
            parts.push(format!("{} vanished from {:?}", env.object_name(*id), loc));
        }
    }
    let added = want.terrain.difference(&have.terrain).count();
    let removed = have.terrain.difference(&want.terrain).count();
    if added + removed > 0 {
        parts.push(format!("{added} terrain cells set, {removed} cleared"));
    }
    if have.turn != want.turn {
        parts.push(format!("turn {:?} -> {:?}", have.turn, want.turn));
    }
    parts.join("; ")
}

/// One row of human judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRating {
    pub stimulus_id: String,
    pub question_id: String,
    pub mean: f64,
    #[serde(default)]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanDataTable {
    pub rows: Vec<HumanRating>,
    /// Every stimulus' ratings sum to 1 ± 0.01.
    pub normalized: bool,
}

impl HumanDataTable {
    pub fn from_csv(text: &str) -> Result<Self, StimulusError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| StimulusError::Schema(e.to_string()))?.clone();
        for col in ["stimulus_id", "question_id", "mean"] {
            if !headers.iter().any(|h| h == col) {
                return Err(StimulusError::Schema(format!("missing column `{col}`")));
            }
        }
        let mut rows: Vec<HumanRating> = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, rec) in rdr.deserialize::<HumanRating>().enumerate() {
            let r = rec.map_err(|e| StimulusError::Schema(format!("row {}: {e}", i + 2)))?;
            if !r.mean.is_finite() || r.std.is_some_and(|s| !s.is_finite()) {
                return Err(StimulusError::Schema(format!("row {}: non-finite rating", i + 2)));
            }
            if !seen.insert((r.stimulus_id.clone(), r.question_id.clone())) {
                return Err(StimulusError::Schema(format!(
                    "row {}: duplicate ({}, {})",
                    i + 2,
                    r.stimulus_id,
                    r.question_id
                )));
            }
            rows.push(r);
        }
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &rows {
            *sums.entry(&r.stimulus_id).or_default() += r.mean;
        }
        let normalized = !sums.is_empty() && sums.values().all(|s| (s - 1.0).abs() <= 0.01);
        Ok(Self { rows, normalized })
    }

    pub fn load(path: &Path) -> Result<Self, StimulusError> {
        let text = std::fs::read_to_string(path).map_err(|e| StimulusError::Schema(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn get(&self, stimulus: &str, question: &str) -> Option<&HumanRating> {
        self.rows.iter().find(|r| r.stimulus_id == stimulus && r.question_id == question)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_sorted_and_empty_cells_dropped() {
        let g = FrameGrid::parse_rows(&["b+a . #".to_string()], ".", 0).unwrap();
        assert_eq!(g.cells[0][0], ["a", "b"]);
        assert!(g.cells[0][1].is_empty());
        assert_eq!(g.to_rows("."), ["a+b . #"]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = FrameGrid::parse_rows(&["a b".into(), "a".into()], ".", 3).unwrap_err();
        assert_eq!(err, StimulusError::Ragged { frame: 3, row: 2, found: 1, expected: 2 });
    }

    #[test]
    fn human_csv() {
        let t = HumanDataTable::from_csv("stimulus_id,question_id,mean,std\ns1,q1,0.5,0.1\ns1,q2,0.5,\ns2,q1,1.0,0.0\n").unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.normalized);
        assert!(HumanDataTable::from_csv("stimulus_id,mean\ns1,1\n").is_err());
        assert!(HumanDataTable::from_csv("stimulus_id,question_id,mean\ns1,q1,abc\n").is_err());
        assert!(HumanDataTable::from_csv("stimulus_id,question_id,mean\ns1,q1,1\ns1,q1,2\n").is_err());
    }
}
