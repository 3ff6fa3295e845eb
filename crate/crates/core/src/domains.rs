//! Builders for the benchmark domains: doors/keys/gems mazes in four
//! unlocking variants, a two-agent team maze, food trucks and astronaut
//! terrain.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::agent::config::AgentConfig;
use crate::pddl::{parse_domain, DomainSpec, GridDims, ObjectSet, ObjectTag, PddlError};
use crate::stimulus::{Legend, LegendEntry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("{0}")]
    Options(String),
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("bundle config: {0}")]
    Config(String),
    #[error("bundle files: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DkgRule {
    Single,
    Double,
    Reuse,
    Inverse,
}

impl DkgRule {
    pub const ALL: [DkgRule; 4] = [DkgRule::Single, DkgRule::Double, DkgRule::Reuse, DkgRule::Inverse];

    pub fn as_str(self) -> &'static str {
        match self {
            DkgRule::Single => "single",
            DkgRule::Double => "double",
            DkgRule::Reuse => "reuse",
            DkgRule::Inverse => "inverse",
        }
    }
}

/// Unlocking rule plus, for `Inverse`, the key colour → door colour map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DkgVariant {
    pub rule: DkgRule,
    pub mapping: BTreeMap<String, String>,
}

impl DkgVariant {
    pub fn new(rule: DkgRule) -> Self {
        Self {
            rule,
            mapping: BTreeMap::new(),
        }
    }

    pub fn inverse(mapping: &[(&str, &str)]) -> Self {
        Self {
            rule: DkgRule::Inverse,
            mapping: mapping.iter().map(|(k, d)| (k.to_string(), d.to_string())).collect(),
        }
    }
}

/// A domain with everything needed to decode stimuli for it.
#[derive(Debug, Clone)]
pub struct DomainBundle {
    pub name: String,
    pub domain_text: String,
    pub spec: DomainSpec,
    /// Objects of the template grid (domain constants excluded).
    pub objects: ObjectSet,
    pub grid: GridDims,
    pub config: AgentConfig,
    pub legend: Legend,
    /// Static facts true in every stimulus (e.g. colour mappings).
    pub init_facts: Vec<String>,
}

pub const DOMAIN_FILE: &str = "domain.pddl";
pub const CONFIG_FILE: &str = "config.json";
pub const LEGEND_FILE: &str = "legend.json";
pub const FACTS_FILE: &str = "facts.json";

impl DomainBundle {
    fn assemble(
        name: &str,
        domain_text: String,
        objects: ObjectSet,
        grid: GridDims,
        config: serde_json::Value,
        legend: Legend,
        init_facts: Vec<String>,
    ) -> Result<Self, DomainError> {
        let spec = parse_domain(&domain_text)?;
        let config = AgentConfig::from_value(&config).map_err(|e| DomainError::Config(e.to_string()))?;
        Ok(Self {
            name: name.into(),
            domain_text,
            spec,
            objects,
            grid,
            config,
            legend,
            init_facts,
        })
    }

    /// Config for a stimulus grid of other dimensions.
    pub fn config_for(&self, grid: GridDims) -> AgentConfig {
        let mut c = self.config.clone();
        c.grid_size = (grid.rows, grid.cols);
        c
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), DomainError> {
        let io = |e: std::io::Error| DomainError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(DOMAIN_FILE), &self.domain_text).map_err(io)?;
        let cfg = serde_json::to_string_pretty(&self.config.to_json()).expect("config serializes");
        std::fs::write(dir.join(CONFIG_FILE), cfg + "\n").map_err(io)?;
        let legend = serde_json::to_string_pretty(&self.legend).expect("legend serializes");
        std::fs::write(dir.join(LEGEND_FILE), legend + "\n").map_err(io)?;
        let facts = serde_json::to_string_pretty(&json!({
            "name": self.name,
            "grid_size": [self.grid.rows, self.grid.cols],
            "facts": self.init_facts,
            "objects": self.objects.entries,
        }))
        .expect("facts serialize");
        std::fs::write(dir.join(FACTS_FILE), facts + "\n").map_err(io)?;
        Ok(())
    }

    /// Reads a bundle written by [`DomainBundle::write_dir`]. Only the
    /// domain and config files are required.
    pub fn read_dir(dir: &Path) -> Result<Self, DomainError> {
        let read = |f: &str| std::fs::read_to_string(dir.join(f)).map_err(|e| DomainError::Io(format!("{}: {e}", dir.join(f).display())));
        let domain_text = read(DOMAIN_FILE)?;
        let spec = parse_domain(&domain_text)?;
        let config = AgentConfig::from_json(&read(CONFIG_FILE)?).map_err(|e| DomainError::Config(e.to_string()))?;
        let legend = match read(LEGEND_FILE) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| DomainError::Io(format!("{LEGEND_FILE}: {e}")))?,
            Err(_) => Legend::new(),
        };
        let (name, init_facts, objects) = match read(FACTS_FILE) {
            Ok(t) => {
                let v: serde_json::Value = serde_json::from_str(&t).map_err(|e| DomainError::Io(format!("{FACTS_FILE}: {e}")))?;
                let name = v["name"].as_str().unwrap_or(&spec.name).to_owned();
                let facts = serde_json::from_value(v["facts"].clone()).unwrap_or_default();
                let objects = serde_json::from_value(v["objects"].clone()).unwrap_or_default();
                (name, facts, ObjectSet { entries: objects })
            }
            Err(_) => (spec.name.clone(), Vec::new(), ObjectSet::new()),
        };
        let grid = GridDims::new(config.grid_size.0, config.grid_size.1);
        Ok(Self {
            name,
            domain_text,
            spec,
            objects,
            grid,
            config,
            legend,
            init_facts,
        })
    }
}

const GRID_FUNCTIONS: &str = "(gridheight) (gridwidth) - integer\n    (xloc ?o - object) (yloc ?o - object) - integer";

/// (name, bound test, dy, dx) for the four moves.
const MOVES: [(&str, &str, i64, i64); 4] = [
    ("up", "(> (yloc ?a) 1)", -1, 0),
    ("down", "(< (yloc ?a) (gridheight))", 1, 0),
    ("left", "(> (xloc ?a) 1)", 0, -1),
    ("right", "(< (xloc ?a) (gridwidth))", 0, 1),
];

fn shifted(axis: &str, d: i64) -> String {
    match d {
        0 => format!("({axis} ?a)"),
        1 => format!("(+ ({axis} ?a) 1)"),
        _ => format!("(- ({axis} ?a) 1)"),
    }
}

fn target_cell(dy: i64, dx: i64) -> String {
    format!("{} {}", shifted("yloc", dy), shifted("xloc", dx))
}

fn effect_of(dy: i64, dx: i64) -> &'static str {
    match (dy, dx) {
        (-1, 0) => "(decrease (yloc ?a) 1)",
        (1, 0) => "(increase (yloc ?a) 1)",
        (0, -1) => "(decrease (xloc ?a) 1)",
        _ => "(increase (xloc ?a) 1)",
    }
}

/// Four moves blocked by the given bit-matrices, with optional extra
/// precondition and effect text.
fn move_actions(out: &mut String, prefix: &str, blockers: &[&str], extra_pre: &str, extra_eff: &str, params: &str) {
    for (name, bound, dy, dx) in MOVES {
        let mut pre = bound.to_string();
        for b in blockers {
            let _ = write!(pre, "\n            (= (get-index {b} {}) false)", target_cell(dy, dx));
        }
        if !extra_pre.is_empty() {
            let _ = write!(pre, "\n            {extra_pre}");
        }
        let _ = write!(
            out,
            "\n  (:action {prefix}{name}\n    :parameters ({params})\n    :precondition (and {pre})\n    :effect (and {}{extra_eff}))\n",
            effect_of(dy, dx)
        );
    }
}

fn check_name(what: &str, s: &str) -> Result<(), DomainError> {
    let ok = !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(DomainError::Options(format!("{what} `{s}` is not a valid PDDL name")))
    }
}

/// Gem letters used when none are given.
pub const DEFAULT_GEMS: [&str; 4] = ["A", "B", "C", "D"];

fn dkg_legend(colors: &[&str], gems: &[&str], agents: &[(&str, &str, &str)]) -> Legend {
    let mut legend = Legend::new().with("#", LegendEntry::terrain("wall"));
    for (sym, name, ty) in agents {
        legend = legend.with(sym, LegendEntry::unique(name, ty));
    }
    for g in gems {
        legend = legend.with(g, LegendEntry::unique(&format!("gem{g}"), "gem"));
    }
    for c in colors {
        legend = legend.with(&format!("k_{c}"), LegendEntry::generic("key", &[&format!("(keycolor $o {c})")]));
        let mut door = LegendEntry::generic("door", &[&format!("(doorcolor $o {c})"), "(locked $o)"]);
        door.terrain = Some("doors".into());
        legend = legend.with(&format!("d_{c}"), door);
    }
    legend
}

fn unit_costs(names: &[String], pickup: f64) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for n in names {
        let c = if n.starts_with("pickup") || n.starts_with("unlock") || n == "give" { pickup } else { 1.0 };
        m.insert(n.clone(), json!(c));
    }
    serde_json::Value::Object(m)
}

fn unlock_action(variant: &DkgVariant, turn_pre: &str, turn_eff: &str) -> String {
    const OPEN: &str = "(not (locked ?d))\n        (assign (get-index doors (yloc ?d) (xloc ?d)) false)\n        (assign (xloc ?d) -1) (assign (yloc ?d) -1)";
    match variant.rule {
        DkgRule::Single => format!(
            "\n  (:action unlock\n    :parameters (?a - agent ?k - key ?d - door ?c - color)\n    :precondition (and (has ?a ?k) (keycolor ?k ?c) (doorcolor ?d ?c) (locked ?d) (adjacent ?a ?d){turn_pre})\n    :effect (and (not (has ?a ?k))\n        {OPEN}{turn_eff}))\n"
        ),
        DkgRule::Reuse => format!(
            "\n  (:action unlock\n    :parameters (?a - agent ?k - key ?d - door ?c - color)\n    :precondition (and (has ?a ?k) (keycolor ?k ?c) (doorcolor ?d ?c) (locked ?d) (adjacent ?a ?d){turn_pre})\n    :effect (and {OPEN}{turn_eff}))\n"
        ),
        DkgRule::Double => format!(
            "\n  (:action unlock\n    :parameters (?a - agent ?k1 - key ?k2 - key ?d - door ?c - color)\n    :precondition (and (not (= ?k1 ?k2)) (has ?a ?k1) (has ?a ?k2) (keycolor ?k1 ?c) (keycolor ?k2 ?c)\n        (doorcolor ?d ?c) (locked ?d) (adjacent ?a ?d){turn_pre})\n    :effect (and (not (has ?a ?k1)) (not (has ?a ?k2))\n        {OPEN}{turn_eff}))\n"
        ),
        DkgRule::Inverse => format!(
            "\n  (:action unlock\n    :parameters (?a - agent ?k - key ?d - door ?kc - color ?dc - color)\n    :precondition (and (has ?a ?k) (keycolor ?k ?kc) (doorcolor ?d ?dc) (opens ?kc ?dc) (locked ?d) (adjacent ?a ?d){turn_pre})\n    :effect (and (not (has ?a ?k))\n        {OPEN}{turn_eff}))\n"
        ),
    }
}

fn check_variant(variant: &DkgVariant, colors: &[&str]) -> Result<Vec<String>, DomainError> {
    if colors.is_empty() {
        return Err(DomainError::Options("at least one colour is required".into()));
    }
    for c in colors {
        check_name("colour", c)?;
    }
    if variant.rule != DkgRule::Inverse {
        return Ok(Vec::new());
    }
    // a bijection onto the colour set
    let mut targets: Vec<&str> = variant.mapping.values().map(String::as_str).collect();
    targets.sort_unstable();
    targets.dedup();
    let keys: Vec<&str> = variant.mapping.keys().map(String::as_str).collect();
    let mut sorted: Vec<&str> = colors.to_vec();
    sorted.sort_unstable();
    if keys != sorted || targets != sorted {
        return Err(DomainError::Options(
            "inverse variant needs a key-colour → door-colour bijection over the colours".into(),
        ));
    }
    Ok(variant.mapping.iter().map(|(k, d)| format!("(opens {k} {d})")).collect())
}

/// Doors/keys/gems maze for one unlocking rule.
pub fn build_dkg(variant: &DkgVariant, colors: &[&str], grid: GridDims) -> Result<DomainBundle, DomainError> {
    build_dkg_with_gems(variant, colors, &DEFAULT_GEMS, grid)
}

pub fn build_dkg_with_gems(variant: &DkgVariant, colors: &[&str], gems: &[&str], grid: GridDims) -> Result<DomainBundle, DomainError> {
    let init_facts = check_variant(variant, colors)?;
    if gems.is_empty() {
        return Err(DomainError::Options("at least one gem is required".into()));
    }
    let opens = if variant.rule == DkgRule::Inverse { "\n    (opens ?k - color ?d - color)" } else { "" };
    let mut d = format!(
        "(define (domain dkg-{rule})
  (:requirements :fluents :adl :typing)
  (:types key gem - item
    item door agent - object
    color)
  (:constants {colors} - color)
  (:predicates
    (has ?a - agent ?i - item)
    (at ?a - agent ?o - object)
    (adjacent ?a - agent ?o - object)
    (keycolor ?k - key ?c - color)
    (doorcolor ?d - door ?c - color)
    (locked ?d - door){opens})
  (:functions
    {GRID_FUNCTIONS}
    (wall) (doors) - bit-matrix)
",
        rule = variant.rule.as_str(),
        colors = colors.join(" "),
    );
    move_actions(&mut d, "", &["wall", "doors"], "", "", "?a - agent");
    d.push_str(
        "
  (:action pickup
    :parameters (?a - agent ?i - item)
    :precondition (and (not (has ?a ?i)) (or (at ?a ?i) (adjacent ?a ?i)))
    :effect (and (has ?a ?i) (assign (xloc ?i) -1) (assign (yloc ?i) -1)))
",
    );
    d.push_str(&unlock_action(variant, "", ""));
    d.push_str(")\n");

    let mut objects = ObjectSet::new();
    objects.push("player", "agent", ObjectTag::Agent);
    for g in gems {
        check_name("gem", g)?;
        objects.push(format!("gem{g}"), "gem", ObjectTag::UniqueObjects);
    }
    for c in colors {
        objects.push(format!("key_{c}"), "key", ObjectTag::GenericObjects);
        objects.push(format!("door_{c}"), "door", ObjectTag::GenericObjects);
    }
    let names: Vec<String> = ["up", "down", "left", "right", "pickup", "unlock"].iter().map(|s| s.to_string()).collect();
    let config = json!({
        "grid_size": [grid.rows, grid.cols],
        "observability": "full",
        "goals": gems.iter().map(|g| vec![format!("(has player gem{g})")]).collect::<Vec<_>>(),
        "costs": [unit_costs(&names, 1.0)],
        "query": ["goal"],
        "beta": 1.0,
    });
    let legend = dkg_legend(colors, gems, &[("@", "player", "agent")]);
    DomainBundle::assemble(&format!("dkg-{}", variant.rule.as_str()), d, objects, grid, config, legend, init_facts)
}

/// Options for the two-agent team maze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiAgentOptions {
    pub colors: Vec<String>,
    pub gems: Vec<String>,
    /// Let the assistant pick up gems and hand items to the principal.
    pub gem_handoff: bool,
}

impl Default for MultiAgentOptions {
    fn default() -> Self {
        Self {
            colors: vec!["red".into(), "blue".into()],
            gems: DEFAULT_GEMS.iter().map(|s| s.to_string()).collect(),
            gem_handoff: false,
        }
    }
}

/// Principal/assistant maze with strict turn-taking and one team plan.
pub fn build_multiagent_dkg(grid: GridDims, opts: &MultiAgentOptions) -> Result<DomainBundle, DomainError> {
    let colors: Vec<&str> = opts.colors.iter().map(String::as_str).collect();
    check_variant(&DkgVariant::new(DkgRule::Single), &colors)?;
    const TURN_PRE: &str = "\n            (= (turn) (agentcode ?a))";
    const TURN_EFF: &str = "\n        (assign (turn) (- 1 (turn)))";
    let mut d = format!(
        "(define (domain dkg-team)
  (:requirements :fluents :adl :typing)
  (:types principal assistant - agent
    key gem - item
    item door agent - object
    color)
  (:constants {colors} - color)
  (:predicates
    (has ?a - agent ?i - item)
    (at ?a - agent ?o - object)
    (adjacent ?a - agent ?o - object)
    (keycolor ?k - key ?c - color)
    (doorcolor ?d - door ?c - color)
    (locked ?d - door))
  (:functions
    {GRID_FUNCTIONS}
    (turn) - integer
    (agentcode ?a - agent) - integer
    (wall) (doors) - bit-matrix)
",
        colors = colors.join(" "),
    );
    move_actions(&mut d, "", &["wall", "doors"], "(= (turn) (agentcode ?a))", TURN_EFF, "?a - agent");
    let gem_picker = if opts.gem_handoff { "agent" } else { "principal" };
    let _ = write!(
        d,
        "
  (:action pickup-key
    :parameters (?a - agent ?k - key)
    :precondition (and (not (has ?a ?k)) (or (at ?a ?k) (adjacent ?a ?k)){TURN_PRE})
    :effect (and (has ?a ?k) (assign (xloc ?k) -1) (assign (yloc ?k) -1){TURN_EFF}))

  (:action pickup-gem
    :parameters (?a - {gem_picker} ?g - gem)
    :precondition (and (not (has ?a ?g)) (or (at ?a ?g) (adjacent ?a ?g)){TURN_PRE})
    :effect (and (has ?a ?g) (assign (xloc ?g) -1) (assign (yloc ?g) -1){TURN_EFF}))

  (:action wait
    :parameters (?a - agent)
    :precondition (and (= (turn) (agentcode ?a)))
    :effect (and (assign (turn) (- 1 (turn)))))
"
    );
    if opts.gem_handoff {
        let _ = write!(
            d,
            "
  (:action give
    :parameters (?a - assistant ?p - principal ?i - item)
    :precondition (and (has ?a ?i) (or (at ?a ?p) (adjacent ?a ?p)){TURN_PRE})
    :effect (and (not (has ?a ?i)) (has ?p ?i){TURN_EFF}))
"
        );
    }
    d.push_str(&unlock_action(&DkgVariant::new(DkgRule::Single), TURN_PRE, TURN_EFF));
    d.push_str(")\n");

    let mut objects = ObjectSet::new();
    objects.push("principal", "principal", ObjectTag::Agent);
    objects.push("helper", "assistant", ObjectTag::Agent);
    for g in &opts.gems {
        check_name("gem", g)?;
        objects.push(format!("gem{g}"), "gem", ObjectTag::UniqueObjects);
    }
    let mut names: Vec<String> = ["up", "down", "left", "right", "pickup-key", "pickup-gem", "wait", "unlock"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if opts.gem_handoff {
        names.push("give".into());
    }
    let config = json!({
        "grid_size": [grid.rows, grid.cols],
        "observability": "full",
        "goals": opts.gems.iter().map(|g| vec![format!("(has principal gem{g})")]).collect::<Vec<_>>(),
        "costs": [unit_costs(&names, 1.0)],
        "query": ["goal"],
        "beta": 1.0,
    });
    let gems: Vec<&str> = opts.gems.iter().map(String::as_str).collect();
    let legend = dkg_legend(&colors, &gems, &[("P", "principal", "principal"), ("H", "helper", "assistant")]);
    let init_facts = vec!["(= (agentcode principal) 0)".into(), "(= (agentcode helper) 1)".into()];
    DomainBundle::assemble("dkg-team", d, objects, grid, config, legend, init_facts)
}

/// Food trucks parked in spots, hidden from the agent behind buildings.
pub fn build_foodtruck(grid: GridDims, trucks: &[&str], spots: &[&str]) -> Result<DomainBundle, DomainError> {
    if trucks.is_empty() {
        return Err(DomainError::Options("at least one truck is required".into()));
    }
    if spots.len() < trucks.len() {
        return Err(DomainError::Options(format!("{} spots cannot hold {} trucks", spots.len(), trucks.len())));
    }
    for t in trucks {
        check_name("truck", t)?;
    }
    for s in spots {
        check_name("spot", s)?;
    }
    let mut d = String::from(
        "(define (domain foodtruck)
  (:requirements :fluents :adl :typing)
  (:types truck spot agent - object)
  (:predicates
    (at ?a - agent ?o - object)
    (adjacent ?a - agent ?o - object)
    (ate ?a - agent ?t - truck))
  (:functions
    (gridheight) (gridwidth) - integer
    (xloc ?o - object) (yloc ?o - object) - integer
    (building) - bit-matrix)
",
    );
    move_actions(&mut d, "", &["building"], "", "", "?a - agent");
    d.push_str(
        "
  (:action eat
    :parameters (?a - agent ?t - truck)
    :precondition (and (at ?a ?t) (not (ate ?a ?t)))
    :effect (and (ate ?a ?t)))
)
",
    );
    let mut objects = ObjectSet::new();
    objects.push("student", "agent", ObjectTag::Agent);
    let mut legend = Legend::new().with("#", LegendEntry::terrain("building")).with("@", LegendEntry::unique("student", "agent"));
    for t in trucks {
        objects.push(*t, "truck", ObjectTag::UniqueObjects);
        let sym = format!("T_{t}");
        legend = legend.with(&sym, LegendEntry::unique(t, "truck"));
    }
    for s in spots {
        objects.push(*s, "spot", ObjectTag::UniqueObjects);
        legend = legend.with(&format!("S_{s}"), LegendEntry::unique(s, "spot"));
    }
    let names: Vec<String> = ["up", "down", "left", "right", "eat"].iter().map(|s| s.to_string()).collect();
    let config = json!({
        "grid_size": [grid.rows, grid.cols],
        "observability": "partial",
        "belief_config": {
            "belief_object": "truck",
            "belief_container": "spot",
            "barrier": "building",
            "agent": "student",
            "visibility": "line-of-sight",
        },
        "goals": trucks.iter().map(|t| vec![format!("(ate student {t})")]).collect::<Vec<_>>(),
        "costs": [unit_costs(&names, 1.0)],
        "query": ["belief", "goal"],
        "beta": 1.0,
    });
    DomainBundle::assemble("foodtruck", d, objects, grid, config, legend, Vec::new())
}

/// Terrain cost values tried per terrain when none are given.
pub const DEFAULT_TERRAIN_COSTS: [f64; 5] = [0.1, 1.0, 2.0, 4.0, 8.0];
/// Package reward values tried per package when none are given.
pub const DEFAULT_PACKAGE_REWARDS: [f64; 3] = [1.0, 5.0, 10.0];

/// Hypothesis grids for the astronaut domain.
#[derive(Debug, Clone, PartialEq)]
pub struct AstronautOptions {
    pub terrain_costs: Vec<f64>,
    pub package_rewards: Vec<f64>,
    pub pickup_cost: f64,
}

impl Default for AstronautOptions {
    fn default() -> Self {
        Self {
            terrain_costs: DEFAULT_TERRAIN_COSTS.to_vec(),
            package_rewards: DEFAULT_PACKAGE_REWARDS.to_vec(),
            pickup_cost: 1.0,
        }
    }
}

fn cartesian(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Care packages across terrain whose walking cost is unknown.
pub fn build_astronaut(grid: GridDims, terrains: &[&str], packages: &[&str]) -> Result<DomainBundle, DomainError> {
    build_astronaut_with(grid, terrains, packages, &AstronautOptions::default())
}

pub fn build_astronaut_with(grid: GridDims, terrains: &[&str], packages: &[&str], opts: &AstronautOptions) -> Result<DomainBundle, DomainError> {
    if terrains.len() < 2 {
        return Err(DomainError::Options("at least two terrain types are required".into()));
    }
    if packages.is_empty() {
        return Err(DomainError::Options("at least one package is required".into()));
    }
    if opts.terrain_costs.is_empty() || opts.package_rewards.is_empty() {
        return Err(DomainError::Options("cost and reward grids must be non-empty".into()));
    }
    for t in terrains {
        check_name("terrain", t)?;
    }
    for p in packages {
        check_name("package", p)?;
    }
    let matrices: Vec<String> = terrains.iter().map(|t| t.to_string()).collect();
    let mut d = format!(
        "(define (domain astronaut)
  (:requirements :fluents :adl :typing)
  (:types package agent - object)
  (:predicates
    (has ?a - agent ?p - package)
    (at ?a - agent ?o - object)
    (adjacent ?a - agent ?o - object))
  (:functions
    {GRID_FUNCTIONS}
    {} - bit-matrix)
",
        matrices.iter().map(|m| format!("({m})")).collect::<Vec<_>>().join(" ")
    );
    for t in terrains {
        move_actions(
            &mut d,
            &format!("{t}-"),
            &[],
            &format!("(= (get-index {t} (yloc ?a) (xloc ?a)) true)"),
            "",
            "?a - agent",
        );
    }
    d.push_str(
        "
  (:action pickup
    :parameters (?a - agent ?p - package)
    :precondition (and (not (has ?a ?p)) (or (at ?a ?p) (adjacent ?a ?p)))
    :effect (and (has ?a ?p) (assign (xloc ?p) -1) (assign (yloc ?p) -1)))
)
",
    );
    let mut objects = ObjectSet::new();
    objects.push("astronaut", "agent", ObjectTag::Agent);
    let mut legend = Legend::new().with("@", LegendEntry::unique("astronaut", "agent"));
    for (i, t) in terrains.iter().enumerate() {
        let sym = t.chars().next().unwrap().to_ascii_lowercase().to_string();
        let sym = if legend.symbols.contains_key(&sym) { format!("{sym}{i}") } else { sym };
        legend = legend.with(&sym, LegendEntry::terrain(t));
    }
    for p in packages {
        objects.push(*p, "package", ObjectTag::UniqueObjects);
        legend = legend.with(&format!("P_{p}"), LegendEntry::unique(p, "package"));
    }
    let costs: Vec<serde_json::Value> = cartesian(&opts.terrain_costs, terrains.len())
        .into_iter()
        .map(|combo| {
            let mut m = serde_json::Map::new();
            for (t, c) in terrains.iter().zip(&combo) {
                for (dir, ..) in MOVES {
                    m.insert(format!("{t}-{dir}"), json!(c));
                }
            }
            m.insert("pickup".into(), json!(opts.pickup_cost));
            serde_json::Value::Object(m)
        })
        .collect();
    let rewards: Vec<serde_json::Value> = cartesian(&opts.package_rewards, packages.len())
        .into_iter()
        .map(|combo| {
            let m: serde_json::Map<String, serde_json::Value> = packages.iter().zip(combo).map(|(p, r)| (p.to_string(), json!(r))).collect();
            serde_json::Value::Object(m)
        })
        .collect();
    let config = json!({
        "grid_size": [grid.rows, grid.cols],
        "observability": "full",
        "goals": packages.iter().map(|p| vec![format!("(has astronaut {p})")]).collect::<Vec<_>>(),
        "rewards": rewards,
        "costs": costs,
        "query": ["cost", "reward"],
        "beta": 1.0,
    });
    DomainBundle::assemble("astronaut", d, objects, grid, config, legend, Vec::new())
}

/// Builds a bundle by name: `dkg-single`, `dkg-double`, `dkg-reuse`,
/// `dkg-inverse` (red↔blue), `dkg-team`, `foodtruck`, `astronaut`.
pub fn builtin(name: &str, grid: GridDims) -> Result<DomainBundle, DomainError> {
    let colors = ["red", "blue"];
    match name {
        "dkg-single" => build_dkg(&DkgVariant::new(DkgRule::Single), &colors, grid),
        "dkg-double" => build_dkg(&DkgVariant::new(DkgRule::Double), &colors, grid),
        "dkg-reuse" => build_dkg(&DkgVariant::new(DkgRule::Reuse), &colors, grid),
        "dkg-inverse" => build_dkg(&DkgVariant::inverse(&[("red", "blue"), ("blue", "red")]), &colors, grid),
        "dkg-team" => build_multiagent_dkg(grid, &MultiAgentOptions::default()),
        "foodtruck" => build_foodtruck(grid, &["korean", "lebanese"], &["spotA", "spotB"]),
        "astronaut" => build_astronaut(grid, &["sand", "rock"], &["pkgA", "pkgB"]),
        other => Err(DomainError::Options(format!("unknown built-in domain `{other}`"))),
    }
}

pub const BUILTIN_NAMES: [&str; 7] = ["dkg-single", "dkg-double", "dkg-reuse", "dkg-inverse", "dkg-team", "foodtruck", "astronaut"];
