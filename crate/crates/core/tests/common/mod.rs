#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use invplan::agent::config::AgentConfig;
use invplan::agent::AgentModel;
use invplan::domains::{builtin, DomainBundle};
use invplan::pddl::{GridDims, GroundedEnvironment, ObjectSet};
use invplan::pipeline::{prepare, resolve_bundle, rollout_stimulus, Overrides, Prepared};
use invplan::stimulus::Stimulus;
use invplan::world::WorldState;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

pub fn load(path: &Path) -> (DomainBundle, Stimulus) {
    let stim = Stimulus::load(path).unwrap();
    let bundle = resolve_bundle(&stim.domain, path.parent().unwrap(), stim.grid).unwrap();
    (bundle, stim)
}

pub fn prepared(path: &Path) -> Prepared {
    let (b, s) = load(path);
    prepare(&b, &s, &Overrides::default()).unwrap()
}

pub fn grid_of(rows: &[&str]) -> GridDims {
    GridDims::new(rows.len() as u32, rows[0].split_whitespace().count() as u32)
}

/// Plays named actions from a first frame and prepares the result.
pub fn roll(bundle: &DomainBundle, rows: &[&str], actions: &[&str]) -> Prepared {
    roll_with(bundle, rows, actions, &Overrides::default())
}

pub fn roll_with(bundle: &DomainBundle, rows: &[&str], actions: &[&str], o: &Overrides) -> Prepared {
    let stim = rollout_stimulus(bundle, "t", rows, actions).unwrap();
    prepare(bundle, &stim, o).unwrap()
}

pub fn dkg(variant: &str, rows: &[&str]) -> DomainBundle {
    builtin(variant, grid_of(rows)).unwrap()
}

pub fn action(env: &GroundedEnvironment, name: &str) -> usize {
    env.actions()
        .iter()
        .position(|a| a.to_string() == name)
        .unwrap_or_else(|| panic!("no action {name}"))
}

/// Environment, initial state and a model for a hand-written domain.
pub fn model_from(domain: &str, objects: &ObjectSet, grid: GridDims, facts: &str, config: &str) -> (Arc<GroundedEnvironment>, WorldState, AgentModel) {
    let spec = invplan::pddl::parse_domain(domain).unwrap();
    let env = Arc::new(GroundedEnvironment::new(&spec, objects, grid).unwrap());
    let s0 = env.state_from_facts(&invplan::pddl::parse_facts(facts, &spec).unwrap()).unwrap();
    let cfg = AgentConfig::from_json(config).unwrap();
    let model = AgentModel::new(env.clone(), cfg, &s0).unwrap();
    (env, s0, model)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Grounds a first frame without building an agent model.
pub fn ground(bundle: &DomainBundle, rows: &[&str]) -> (Arc<GroundedEnvironment>, WorldState) {
    use invplan::stimulus::{stimulus_objects, FrameCodec};
    let stim = rollout_stimulus(bundle, "t", rows, &[]).unwrap();
    let objects = stimulus_objects(&stim, &bundle.legend, &bundle.spec).unwrap();
    let env = Arc::new(GroundedEnvironment::new(&bundle.spec, &objects, stim.grid).unwrap());
    let s0 = FrameCodec::new(&env, &bundle.legend).decode(&stim, &bundle.init_facts).unwrap().states.remove(0);
    (env, s0)
}

pub fn dkg_gems(variant: &str, gems: &[&str], rows: &[&str]) -> DomainBundle {
    use invplan::domains::{build_dkg_with_gems, DkgRule, DkgVariant};
    let v = match variant {
        "dkg-single" => DkgVariant::new(DkgRule::Single),
        "dkg-double" => DkgVariant::new(DkgRule::Double),
        "dkg-reuse" => DkgVariant::new(DkgRule::Reuse),
        _ => DkgVariant::inverse(&[("red", "blue"), ("blue", "red")]),
    };
    build_dkg_with_gems(&v, &["red", "blue"], gems, grid_of(rows)).unwrap()
}

/// Random DKG map with gems A and B, the player and up to one key and door
/// per colour. Some maps leave a gem unreachable.
pub fn random_map(seed: u64, rows: usize, cols: usize) -> Vec<String> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<String> = (0..rows * cols)
        .map(|_| if rng.random_bool(0.2) { "#".to_string() } else { ".".to_string() })
        .collect();
    let mut order: Vec<usize> = (0..rows * cols).collect();
    order.shuffle(&mut rng);
    let mut items = vec!["@", "A", "B"];
    for extra in ["k_red", "d_red", "k_blue", "d_blue"] {
        if rng.random_bool(0.6) {
            items.push(extra);
        }
    }
    for (item, &cell) in items.iter().zip(&order) {
        cells[cell] = item.to_string();
    }
    cells.chunks(cols).map(|r| r.join(" ")).collect()
}
