mod common;

use common::*;
use invplan::agent::belief::{Belief, Particle};
use invplan::agent::config::{AgentConfig, ConfigError, QueryKind};
use invplan::agent::{boltzmann, Hypothesis};
use invplan::inference::PosteriorTable;
use invplan::oracle::{exact_cost_to_go, ReachableGraph, DEFAULT_STATE_CAP};
use invplan::pddl::{GridDims, ObjectSet, ObjectTag};
use invplan::pipeline::Overrides;
use invplan::planner::from_units;
use invplan::world::StepAction;
use proptest::prelude::*;

const CONFIG_EXAMPLE: &str = include_str!("../assets/reference/config_example.json");
const BALLBOX: &str = include_str!("../../../fixtures/synthesis/ballbox.pddl");

fn field_error(text: &str) -> String {
    match AgentConfig::from_json(text) {
        Err(ConfigError::Field { field, .. }) => field,
        other => panic!("expected a field error, got {other:?}"),
    }
}

#[test]
fn reference_config_parses() {
    let cfg = AgentConfig::from_json(CONFIG_EXAMPLE).unwrap();
    assert_eq!(cfg.grid_size, (3, 4));
    assert_eq!(cfg.goals.len(), 3);
    assert_eq!(cfg.costs.len(), 3);
    assert_eq!(cfg.query, [QueryKind::Belief, QueryKind::Goal, QueryKind::Cost]);
    assert_eq!(cfg.costs[0].get("right-white"), Some(4.0));
    assert_eq!(cfg.beta, 1.0);
}

#[test]
fn config_rejects_non_positive_numbers() {
    let zero_cost = CONFIG_EXAMPLE.replacen("\"pickup\": 5", "\"pickup\": 0", 1);
    assert!(field_error(&zero_cost).starts_with("costs"));
    let cold = CONFIG_EXAMPLE.replacen("\"grid_size\"", "\"temperature\": \"-1\", \"grid_size\"", 1);
    assert_eq!(field_error(&cold), "temperature");
    let empty = CONFIG_EXAMPLE.replacen("\"goals\": [", "\"goals\": [], \"unused\": [", 1);
    assert_eq!(field_error(&empty), "goals");
}

/// Ball-in-box room: baseball hidden in box1, dark cells (black terrain)
/// block the view.
///
/// ```text
/// box1+baseball tennisball .          box2
/// dark          dark       dark       .
/// human         .          basketball box3
/// ```
fn ballbox(config: &str) -> (std::sync::Arc<invplan::pddl::GroundedEnvironment>, invplan::world::WorldState, invplan::agent::AgentModel) {
    let objects = ObjectSet::new()
        .with("box1", "box", ObjectTag::GenericObjects)
        .with("box2", "box", ObjectTag::GenericObjects)
        .with("box3", "box", ObjectTag::GenericObjects);
    let mut facts = String::new();
    for (o, x, y) in [
        ("box1", 1, 1),
        ("box2", 4, 1),
        ("box3", 4, 3),
        ("human", 1, 3),
        ("baseball", 1, 1),
        ("tennisball", 2, 1),
        ("basketball", 3, 3),
    ] {
        facts.push_str(&format!("(= (xloc {o}) {x}) (= (yloc {o}) {y}) "));
    }
    for r in 1..=3 {
        for c in 1..=4 {
            let m = if r == 2 && c <= 3 { "blackterrain" } else { "whitespace" };
            facts.push_str(&format!("(= (get-index {m} {r} {c}) true) "));
        }
    }
    model_from(BALLBOX, &objects, GridDims::new(3, 4), &facts, config)
}

#[test]
fn reference_config_yields_27_hypotheses() {
    let (_, s0, model) = ballbox(CONFIG_EXAMPLE);
    assert_eq!(model.n_beliefs(), 3);
    assert_eq!(model.hypotheses().len(), 27);
    let t = PosteriorTable::init(&model, &s0).unwrap();
    let p = t.probabilities().unwrap();
    assert!(p.iter().all(|x| close(*x, 1.0 / 27.0, 1e-12)));
}

#[test]
fn visibility_follows_dark_cells() {
    let (env, s0, model) = ballbox(CONFIG_EXAMPLE);
    let bs = model.belief_space.as_ref().unwrap();
    let names: Vec<&str> = bs.containers.iter().map(|&c| env.object_name(c)).collect();
    assert_eq!(names, ["box1", "box2", "box3"]);
    // box3 is down an open row; box1 and box2 are behind dark cells
    assert_eq!(bs.visible_containers(&env, &s0), [false, false, true]);
    let up = env.apply(&s0, action(&env, "(up-white human)")).unwrap();
    assert_eq!(bs.visible_containers(&env, &up), [true, false, false]);
}

#[test]
fn looking_into_a_box_collapses_belief() {
    let (env, s0, model) = ballbox(CONFIG_EXAMPLE);
    let up = action(&env, "(up-white human)");
    let s1 = env.apply(&s0, up).unwrap();
    let mut t = PosteriorTable::init(&model, &s0).unwrap();
    // box3 was seen empty, so every initial belief already excludes it
    for b in t.beliefs.iter().flatten() {
        assert_eq!(b.assignment_marginal(3)[2], 0.0);
    }
    t.step(&model, &s0, &StepAction::Ground(up), &s1).unwrap();
    for b in t.beliefs.iter().flatten() {
        assert_eq!(b.assignment_marginal(3), [1.0, 0.0, 0.0]);
    }
}

#[test]
fn uninformative_step_keeps_belief() {
    let (env, s0, model) = ballbox(CONFIG_EXAMPLE);
    let right = action(&env, "(right-white human)");
    let s1 = env.apply(&s0, right).unwrap();
    let obs = model.observe(&s1);
    let bs = model.belief_space.as_ref().unwrap();
    for b in model.initial_beliefs(&s0).unwrap() {
        let next = bs.update(&env, &b, &StepAction::Ground(right), &obs, 1).unwrap();
        assert_eq!(next.assignment_marginal(3), b.assignment_marginal(3));
    }
}

#[test]
fn full_observability_sees_everything() {
    let rows = ["A . @ . B"];
    let p = roll(&dkg_gems("dkg-single", &["A", "B"], &rows), &rows, &[]);
    let obs = p.model.observe(&p.states[0]);
    assert_eq!(obs.state, p.states[0]);
    assert!(p.model.belief_space.is_none());
}

#[test]
fn seeing_the_empty_spot_moves_all_mass() {
    let p = prepared(&fixtures().join("stimuli/e1.json"));
    let mut t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    let labels = p.model.belief_space.as_ref().unwrap().labels(&p.env);
    assert_eq!(labels, ["korean@spotA", "korean@spotB"]);
    for b in t.beliefs.iter().flatten() {
        assert_eq!(b.assignment_marginal(2), [0.5, 0.5]);
    }
    t.step(&p.model, &p.states[0], &p.actions[0], &p.states[1]).unwrap();
    for b in t.beliefs.iter().flatten() {
        assert_eq!(b.assignment_marginal(2), [0.0, 1.0]);
    }
}

#[test]
fn uniform_goal_prior_without_rewards() {
    let rows = ["A . @ . B", ". . . . .", "C . . . D"];
    let p = roll(&dkg("dkg-single", &rows), &rows, &[]);
    let prior = p.model.initial_hypotheses(&p.states[0], &[]).unwrap();
    assert_eq!(prior.len(), 4);
    assert!(prior.iter().all(|(_, lp)| close(*lp, (0.25f64).ln(), 1e-12)));
}

fn reward_prior(rows: &[&str], rewards: &str) -> Vec<f64> {
    let b = dkg_gems("dkg-single", &["A", "B"], rows);
    let mut v = b.config_for(grid_of(rows)).to_json();
    v["rewards"] = serde_json::from_str(rewards).unwrap();
    let cfg = AgentConfig::from_value(&v).unwrap();
    let p = roll_with(&b, rows, &[], &Overrides { config: Some(cfg), ..Overrides::default() });
    let t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    t.marginal(&p.model, invplan::inference::Dimension::Goal).unwrap()
}

#[test]
fn reward_prior_is_softmax_of_net_utility() {
    // path costs 2 and 6 (moves plus the pickup)
    let p = reward_prior(&["A . @ . . . . . B"], "[[10, 10]]");
    let e = (8f64.exp(), 4f64.exp());
    assert!(close(p[0], e.0 / (e.0 + e.1), 1e-12));
    assert!(close(p[0], 0.982, 1e-3) && close(p[1], 0.018, 1e-3));
    let p = reward_prior(&["A . . @ . . B"], "[[10, 10]]");
    assert!(close(p[0], p[1], 1e-15));
}

#[test]
fn equal_q_splits_evenly_and_large_beta_concentrates() {
    let rows = ["@ . .", ". . .", ". . A"];
    let p = roll(&dkg_gems("dkg-single", &["A"], &rows), &rows, &[]);
    let h = p.model.hypotheses()[0];
    let (acts, probs, degenerate) = p.model.action_distribution(&h, &p.states[0], None).unwrap();
    assert!(!degenerate);
    assert_eq!(acts.len(), 2);
    assert_eq!(probs, [0.5, 0.5]);

    let rows = ["A . . @ . . B"];
    let p = roll_with(&dkg_gems("dkg-single", &["A", "B"], &rows), &rows, &[], &Overrides { beta: Some(100.0), ..Overrides::default() });
    let (acts, probs, _) = p.model.action_distribution(&p.model.hypotheses()[0], &p.states[0], None).unwrap();
    let left = acts.iter().position(|a| *a == StepAction::Ground(action(&p.env, "(left player)"))).unwrap();
    assert!(probs[left] >= 0.999);
}

#[test]
fn hand_softmax_of_two_q_values() {
    let (p, _) = boltzmann(1.0, &[-1.0, -3.0]);
    let z = (-1f64).exp() + (-3f64).exp();
    assert!(close(p[0], (-1f64).exp() / z, 1e-15));
    assert!(close(p[0], 0.881, 1e-3) && close(p[1], 0.119, 1e-3));
}

#[test]
fn belief_q_is_the_particle_average() {
    let rows = ["A . @ . . . B"];
    let p = roll(&dkg_gems("dkg-single", &["A", "B"], &rows), &rows, &[]);
    let h = Hypothesis { goal: 0, reward: None, cost: 0, belief: None };
    let s = &p.states[0];
    let left = action(&p.env, "(left player)");
    let single = Belief {
        particles: vec![Particle { assignment: 0, state: s.clone(), weight: 1.0 }],
    };
    let direct = p.model.planner.q_value(s, left, 0, 0, 0.0).unwrap().unwrap();
    assert_eq!(p.model.belief_q(&h, &single, Some(left), 0.0).unwrap(), direct);

    // left then pickup: 2 in total from x = 3, 4 from x = 5
    let far = p.env.apply(&p.env.apply(s, action(&p.env, "(right player)")).unwrap(), action(&p.env, "(right player)")).unwrap();
    let pair = Belief {
        particles: vec![
            Particle { assignment: 0, state: s.clone(), weight: 0.5 },
            Particle { assignment: 1, state: far, weight: 0.5 },
        ],
    };
    assert_eq!(direct, -2.0);
    assert_eq!(p.model.belief_q(&h, &pair, Some(left), 0.0).unwrap(), -3.0);
}

#[test]
fn food_truck_belief_q_matches_enumerated_worlds() {
    let p = prepared(&fixtures().join("stimuli/f0.json"));
    let beliefs = p.model.initial_beliefs(&p.states[0]).unwrap();
    let up = action(&p.env, "(up student)");
    for h in p.model.hypotheses() {
        let b = &beliefs[h.belief.unwrap()];
        let (mut num, mut den) = (0.0, 0.0);
        for part in &b.particles {
            let graph = ReachableGraph::build(&p.env, std::slice::from_ref(&part.state), DEFAULT_STATE_CAP).unwrap();
            let ct = p.model.planner.cost_table(h.cost);
            let v = exact_cost_to_go(&p.env, &graph, &p.model.planner.goal(h.goal).cond, &ct.per_action);
            let next = p.env.apply(&part.state, up).unwrap();
            if let Some(rest) = v[graph.id(&next).unwrap()] {
                num -= part.weight * from_units(ct.per_action[up] + rest);
                den += part.weight;
            }
        }
        let q = p.model.belief_q(&h, b, Some(up), 0.0).unwrap();
        assert!(close(q, num / den, 1e-12), "{h:?}: {q} vs {}", num / den);
    }
}

proptest! {
    // probabilities are a distribution and respect Q ordering
    #[test]
    fn boltzmann_is_a_monotone_distribution(q in prop::collection::vec(-50.0f64..0.0, 1..8), beta in 0.01f64..20.0) {
        let (p, d) = boltzmann(beta, &q);
        prop_assert!(!d);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..q.len() {
            for j in 0..q.len() {
                if q[i] > q[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }
}
