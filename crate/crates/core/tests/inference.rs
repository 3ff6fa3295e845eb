mod common;

use common::*;
use invplan::agent::config::QueryKind;
use invplan::agent::Hypothesis;
use invplan::inference::{Dimension, PosteriorTable};
use invplan::oracle::{exact_cost_to_go, exact_posterior, ReachableGraph, DEFAULT_STATE_CAP};
use invplan::pddl::{parse_domain, GridDims, GroundedEnvironment, ObjectSet};
use invplan::pipeline::{filter_trace, oracle_divergence, table_divergence, Overrides};
use invplan::oracle::DEFAULT_ORACLE_HYPOTHESIS_CAP;

fn goal_marginal(t: &PosteriorTable, p: &invplan::pipeline::Prepared) -> Vec<f64> {
    t.marginal(&p.model, Dimension::Goal).unwrap()
}

#[test]
fn four_goals_start_uniform() {
    let rows = ["A . @ . B", ". . . . .", "C . . . D"];
    let p = roll(&dkg("dkg-single", &rows), &rows, &[]);
    let t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    assert_eq!(t.hypotheses.len(), 4);
    assert_eq!(goal_marginal(&t, &p), [0.25; 4]);
    let q = t.answer(&p.model, QueryKind::Goal).unwrap();
    assert_eq!(q.labels, ["(has player gemA)", "(has player gemB)", "(has player gemC)", "(has player gemD)"]);
    assert!(close(q.ratings.iter().sum(), 1.0, 1e-12));
}

#[test]
fn action_optimal_for_everyone_changes_nothing() {
    let rows = ["@ . . A B", ". . . . ."];
    let b = dkg_gems("dkg-single", &["A", "B"], &rows);
    let p = roll_with(&b, &rows, &["(right player)"], &Overrides { beta: Some(100.0), ..Overrides::default() });
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let m = goal_marginal(&t, &p);
    assert!(close(m[0], 0.5, 1e-12) && close(m[1], 0.5, 1e-12), "{m:?}");
}

#[test]
fn action_optimal_for_one_goal_takes_the_mass() {
    let rows = ["A . . @ . . B"];
    let b = dkg_gems("dkg-single", &["A", "B"], &rows);
    let p = roll_with(&b, &rows, &["(left player)"], &Overrides { beta: Some(100.0), ..Overrides::default() });
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    assert!(goal_marginal(&t, &p)[0] > 1.0 - 1e-12);
}

#[test]
fn using_the_only_key_rules_out_the_other_door() {
    let rows = ["C d_red . d_red D", "# # . # #", "A . @ k_red B"];
    let acts = ["(pickup player key_3_4)", "(up player)", "(up player)", "(unlock player key_3_4 door_1_2 red)"];
    let p = roll(&dkg("dkg-single", &rows), &rows, &acts);
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let m = goal_marginal(&t, &p);
    assert_eq!(m[3], 0.0, "{m:?}");
    assert!(m[2] > 0.5, "{m:?}");
    assert_eq!(t.eliminated(), 1);
}

#[test]
fn paired_maze_single_favours_gem_b() {
    let p = prepared(&fixtures().join("paired/single.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let m = goal_marginal(&t, &p);
    assert!(m[1] > m[0], "{m:?}");
    assert!(m.iter().all(|&x| x <= m[1]), "{m:?}");
}

#[test]
fn single_frame_report_is_the_prior() {
    let p = prepared(&fixtures().join("stimuli/a1.json"));
    let t = PosteriorTable::run(&p.model, &p.states[..1], &[]).unwrap();
    let prior = p.model.initial_hypotheses(&p.states[0], &p.model.initial_beliefs(&p.states[0]).unwrap()).unwrap();
    for (w, (_, lp)) in t.log_weights.iter().zip(&prior) {
        assert_eq!(w, lp);
    }
}

#[test]
fn expectation_of_constant_and_of_cost() {
    let p = prepared(&fixtures().join("stimuli/a2.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    assert!(close(t.expectation(|_| 1.0).unwrap(), 1.0, 1e-12));

    // hand-set posterior {0.75, 0.25} over white-cost profiles {1, 4}
    let mut t = t.clone();
    t.hypotheses = vec![
        Hypothesis { goal: 0, reward: None, cost: 0, belief: None },
        Hypothesis { goal: 0, reward: None, cost: 1, belief: None },
    ];
    t.log_weights = vec![0.75f64.ln(), 0.25f64.ln()];
    assert!(close(t.expectation(|h| [1.0, 4.0][h.cost]).unwrap(), 1.75, 1e-12));
}

#[test]
fn queries_cover_belief_goal_and_terrain_cost() {
    let p = prepared(&fixtures().join("stimuli/f2.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let a = t.answer_all(&p.model).unwrap();
    assert_eq!(a.iter().map(|q| q.kind).collect::<Vec<_>>(), [QueryKind::Belief, QueryKind::Goal]);
    assert_eq!(a[0].ratings.len(), 2);

    let p = prepared(&fixtures().join("stimuli/a1.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let c = t.answer(&p.model, QueryKind::Cost).unwrap();
    assert_eq!(c.labels.len(), p.env.spec.actions.len());
    assert!(c.labels.iter().any(|l| l == "rock-up") && c.labels.iter().any(|l| l == "sand-up"));
}

#[test]
fn unconfigured_query_is_an_error() {
    let rows = ["A . @ . B"];
    let p = roll(&dkg_gems("dkg-single", &["A", "B"], &rows), &rows, &[]);
    let t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    assert!(t.answer(&p.model, QueryKind::Belief).is_err());
}

#[test]
fn oracle_two_state_chain() {
    let spec = parse_domain(
        "(define (domain chain) (:requirements :typing) (:types agent) (:constants me - agent)
           (:predicates (done))
           (:action go :parameters () :precondition (not (done)) :effect (done)))",
    )
    .unwrap();
    let env = GroundedEnvironment::new(&spec, &ObjectSet::new(), GridDims::new(1, 1)).unwrap();
    let s0 = env.blank_state();
    let graph = ReachableGraph::build(&env, std::slice::from_ref(&s0), 10).unwrap();
    assert_eq!(graph.len(), 2);
    let goal = env.compile_text("(done)").unwrap();
    let v = exact_cost_to_go(&env, &graph, &goal, &[3_000_000]);
    assert_eq!(v[graph.id(&s0).unwrap()], Some(3_000_000));
    let done = graph.states.iter().position(|s| *s != s0).unwrap();
    assert_eq!(v[done], Some(0));
}

#[test]
fn oracle_zero_actions_is_the_prior_and_one_hypothesis_is_certain() {
    let p = prepared(&fixtures().join("stimuli/m1-single.json"));
    let exact = exact_posterior(&p.model, &p.states[..1], &[]).unwrap();
    let init = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    assert!(table_divergence(&p.model, &exact, &init).unwrap() < 1e-15);

    let rows = ["A . . @ . ."];
    let p = roll(&dkg_gems("dkg-single", &["A"], &rows), &rows, &["(right player)", "(right player)"]);
    let exact = exact_posterior(&p.model, &p.states, &p.actions).unwrap();
    assert_eq!(exact.probabilities().unwrap(), [1.0]);
}

#[test]
fn filter_matches_oracle_on_every_fixture() {
    let files = json_files(&fixtures().join("stimuli"));
    assert!(files.len() >= 20);
    for f in files {
        let p = prepared(&f);
        let tables = filter_trace(&p).unwrap();
        let d = oracle_divergence(&p, &tables, DEFAULT_STATE_CAP, DEFAULT_ORACLE_HYPOTHESIS_CAP).unwrap();
        assert!(d.max <= 1e-9, "{}: {}", f.display(), d.max);
    }
}
