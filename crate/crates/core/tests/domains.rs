mod common;

use common::*;
use invplan::agent::config::QueryKind;
use invplan::domains::{build_astronaut_with, build_foodtruck, build_multiagent_dkg, AstronautOptions, DomainBundle, MultiAgentOptions};
use invplan::inference::{Dimension, PosteriorTable};
use invplan::oracle::{DEFAULT_ORACLE_HYPOTHESIS_CAP, DEFAULT_STATE_CAP};
use invplan::pipeline::{filter_trace, oracle_divergence, Prepared};
use invplan::stimulus::StimulusError;

fn has(p: &Prepared, s: usize, agent: &str, item: &str) -> bool {
    let (a, i) = (p.env.object_id(agent).unwrap(), p.env.object_id(item).unwrap());
    p.states[s].bit(p.env.pred_slot("has", &[a, i]).unwrap())
}

fn locked(p: &Prepared, s: usize, door: &str) -> bool {
    let d = p.env.object_id(door).unwrap();
    p.states[s].bit(p.env.pred_slot("locked", &[d]).unwrap())
}

fn door_cell(p: &Prepared, s: usize, row: i64, col: i64) -> bool {
    p.states[s].bit(p.env.cell_bit("doors", row, col).unwrap())
}

#[test]
fn single_key_is_spent_on_its_door() {
    let rows = ["A d_red . B", ". @ k_red ."];
    let p = roll(&dkg_gems("dkg-single", &["A", "B"], &rows), &rows, &["(pickup player key_2_3)", "(unlock player key_2_3 door_1_2 red)"]);
    assert!(has(&p, 1, "player", "key_2_3"));
    assert!(!has(&p, 2, "player", "key_2_3"));
    assert!(locked(&p, 1, "door_1_2") && !locked(&p, 2, "door_1_2"));
    assert!(door_cell(&p, 1, 1, 2) && !door_cell(&p, 2, 1, 2));
}

#[test]
fn reused_key_opens_every_door_of_its_colour() {
    let rows = ["A d_blue . d_blue B", ". . @ k_blue ."];
    let acts = [
        "(pickup player key_2_4)",
        "(left player)",
        "(unlock player key_2_4 door_1_2 blue)",
        "(right player)",
        "(right player)",
        "(unlock player key_2_4 door_1_4 blue)",
    ];
    let p = roll(&dkg_gems("dkg-reuse", &["A", "B"], &rows), &rows, &acts);
    assert!(!locked(&p, 6, "door_1_2") && !locked(&p, 6, "door_1_4"));
    assert!(has(&p, 6, "player", "key_2_4"));

    // the same sequence fails under the single rule at the second door
    let b = dkg_gems("dkg-single", &["A", "B"], &rows);
    let err = invplan::pipeline::rollout_stimulus(&b, "t", &rows, &acts).unwrap_err();
    assert_eq!(err.stage, "rollout");
}

#[test]
fn double_rule_needs_two_keys() {
    let rows = ["A d_red . B", ". @ k_red k_red"];
    let b = dkg_gems("dkg-double", &["A", "B"], &rows);
    let (env, s) = ground(&b, &rows);
    let one = env.apply(&s, action(&env, "(pickup player key_2_3)")).unwrap();
    assert!(!env.valid_ground_actions(&one).iter().any(|a| a.schema == "unlock"));
    let two = env
        .apply(&env.apply(&one, action(&env, "(right player)")).unwrap(), action(&env, "(pickup player key_2_4)"))
        .unwrap();
    let back = env.apply(&two, action(&env, "(left player)")).unwrap();
    let unlock = env.valid_ground_actions(&back).into_iter().find(|a| a.schema == "unlock").map(|a| a.to_string());
    assert_eq!(unlock.as_deref(), Some("(unlock player key_2_3 key_2_4 door_1_2 red)"));
}

#[test]
fn inverse_keys_open_the_other_colour() {
    let rows = ["A d_blue . B", ". @ k_red ."];
    let p = roll(&dkg_gems("dkg-inverse", &["A", "B"], &rows), &rows, &["(pickup player key_2_3)", "(unlock player key_2_3 door_1_2 red blue)"]);
    assert!(!locked(&p, 2, "door_1_2"));
}

const TEAM: [&str; 5] = ["A . . . .", ". . P . .", "# # # d_red #", "B . . . k_red", ". . H . ."];

fn team(acts: &[&str]) -> Prepared {
    let opts = MultiAgentOptions {
        gems: vec!["A".into(), "B".into()],
        ..MultiAgentOptions::default()
    };
    roll(&build_multiagent_dkg(grid_of(&TEAM), &opts).unwrap(), &TEAM, acts)
}

#[test]
fn helper_heading_for_the_key_raises_the_gem_behind_the_door() {
    let toward = team(&["(right principal)", "(right helper)"]);
    let away = team(&["(right principal)", "(left helper)"]);
    let p_b = |p: &Prepared| PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap().marginal(&p.model, Dimension::Goal).unwrap()[1];
    assert!(p_b(&toward) > p_b(&away) + 0.05, "{} vs {}", p_b(&toward), p_b(&away));
    for p in [&toward, &away] {
        let d = oracle_divergence(p, &filter_trace(p).unwrap(), DEFAULT_STATE_CAP, DEFAULT_ORACLE_HYPOTHESIS_CAP).unwrap();
        assert!(d.max <= 1e-9);
    }
}

#[test]
fn team_turn_outside_zero_one_is_rejected() {
    let opts = MultiAgentOptions {
        gems: vec!["A".into(), "B".into()],
        ..MultiAgentOptions::default()
    };
    let b = build_multiagent_dkg(grid_of(&TEAM), &opts).unwrap();
    let mut stim = invplan::pipeline::rollout_stimulus(&b, "t", &TEAM, &["(right principal)"]).unwrap();
    stim.frames[1].turn = Some(2);
    let err = invplan::pipeline::prepare(&b, &stim, &Default::default()).unwrap_err();
    assert_eq!(err.stage, "frames");
    assert_eq!(err.message, StimulusError::Turn { frame: 1, value: 2 }.to_string());
}

#[test]
fn two_trucks_two_spots_give_two_worlds() {
    let p = prepared(&fixtures().join("stimuli/f0.json"));
    assert_eq!(p.model.n_beliefs(), 2);
    let rows = ["S_spotA+T_lebanese @ S_spotB+T_korean"];
    let b = build_foodtruck(grid_of(&rows), &["lebanese", "korean"], &["spotA", "spotB"]).unwrap();
    let p = roll(&b, &rows, &[]);
    let t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    // both spots in view: every belief already knows the layout
    let bs = p.model.belief_space.as_ref().unwrap();
    let truth = bs.true_assignment(&p.env, &p.states[0]).unwrap();
    for b in t.beliefs.iter().flatten() {
        let m = b.assignment_marginal(2);
        assert_eq!(m[truth], 1.0);
        assert_eq!(m[1 - truth], 0.0);
    }
}

#[test]
fn turning_back_from_the_seen_truck_reveals_the_wanted_one() {
    let p = prepared(&fixtures().join("stimuli/f2.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let a = t.answer_all(&p.model).unwrap();
    let goal = a.iter().find(|q| q.kind == QueryKind::Goal).unwrap();
    let korean = goal.labels.iter().position(|l| l.contains("korean")).unwrap();
    assert!(goal.ratings[korean] > 0.9, "{goal:?}");
    let belief = a.iter().find(|q| q.kind == QueryKind::Belief).unwrap();
    let wrong = belief.labels.iter().position(|l| l.starts_with("korean@spotA")).unwrap();
    assert!(belief.ratings[wrong] > 0.9, "{belief:?}");
}

fn astronaut(rows: &[&str]) -> DomainBundle {
    let opts = AstronautOptions {
        terrain_costs: vec![1.0, 4.0],
        package_rewards: vec![1.0, 10.0],
        pickup_cost: 1.0,
    };
    build_astronaut_with(grid_of(rows), &["sand", "rock"], &["pkgA", "pkgB"], &opts).unwrap()
}

fn cost_of(p: &Prepared, t: &PosteriorTable, action: &str) -> f64 {
    let c = t.answer(&p.model, QueryKind::Cost).unwrap();
    c.ratings[c.labels.iter().position(|l| l == action).unwrap()]
}

#[test]
fn detour_makes_the_avoided_terrain_look_costly() {
    let p = prepared(&fixtures().join("stimuli/a2.json"));
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    assert!(cost_of(&p, &t, "rock-up") > cost_of(&p, &t, "sand-up"));
}

#[test]
fn skipped_neighbouring_package_gets_low_reward() {
    let rows = ["s s s s s", "s P_pkgA+s @+s s P_pkgB+s"];
    let p = roll(&astronaut(&rows), &rows, &["(sand-right astronaut)", "(sand-right astronaut)", "(pickup astronaut pkgB)"]);
    let t = PosteriorTable::run(&p.model, &p.states, &p.actions).unwrap();
    let r = t.answer(&p.model, QueryKind::Reward).unwrap();
    assert_eq!(r.labels, ["pkgA", "pkgB"]);
    assert!(r.ratings[0] < r.ratings[1], "{r:?}");
}

#[test]
fn untouched_terrains_keep_equal_costs() {
    let rows = ["P_pkgA+s s @+s r P_pkgB+r"];
    let p = roll(&astronaut(&rows), &rows, &[]);
    let t = PosteriorTable::init(&p.model, &p.states[0]).unwrap();
    assert!(close(cost_of(&p, &t, "sand-left"), cost_of(&p, &t, "rock-left"), 1e-12));
}
