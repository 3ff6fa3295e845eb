mod common;

use common::*;
use invplan::domains::DomainBundle;
use invplan::pddl::{parse_domain, print_domain, GroundedEnvironment};
use invplan::stimulus::{stimulus_objects, Decoded, FrameCodec, HumanDataTable, Stimulus, StimulusError};
use invplan::world::StepAction;
use proptest::prelude::*;
use serde_json::json;

fn stim(domain: &str, frames: &[&[&str]]) -> Stimulus {
    let rows = frames[0].len();
    let cols = frames[0][0].split_whitespace().count();
    let v = json!({
        "version": 1,
        "id": "s",
        "domain": domain,
        "grid_size": [rows, cols],
        "frames": frames,
    });
    Stimulus::from_json(&v.to_string()).unwrap()
}

fn decode(bundle: &DomainBundle, s: &Stimulus) -> Result<(GroundedEnvironment, Decoded), StimulusError> {
    let objects = stimulus_objects(s, &bundle.legend, &bundle.spec)?;
    let env = GroundedEnvironment::new(&bundle.spec, &objects, s.grid).unwrap();
    let d = FrameCodec::new(&env, &bundle.legend).decode(s, &bundle.init_facts)?;
    Ok((env, d))
}

#[test]
fn single_frame_has_no_actions() {
    let rows = ["A . @"];
    let (_, d) = decode(&dkg_gems("dkg-single", &["A"], &rows), &stim("dkg-single", &[&rows])).unwrap();
    assert_eq!(d.states.len(), 1);
    assert!(d.actions.is_empty());
}

#[test]
fn paired_maze_uses_the_dkg_legend() {
    let p = fixtures().join("paired/single.json");
    let (b, s) = load(&p);
    assert_eq!(s.frames.len(), 5);
    for sym in ["#", "k_blue", "d_blue", "A", "B", "C", "D", "@"] {
        assert!(b.legend.symbols.contains_key(sym), "{sym}");
    }
    let (_, d) = decode(&b, &s).unwrap();
    assert!(d.actions.iter().all(|a| matches!(a, StepAction::Ground(_))));
}

#[test]
fn unknown_symbol_names_its_cell() {
    let rows = ["A . @", ". zz ."];
    let err = decode(&dkg_gems("dkg-single", &["A"], &rows), &stim("dkg-single", &[&rows])).unwrap_err();
    match err {
        StimulusError::UnknownSymbol { row, col, symbol, .. } => {
            assert_eq!((row, col, symbol.as_str()), (2, 2, "zz"));
        }
        e => panic!("{e}"),
    }
}

#[test]
fn vanished_adjacent_key_was_picked_up() {
    let f0 = ["A @ k_red"];
    let f1 = ["A @ ."];
    let b = dkg_gems("dkg-single", &["A"], &f0);
    let (env, d) = decode(&b, &stim("dkg-single", &[&f0, &f1])).unwrap();
    let StepAction::Ground(a) = d.actions[0] else { panic!() };
    assert_eq!(env.actions()[a].to_string(), "(pickup player key_1_3)");
    let has = env
        .pred_slot("has", &[env.object_id("player").unwrap(), env.object_id("key_1_3").unwrap()])
        .unwrap();
    assert!(d.states[1].bit(has));
}

#[test]
fn vanished_distant_key_is_inconsistent() {
    let f0 = ["@ A . k_red"];
    let f1 = ["@ A . ."];
    let b = dkg_gems("dkg-single", &["A"], &f0);
    let err = decode(&b, &stim("dkg-single", &[&f0, &f1])).unwrap_err();
    assert!(matches!(err, StimulusError::Inconsistent { frame: 1, .. }), "{err}");
}

#[test]
fn repeated_frame_is_a_no_op() {
    let f0 = ["A . @"];
    let (_, d) = decode(&dkg_gems("dkg-single", &["A"], &f0), &stim("dkg-single", &[&f0, &f0])).unwrap();
    assert_eq!(d.actions, [StepAction::NoOp]);
    assert_eq!(d.states[0], d.states[1]);
}

#[test]
fn teleport_is_reported_at_its_frame() {
    let f0 = ["A . . . @"];
    let f1 = ["A . . @ ."];
    let f2 = ["A @ . . ."];
    let b = dkg_gems("dkg-single", &["A"], &f0);
    let err = decode(&b, &stim("dkg-single", &[&f0, &f1, &f2])).unwrap_err();
    assert!(matches!(err, StimulusError::Inconsistent { frame: 2, .. }), "{err}");
}

#[test]
fn human_csv_loads_and_checks() {
    let t = HumanDataTable::from_csv("stimulus_id,question_id,mean,std\ns1,goal:A,0.25,0.1\ns1,goal:B,0.75,0.1\ns2,goal:A,0.4,\n").unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(!t.normalized);
    assert_eq!(t.get("s2", "goal:A").unwrap().std, None);

    let t = HumanDataTable::from_csv("stimulus_id,question_id,mean\ns1,goal:A,0.25\ns1,goal:B,0.75\n").unwrap();
    assert!(t.normalized);

    let dup = HumanDataTable::from_csv("stimulus_id,question_id,mean\ns1,goal:A,0.25\ns1,goal:A,0.75\n");
    assert!(matches!(dup, Err(StimulusError::Schema(m)) if m.contains("duplicate")));
    assert!(HumanDataTable::from_csv("stimulus_id,mean\ns1,0.5\n").is_err());
}

fn all_stimulus_files() -> Vec<std::path::PathBuf> {
    let mut v = json_files(&fixtures().join("stimuli"));
    v.extend(json_files(&fixtures().join("paired")));
    v
}

#[test]
fn every_fixture_survives_json_and_frame_round_trips() {
    let files = all_stimulus_files();
    assert!(files.len() >= 20);
    for path in files {
        let (b, s) = load(&path);
        let again = Stimulus::from_json(&s.to_json().to_string()).unwrap();
        assert_eq!(again, s, "{}", path.display());

        let objects = stimulus_objects(&s, &b.legend, &b.spec).unwrap();
        let env = GroundedEnvironment::new(&b.spec, &objects, s.grid).unwrap();
        let mut codec = FrameCodec::new(&env, &b.legend);
        let d = codec.decode(&s, &b.init_facts).unwrap();
        let multi = env.is_multi_agent();
        for (t, st) in d.states.iter().enumerate() {
            let drawn = codec.render(st, multi);
            assert_eq!(drawn.cells, s.frames[t].cells, "{} frame {t}", path.display());
        }
    }
}

fn pddl_files() -> Vec<std::path::PathBuf> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut v = vec![
        root.join("assets/reference/domain_example.pddl"),
        fixtures().join("synthesis/ballbox.pddl"),
    ];
    for e in std::fs::read_dir(fixtures().join("bundles")).unwrap() {
        v.push(e.unwrap().path().join("domain.pddl"));
    }
    v
}

#[test]
fn every_domain_file_survives_print_and_parse() {
    for path in pddl_files() {
        let spec = parse_domain(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let printed = print_domain(&spec);
        let again = parse_domain(&printed).unwrap();
        assert_eq!(again, spec, "{}", path.display());
        assert_eq!(print_domain(&again), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_walks_render_back_to_their_frames(seed in any::<u64>(), steps in 0usize..8) {
        use rand::{Rng, SeedableRng};
        let rows = random_map(seed, 4, 5);
        let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
        let b = dkg_gems("dkg-reuse", &["A", "B"], &rows);
        let (env, mut s) = ground(&b, &rows);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        for _ in 0..steps {
            let valid = env.valid_actions(&s);
            if valid.is_empty() {
                break;
            }
            let a = valid[rng.random_range(0..valid.len())];
            names.push(env.actions()[a].to_string());
            s = env.apply(&s, a).unwrap();
        }
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let st = invplan::pipeline::rollout_stimulus(&b, "r", &rows, &names).unwrap();
        let again = Stimulus::from_json(&st.to_json().to_string()).unwrap();
        prop_assert_eq!(&again, &st);
        let (_, d) = decode(&b, &again).unwrap();
        prop_assert_eq!(d.states.last().unwrap(), &s);
    }
}
