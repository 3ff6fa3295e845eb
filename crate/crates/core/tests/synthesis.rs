mod common;

use std::collections::BTreeSet;

use common::fixtures;
use invplan::synthesis::*;

const DOMAIN_EXAMPLE: &str = include_str!("../assets/reference/domain_example.pddl");
const CONFIG_EXAMPLE: &str = include_str!("../assets/reference/config_example.json");
const CELL_EXAMPLE: &str = include_str!("../assets/reference/cell_example.json");
const CELL_VERBATIM: &str = include_str!("../assets/reference/cell_verbatim.json");

fn task(name: &str) -> SynthesisTask {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("synthesis").join(name)).unwrap()).unwrap()
}

fn ballbox() -> String {
    std::fs::read_to_string(fixtures().join("synthesis/ballbox.pddl")).unwrap()
}

fn reasons(e: &SynthesisError) -> Vec<RejectReason> {
    e.log().unwrap().reasons()
}

#[test]
fn example_domain_is_accepted_first_time() {
    let t = MockTransport::new().respond(TemplateId::Env, [DOMAIN_EXAMPLE]);
    let d = synthesize_domain(&task("task_example.json"), &t, &SynthesisOptions::default()).unwrap();
    assert_eq!(d.log.len(), 1);
    assert!(d.log.attempts()[0].accepted);
    assert_eq!(d.text, DOMAIN_EXAMPLE);
    assert!(d.log.attempts()[0].prompt.contains("plate"));
}

#[test]
fn malformed_then_valid_takes_two_attempts() {
    let t = MockTransport::new().respond(TemplateId::Env, ["(define (domain broken", DOMAIN_EXAMPLE]);
    let d = synthesize_domain(&task("task_example.json"), &t, &SynthesisOptions::default()).unwrap();
    assert_eq!(d.log.len(), 2);
    assert_eq!(d.log.reasons(), [RejectReason::Syntax]);
    assert_eq!(d.log.attempts()[1].index, 2);
}

#[test]
fn persistent_garbage_exhausts_the_cap() {
    let t = MockTransport::new().always(TemplateId::Env, "(define (domain broken");
    let e = synthesize_domain(&task("task_example.json"), &t, &SynthesisOptions::default()).unwrap_err();
    match &e {
        SynthesisError::CapExhausted { cap, log, .. } => {
            assert_eq!(*cap, DEFAULT_ATTEMPT_CAP);
            assert_eq!(log.len(), 8);
        }
        e => panic!("{e}"),
    }
}

#[test]
fn reference_config_is_accepted_for_the_ball_domain() {
    let task = task("task_ballbox.json");
    let t = MockTransport::new()
        .respond(TemplateId::Env, [ballbox()])
        .respond(TemplateId::Agent, [CONFIG_EXAMPLE]);
    let opts = SynthesisOptions::default();
    let d = synthesize_domain(&task, &t, &opts).unwrap();
    let c = synthesize_agent_config(&task, &d.value, &t, &opts).unwrap();
    assert_eq!(c.value.goals.len(), 3);
    assert_eq!(c.log.len(), 1);
}

#[test]
fn bad_temperature_is_rejected_then_retried() {
    let task = task("task_ballbox.json");
    let spec = invplan::pddl::parse_domain(&ballbox()).unwrap();
    let bad = CONFIG_EXAMPLE.replacen("\"grid_size\"", "\"temperature\": \"-1\",\n    \"grid_size\"", 1);
    let t = MockTransport::new().respond(TemplateId::Agent, [bad, CONFIG_EXAMPLE.to_owned()]);
    let c = synthesize_agent_config(&task, &spec, &t, &SynthesisOptions::default()).unwrap();
    assert_eq!(c.log.reasons(), [RejectReason::Schema]);
    assert!(c.log.attempts()[0].detail.as_deref().unwrap().contains("temperature"));
}

#[test]
fn goal_on_unknown_object_is_a_grounding_failure() {
    let task = task("task_ballbox.json");
    let spec = invplan::pddl::parse_domain(&ballbox()).unwrap();
    let bad = CONFIG_EXAMPLE.replace("(has human tennisball)", "(has human football)");
    let t = MockTransport::new().always(TemplateId::Agent, bad);
    let opts = SynthesisOptions {
        cap: 2,
        ..SynthesisOptions::default()
    };
    let e = synthesize_agent_config(&task, &spec, &t, &opts).unwrap_err();
    assert_eq!(reasons(&e), [RejectReason::Grounding, RejectReason::Grounding]);
}

fn cell_payload() -> CellPayload {
    CellPayload {
        instruction: "Describe the objects in this cell.".into(),
        object_types: task("task_example.json").objects,
        pddl_predicates: "(isShape ?o - object ?s - shape)".into(),
        image: vec![0x89, b'P', b'N', b'G'],
    }
}

#[test]
fn cell_parses_follow_the_output_shape() {
    let t = MockTransport::new().with_vision().respond(TemplateId::Cell, [CELL_EXAMPLE]);
    let c = classify_cell(&cell_payload(), &t, &SynthesisOptions::default()).unwrap();
    assert_eq!(c.value.object_name, ["pin", "baseball"]);
    assert!(c.value.object_pddl_str.contains("$i"));

    let t = MockTransport::new()
        .with_vision()
        .respond(TemplateId::Cell, [r#"{"object_name": [], "object_pddl_str": ""}"#]);
    let c = classify_cell(&cell_payload(), &t, &SynthesisOptions::default()).unwrap();
    assert!(c.value.object_name.is_empty());

    let t = MockTransport::new()
        .with_vision()
        .respond(TemplateId::Cell, [r#"{"object_name": ["pin"]}"#, CELL_VERBATIM]);
    let opts = SynthesisOptions {
        cap: 2,
        ..SynthesisOptions::default()
    };
    let e = classify_cell(&cell_payload(), &t, &opts).unwrap_err();
    assert_eq!(reasons(&e), [RejectReason::Schema, RejectReason::Syntax]);
}

#[test]
fn cells_need_a_vision_transport() {
    let t = MockTransport::new().respond(TemplateId::Cell, [CELL_EXAMPLE]);
    let e = classify_cell(&cell_payload(), &t, &SynthesisOptions::default()).unwrap_err();
    assert!(matches!(e, SynthesisError::NotSupported(_)));
}

/// One scripted response per rejection reason, in order, then a valid one.
fn adversarial_domain_script() -> Vec<String> {
    vec![
        "I would rather describe the world in prose.".into(),
        "(define (domain d) (:requirements :strips".into(),
        "(define (domain d) (:requirements :strips :typing) (:types agent) \
         (:predicates (p ?a - agent)) \
         (:action a :parameters (?x - agent) :precondition (q ?x) :effect (p ?x)))"
            .into(),
        ballbox(),
        DOMAIN_EXAMPLE.into(),
    ]
}

#[test]
fn every_rejection_reason_is_reachable() {
    let task = task("task_example.json");
    let t = MockTransport::new()
        .respond(TemplateId::Env, adversarial_domain_script())
        .respond(TemplateId::Agent, ["{\"grid_size\": [3, 4]}".to_owned(), std::fs::read_to_string(fixtures().join("synthesis/config_example_boy.json")).unwrap()]);
    let opts = SynthesisOptions::default();
    let d = synthesize_domain(&task, &t, &opts).unwrap();
    assert_eq!(
        d.log.reasons(),
        [RejectReason::NoArtifact, RejectReason::Syntax, RejectReason::Validation, RejectReason::Grounding]
    );
    let c = synthesize_agent_config(&task, &d.value, &t, &opts).unwrap();
    let seen: BTreeSet<RejectReason> = d.log.reasons().into_iter().chain(c.log.reasons()).collect();
    assert_eq!(seen, RejectReason::ALL.into_iter().collect());
}

#[test]
fn recorded_runs_replay_byte_for_byte() {
    for (task_file, record_file) in [("task_example.json", "record_example.json"), ("task_ballbox.json", "record_ballbox.json")] {
        let text = std::fs::read_to_string(fixtures().join("synthesis").join(record_file)).unwrap();
        let record = SynthesisRecord::from_json(&text).unwrap();
        let t = ReplayTransport::new(&record);
        let task = task(task_file);
        let opts = SynthesisOptions::default();
        let d = synthesize_domain(&task, &t, &opts).unwrap();
        let c = synthesize_agent_config(&task, &d.value, &t, &opts).unwrap();
        let again = SynthesisRecord::new(vec![d.log, c.log]);
        assert_eq!(again.to_json() + "\n", text, "{record_file}");
    }
}

#[test]
fn http_transport_needs_a_key() {
    std::env::remove_var(API_KEY_VAR);
    let e = HttpTransport::from_env("https://example.invalid/v1/chat/completions", "m").unwrap_err();
    assert!(matches!(e, TransportError::Config(m) if m.contains(API_KEY_VAR)));
}
