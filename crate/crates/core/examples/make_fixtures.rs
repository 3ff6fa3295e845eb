//! Regenerates the bundles and stimuli under `fixtures/`.
//!
//! `cargo run -p invplan-core --example make_fixtures -- <fixtures dir>`

use std::path::{Path, PathBuf};

use invplan::domains::{build_astronaut_with, build_foodtruck, builtin, AstronautOptions, DomainBundle};
use invplan::pddl::GridDims;
use invplan::pipeline::rollout_stimulus;
use invplan::synthesis::{
    synthesize_agent_config, synthesize_domain, MockTransport, SynthesisOptions, SynthesisRecord, SynthesisTask, TemplateId,
};

const DKG_VARIANTS: [(&str, &str); 4] = [
    ("single", "dkg-single"),
    ("reuse", "dkg-reuse"),
    ("double", "dkg-double"),
    ("inverse", "dkg-inverse"),
];

struct Case {
    id: &'static str,
    rows: &'static [&'static str],
    actions: &'static [&'static str],
    scenario: &'static str,
}

const MAZES: &[Case] = &[
    Case {
        id: "m1",
        rows: &["A d_red . d_blue B", "# . . . #", "k_red . . . k_blue", ". . @ . .", "C . . . D"],
        actions: &["(left player)", "(left player)"],
        scenario: "Heads left, past the red key.",
    },
    Case {
        id: "m2",
        rows: &["A d_blue k_blue . B", "# # . # d_red", "k_red . . . .", ". . @ . .", "C d_blue . . D"],
        actions: &["(up player)", "(up player)"],
        scenario: "Walks straight up the middle corridor.",
    },
    Case {
        id: "m3",
        rows: &["A . d_red . B", "# # # . #", "k_red . . . k_blue", ". . @ . .", "C . d_blue . D"],
        actions: &["(right player)", "(up player)"],
        scenario: "Steps right, then up toward the gap.",
    },
];

const PAIRED: Case = Case {
    id: "paired",
    rows: &[
        "A d_blue d_blue k_blue d_blue . .",
        "# # # . # # B",
        "C d_blue . . . # #",
        "# # . . . . .",
        "k_blue . . . . . #",
        "k_blue . . . # d_blue D",
        ". @ . . # # #",
    ],
    actions: &["(up player)", "(up player)", "(right player)", "(right player)"],
    scenario: "Passes both lower keys and heads for the upper corridor.",
};

const TRUCK_ROWS: &[&str] = &[
    "S_spotA+T_lebanese . . # . . S_spotB+T_korean",
    "# # . # . # #",
    ". . . . . . .",
    ". . . @ . . .",
];

const TRUCKS: &[Case] = &[
    Case {
        id: "f0",
        rows: TRUCK_ROWS,
        actions: &[],
        scenario: "Standing at the start.",
    },
    Case {
        id: "f1",
        rows: TRUCK_ROWS,
        actions: &["(up student)", "(left student)", "(up student)"],
        scenario: "Walks into the left passage.",
    },
    Case {
        id: "f1b",
        rows: TRUCK_ROWS,
        actions: &[
            "(up student)",
            "(left student)",
            "(up student)",
            "(up student)",
            "(left student)",
            "(left student)",
            "(eat student lebanese)",
        ],
        scenario: "Goes left and eats at the near truck.",
    },
    Case {
        id: "f2",
        rows: TRUCK_ROWS,
        actions: &[
            "(up student)",
            "(left student)",
            "(up student)",
            "(up student)",
            "(down student)",
            "(down student)",
            "(right student)",
            "(right student)",
            "(up student)",
        ],
        scenario: "Checks the left spot, turns back and takes the right passage.",
    },
    Case {
        id: "f3",
        rows: TRUCK_ROWS,
        actions: &["(up student)", "(right student)", "(up student)", "(up student)", "(right student)"],
        scenario: "Takes the right passage.",
    },
];

const EMPTY_SPOT: Case = Case {
    id: "e1",
    rows: &["S_spotA # . # S_spotB+T_korean", ". # . # .", ". @ . . ."],
    actions: &["(left student)"],
    scenario: "Steps left and sees the left spot is empty.",
};

const ASTRO_ROWS: &[&str] = &["P_pkgA+s s s s P_pkgB+s", "s r r r s", "s r r r s", "s r r r s", "s s @+s s s"];
const ASTRO_ROWS_2: &[&str] = &["P_pkgA+s r r r s", "s r r r s", "s s @+s s s", "r r r r s", "r r r r P_pkgB+s"];

const ASTRONAUT: &[Case] = &[
    Case {
        id: "a1",
        rows: ASTRO_ROWS,
        actions: &["(sand-up astronaut)", "(rock-up astronaut)", "(rock-up astronaut)", "(rock-left astronaut)"],
        scenario: "Cuts across the rock field.",
    },
    Case {
        id: "a2",
        rows: ASTRO_ROWS,
        actions: &["(sand-left astronaut)", "(sand-left astronaut)", "(sand-up astronaut)", "(sand-up astronaut)"],
        scenario: "Walks around the rock on sand.",
    },
    Case {
        id: "a3",
        rows: ASTRO_ROWS,
        actions: &[
            "(sand-right astronaut)",
            "(sand-right astronaut)",
            "(sand-up astronaut)",
            "(sand-up astronaut)",
            "(sand-up astronaut)",
            "(pickup astronaut pkgB)",
        ],
        scenario: "Goes around on sand and collects the right package.",
    },
    Case {
        id: "a4",
        rows: ASTRO_ROWS_2,
        actions: &["(sand-right astronaut)", "(sand-right astronaut)", "(sand-down astronaut)", "(sand-down astronaut)"],
        scenario: "Follows the sand strip down to the far package.",
    },
];

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn write_case(bundle: &DomainBundle, case: &Case, id: &str, domain: &str, path: &Path) -> Res<()> {
    let mut stim = rollout_stimulus(bundle, id, case.rows, case.actions)?;
    stim.domain = domain.to_owned();
    stim.scenario = case.scenario.to_owned();
    let text = serde_json::to_string_pretty(&stim.to_json())?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn grid_of(rows: &[&str]) -> GridDims {
    GridDims::new(rows.len() as u32, rows[0].split_whitespace().count() as u32)
}

pub fn astronaut_small() -> Res<DomainBundle> {
    let opts = AstronautOptions {
        terrain_costs: vec![1.0, 4.0],
        package_rewards: vec![1.0, 10.0],
        pickup_cost: 1.0,
    };
    Ok(build_astronaut_with(grid_of(ASTRO_ROWS), &["sand", "rock"], &["pkgA", "pkgB"], &opts)?)
}

pub fn foodtruck_one() -> Res<DomainBundle> {
    let mut b = build_foodtruck(grid_of(EMPTY_SPOT.rows), &["korean"], &["spotA", "spotB"])?;
    b.name = "foodtruck-one".into();
    // one truck, two spots: start from an even prior
    b.config.belief_config.as_mut().expect("partial").confidence = 0.5;
    Ok(b)
}

const DOMAIN_VERBATIM: &str = include_str!("../assets/reference/domain_verbatim.pddl");
const DOMAIN_EXAMPLE: &str = include_str!("../assets/reference/domain_example.pddl");
const CONFIG_VERBATIM: &str = include_str!("../assets/reference/config_verbatim.json");
const CONFIG_EXAMPLE: &str = include_str!("../assets/reference/config_example.json");

fn fenced(lang: &str, body: &str) -> String {
    format!("Here is the file.\n```{lang}\n{body}```\n")
}

/// Records a two-stage synthesis run against canned responses.
fn record(dir: &Path, task_file: &str, domain: &[String], config: &[String], out: &str) -> Res<()> {
    let task: SynthesisTask = serde_json::from_str(&std::fs::read_to_string(dir.join(task_file))?)?;
    let t = MockTransport::new()
        .respond(TemplateId::Env, domain.iter().cloned())
        .respond(TemplateId::Agent, config.iter().cloned());
    let opts = SynthesisOptions::default();
    let d = synthesize_domain(&task, &t, &opts)?;
    let c = synthesize_agent_config(&task, &d.value, &t, &opts)?;
    std::fs::write(dir.join(out), SynthesisRecord::new(vec![d.log, c.log]).to_json() + "\n")?;
    Ok(())
}

fn synthesis_records(dir: &Path) -> Res<()> {
    let boy = std::fs::read_to_string(dir.join("config_example_boy.json"))?;
    record(
        dir,
        "task_example.json",
        &[DOMAIN_VERBATIM.to_owned(), fenced("pddl", DOMAIN_EXAMPLE)],
        &[CONFIG_VERBATIM.to_owned(), fenced("json", &boy)],
        "record_example.json",
    )?;
    let ballbox = std::fs::read_to_string(dir.join("ballbox.pddl"))?;
    record(
        dir,
        "task_ballbox.json",
        &[ballbox],
        &[fenced("json", CONFIG_VERBATIM), CONFIG_EXAMPLE.to_owned()],
        "record_ballbox.json",
    )
}

fn main() -> Res<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let stimuli = root.join("stimuli");
    let paired = root.join("paired");
    let bundles = root.join("bundles");
    for d in [&stimuli, &paired, &bundles] {
        std::fs::create_dir_all(d)?;
    }

    let astro = astronaut_small()?;
    astro.write_dir(&bundles.join("astronaut-small"))?;
    let one = foodtruck_one()?;
    one.write_dir(&bundles.join("foodtruck-one"))?;

    for (suffix, name) in DKG_VARIANTS {
        for case in MAZES {
            let b = builtin(name, grid_of(case.rows))?;
            let id = format!("{}-{suffix}", case.id);
            write_case(&b, case, &id, name, &stimuli.join(format!("{id}.json")))?;
        }
        let b = builtin(name, grid_of(PAIRED.rows))?;
        let id = format!("paired-{suffix}");
        write_case(&b, &PAIRED, &id, name, &paired.join(format!("{suffix}.json")))?;
    }
    let trucks = builtin("foodtruck", grid_of(TRUCK_ROWS))?;
    for case in TRUCKS {
        write_case(&trucks, case, case.id, "foodtruck", &stimuli.join(format!("{}.json", case.id)))?;
    }
    write_case(&one, &EMPTY_SPOT, EMPTY_SPOT.id, "../bundles/foodtruck-one", &stimuli.join("e1.json"))?;
    for case in ASTRONAUT {
        write_case(&astro, case, case.id, "../bundles/astronaut-small", &stimuli.join(format!("{}.json", case.id)))?;
    }
    synthesis_records(&root.join("synthesis"))?;
    println!("fixtures written to {}", root.display());
    Ok(())
}
