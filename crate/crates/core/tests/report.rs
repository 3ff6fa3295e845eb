use invplan::report::*;
use invplan::stimulus::HumanDataTable;

fn ratings(id: &str, pairs: &[(&str, f64)]) -> StimulusRatings {
    StimulusRatings {
        stimulus_id: id.into(),
        domain: "dkg".into(),
        ratings: pairs.iter().map(|(q, v)| (q.to_string(), *v)).collect(),
    }
}

#[test]
fn identical_ratings_correlate_perfectly() {
    let xs = [0.1, 0.7, 0.2, 0.9, 0.4];
    let c = correlate(&xs, &xs, 2000, DEFAULT_SEED).unwrap();
    assert!((c.r - 1.0).abs() < 1e-12);
    assert!(c.ci_high - c.ci_low < 1e-3);
}

#[test]
fn mirrored_ratings_anti_correlate() {
    let xs = [0.1, 0.7, 0.2, 0.9, 0.4];
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x).collect();
    assert!((pearson(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn constant_human_column_is_undefined() {
    assert_eq!(pearson(&[0.1, 0.5, 0.9], &[0.3; 3]), Err(EvalError::ZeroVariance("human")));
    assert_eq!(pearson(&[0.5], &[0.5]), Err(EvalError::TooFew(1)));
}

#[test]
fn orphans_on_either_side_are_reported() {
    let human = HumanDataTable::from_csv("stimulus_id,question_id,mean\ns1,goal:A,0.5\ns1,goal:C,0.5\n").unwrap();
    let model = [ratings("s1", &[("goal:A", 0.4), ("goal:B", 0.6)])];
    match align(&model, &human) {
        Err(EvalError::Orphans { model_only, human_only }) => {
            assert_eq!(model_only, ["s1/goal:B"]);
            assert_eq!(human_only, ["s1/goal:C"]);
        }
        r => panic!("{r:?}"),
    }
}

#[test]
fn bootstrap_is_seeded() {
    let xs = [0.1, 0.7, 0.2, 0.9, 0.4, 0.3];
    let ys = [0.2, 0.5, 0.1, 0.8, 0.6, 0.2];
    let a = correlate(&xs, &ys, 500, 7).unwrap();
    assert_eq!(a, correlate(&xs, &ys, 500, 7).unwrap());
    assert!(a.ci_low <= a.r && a.r <= a.ci_high);
    assert_ne!(a, correlate(&xs, &ys, 500, 8).unwrap());
}

#[test]
fn report_groups_by_stimulus() {
    let human = HumanDataTable::from_csv(
        "stimulus_id,question_id,mean\ns1,goal:A,0.2\ns1,goal:B,0.8\ns2,goal:A,0.6\ns2,goal:B,0.4\n",
    )
    .unwrap();
    let model = [
        ratings("s1", &[("goal:A", 0.3), ("goal:B", 0.7)]),
        ratings("s2", &[("goal:A", 0.5), ("goal:B", 0.5)]),
    ];
    let report = EvalReport::build(align(&model, &human).unwrap(), 200, DEFAULT_SEED).unwrap();
    assert_eq!(report.pooled.n, 4);
    assert!(report.per_domain.is_empty());
    assert!((report.per_stimulus[0].r.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(report.per_stimulus[1].r, None);
    assert_eq!(report.scatter_csv().lines().count(), 5);
}
