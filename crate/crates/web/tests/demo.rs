use metalyap_web::{certify_level, example_system, nested_sets, simulate_run, RunRequest};

#[test]
fn certify_draws_closed_curve_through_x0() {
    let view = certify_level(&example_system(), 3, "x1", [1.0, 0.0], 180).unwrap();
    assert_eq!(view.status, "feasible");
    assert_eq!(view.order, 6);
    let curve = view.curve.unwrap();
    assert_eq!(curve.points.len(), 181);
    assert!((curve.points[0][0] - 1.0).abs() < 1e-9 && curve.points[0][1].abs() < 1e-12);
    assert!((curve.points[0][0] - curve.points[180][0]).abs() < 1e-12 && (curve.points[0][1] - curve.points[180][1]).abs() < 1e-12);
    assert!(view.lmi_max_eigs.iter().all(|e| *e < 0.0));
}

#[test]
fn rejected_level_has_no_curve() {
    let unstable = r#"{"n": 2, "modes": [[[1.0, 0.0], [0.0, 1.0]]]}"#;
    let view = certify_level(unstable, 2, "feas", [1.0, 0.0], 64).unwrap();
    assert_ne!(view.status, "feasible");
    assert!(view.curve.is_none());
}

#[test]
fn bad_input_is_reported() {
    assert!(certify_level("{", 1, "x1", [1.0, 0.0], 64).is_err());
    assert!(certify_level(&example_system(), 0, "x1", [1.0, 0.0], 64).is_err());
    assert!(certify_level(&example_system(), 2, "x9", [1.0, 0.0], 64).is_err());
    let three = r#"{"n": 3, "modes": [[[-1,0,0],[0,-1,0],[0,0,-1]]]}"#;
    assert!(certify_level(three, 1, "x1", [1.0, 0.0], 64).is_err());
}

#[test]
fn runs_stay_inside_their_certificate() {
    for policy in ["random", "adversarial"] {
        let req = RunRequest {
            policy: policy.into(),
            seed: 7,
            c: 4,
            x0: [0.0, 1.0],
            horizon: 10.0,
        };
        let run = simulate_run(&example_system(), &req).unwrap();
        assert!(!run.diverged);
        assert_eq!(run.monotone, Some(true));
        assert!(run.worst_level_ratio.unwrap() <= 1.0 + 1e-9);
        assert!(run.points.len() <= 1502);
        assert!(run.curve.is_some());
    }
    let bare = RunRequest {
        policy: "adversarial".into(),
        seed: 0,
        c: 0,
        x0: [1.0, 0.0],
        horizon: 1.0,
    };
    assert!(simulate_run(&example_system(), &bare).is_err());
}

#[test]
fn higher_levels_give_smaller_sets() {
    let view = nested_sets(&example_system(), &[1, 5, 13], [1.0, 0.0], 3, 360).unwrap();
    let labels: Vec<&str> = view.sets.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["c13-x1", "c5-x1", "c1-x1"]);
    assert!(view.nested);
    assert!(view.intersection.area <= view.sets[0].area + 1e-12);
    assert!(view.run_ratios.iter().all(|r| *r <= 1.0 + 1e-6));
}
