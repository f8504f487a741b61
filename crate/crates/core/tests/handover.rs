use prollect::harness::{
    build_scenario, run_with_trace, ExperimentConfig, ScenarioKind, ScenarioSpec,
};

fn partitioned() -> ExperimentConfig {
    ExperimentConfig {
        partition: (2, 1),
        ..ExperimentConfig::default()
    }
}

#[test]
fn crossing_agents_change_owner_with_their_plans_intact() {
    let scenario = build_scenario(&ScenarioSpec::new(ScenarioKind::Intersection, 20, 0)).unwrap();
    let (metrics, trace) = run_with_trace(&scenario, &partitioned()).unwrap();
    assert!(metrics.completed);
    assert!(!metrics.collision);

    // The east-west lanes cross the cell boundary at x = 0, once per agent.
    let mut movers: Vec<usize> = trace.handovers.iter().map(|h| h.0).collect();
    movers.sort_unstable();
    assert_eq!(movers, vec![0, 1, 2, 3, 4, 10, 11, 12, 13, 14]);
    for &(id, _, from, to, unchanged) in &trace.handovers {
        assert!(unchanged, "agent {id} plan changed on handover");
        let west_bound = id < 5;
        assert_eq!((from, to), if west_bound { (1, 0) } else { (0, 1) });
    }
    assert_eq!(trace.frozen_mismatches, 0);
    assert!(trace.shadow_count.iter().any(|&n| n > 0));
}

#[test]
fn single_cell_has_no_shadows_or_handovers() {
    let scenario = build_scenario(&ScenarioSpec::new(ScenarioKind::Intersection, 20, 0)).unwrap();
    let (_, trace) = run_with_trace(&scenario, &ExperimentConfig::default()).unwrap();
    assert!(trace.handovers.is_empty());
    assert!(trace.shadow_count.iter().all(|&n| n == 0));
}
