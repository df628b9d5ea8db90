use std::sync::Arc;

use beacon_cover::grid::{generate_region, RegionKind};
use beacon_cover::metrics::coverage_complete;
use beacon_cover::scheduler::{EventKind, RunError};
use beacon_cover::{run, FaultEvent, FaultPlan, Outcome, ProtocolId, RunConfig, RunMetrics};

fn plan(tuples: &[&str]) -> FaultPlan {
    FaultPlan::new(tuples.iter().map(|t| t.parse::<FaultEvent>().unwrap()).collect())
}

fn square(size: u32) -> Arc<beacon_cover::Region> {
    Arc::new(generate_region(RegionKind::Square, size).unwrap())
}

#[test]
fn slug_recovers_from_early_crashes() {
    let faults = plan(&["(3:50, crash, entered=2)", "(6:10, crash, random)", "(9:90, crash, random)"]);
    for seed in 0..20 {
        let config = RunConfig::new(square(5), ProtocolId::Slug).seed(seed).faults(faults.clone());
        let trace = run(&config).unwrap();
        let crashed = trace.events.iter().filter(|e| e.kind == EventKind::Crashed).count();
        assert_eq!(crashed + trace.skipped_faults.len(), 3);
        let m = RunMetrics::from_trace(&trace);
        assert!(m.correct, "seed {seed}");
        // Crashed agents have left the region.
        assert_eq!(m.agents_at_tc, m.agents_entered - crashed);
    }
}

#[test]
fn crashed_agents_stop_spending_energy() {
    let config = RunConfig::new(square(4), ProtocolId::Slug).seed(3).faults(plan(&["(4:20, crash, entered=3)"]));
    let trace = run(&config).unwrap();
    let a3 = &trace.final_world.agents()[2];
    if let Some(t) = a3.crashed_at {
        let per_agent = RunMetrics::from_trace(&trace).per_agent_energy;
        let expected = (t.ticks() - a3.entered_at.ticks()) as f64 / 100.0;
        assert!((per_agent[2] - expected).abs() < 1e-9);
    }
}

#[test]
fn robust_slug_survives_teleports_into_unexplored_cells() {
    let faults = plan(&[
        "(5:10, teleport, random, cell=3:3)",
        "(8:10, teleport, random, random-cell)",
        "(12:40, teleport, random, random-cell)",
        "(15:5, crash, random)",
    ]);
    for seed in 0..20 {
        let config = RunConfig::new(square(4), ProtocolId::RobustSlug).seed(seed).faults(faults.clone());
        let trace = run(&config).unwrap();
        assert!(matches!(trace.outcome, Outcome::Terminated(_)), "seed {seed}");
        assert!(coverage_complete(&trace.final_world), "seed {seed}");
    }
}

#[test]
fn corruption_only_touches_agents_that_carry_a_count() {
    let faults = plan(&["(5, corrupt, random, 40)"]);
    let slug = run(&RunConfig::new(square(4), ProtocolId::Slug).seed(1).faults(faults.clone())).unwrap();
    assert!(slug.events.iter().any(|e| e.kind == EventKind::Corrupted { step_count: 40 }));
    let robust = run(&RunConfig::new(square(4), ProtocolId::RobustSlug).seed(1).faults(faults)).unwrap();
    assert_eq!(robust.skipped_faults.len(), 1);
}

#[test]
fn faults_with_no_victim_are_skipped_not_fatal() {
    let faults = plan(&["(0:0, crash, random)", "(1:0, crash, entered=9)"]);
    let trace = run(&RunConfig::new(square(3), ProtocolId::Slug).faults(faults)).unwrap();
    assert_eq!(trace.skipped_faults.len(), 2);
    assert!(RunMetrics::from_trace(&trace).correct);
}

#[test]
fn fault_plans_are_validated() {
    let off_grid = plan(&["(3:100, crash, random)"]);
    assert!(matches!(
        run(&RunConfig::new(square(3), ProtocolId::Slug).faults(off_grid)),
        Err(RunError::FaultOffGrid { .. })
    ));
    for lf in [ProtocolId::Bflf, ProtocolId::Dflf] {
        assert!(matches!(
            run(&RunConfig::new(square(3), lf).faults(plan(&["(3, crash, random)"]))),
            Err(RunError::FaultsUnsupported(_))
        ));
    }
}

#[test]
fn faulted_traces_replay_to_the_final_world() {
    let faults = plan(&["(4:30, crash, random)", "(6:60, teleport, random, random-cell)", "(7, corrupt, random, 9)"]);
    let trace = run(&RunConfig::new(square(5), ProtocolId::Slug).seed(8).faults(faults)).unwrap();
    let replayed = trace.world_at(trace.end_time()).unwrap();
    assert_eq!(replayed.agents(), trace.final_world.agents());
}
