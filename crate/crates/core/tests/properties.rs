mod common;

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use beacon_cover::dag::{build_dag, EdgeRule};
use beacon_cover::grid::parse_region;
use beacon_cover::metrics::{coverage_complete, entries};
use beacon_cover::scheduler::EventKind;
use beacon_cover::{run, AgentState, Cell, Outcome, ProtocolId, Region, RunConfig, SubTime, WakeMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADIENT: [ProtocolId; 5] =
    [ProtocolId::Dllg, ProtocolId::Slug, ProtocolId::Dlug, ProtocolId::Dltt, ProtocolId::RobustSlug];

/// A random connected shape of `n` cells grown from the origin, with its
/// first cell as the entry point.
fn random_region(n: usize, seed: u64) -> Arc<Region> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![(0i32, 0i32)];
    let mut set: BTreeSet<(i32, i32)> = cells.iter().copied().collect();
    while cells.len() < n {
        let (x, y) = cells[rng.gen_range(0..cells.len())];
        let next = [(x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)][rng.gen_range(0..4)];
        if set.insert(next) {
            cells.push(next);
        }
    }
    let mx = set.iter().map(|p| p.0).min().unwrap();
    let my = set.iter().map(|p| p.1).min().unwrap();
    let shifted: BTreeSet<(i32, i32)> = set.iter().map(|p| (p.0 - mx, p.1 - my)).collect();
    Arc::new(parse_region(&common::to_text(&shifted, (-mx, -my))).unwrap())
}

fn wake_mode() -> impl Strategy<Value = WakeMode> {
    prop_oneof![
        Just(WakeMode::RandomUniform),
        Just(WakeMode::Synchronous),
        Just(WakeMode::BeaconsFirst),
        Just(WakeMode::MobilesFirst),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn occupancy_holds_after_every_substep(
        n in 1usize..25,
        shape in any::<u64>(),
        seed in any::<u64>(),
        p in 0usize..7,
        delta_t in 1u64..4,
        mode in wake_mode(),
    ) {
        let protocol = ProtocolId::ALL[p];
        let config = RunConfig::new(random_region(n, shape), protocol)
            .delta_t(delta_t)
            .m(10)
            .seed(seed)
            .wake_mode(mode)
            .validate(true);
        let trace = run(&config).unwrap();
        let world = trace.world_at(trace.end_time()).unwrap();
        prop_assert_eq!(world.agents(), trace.final_world.agents());
        if let Outcome::Terminated(_) = trace.outcome {
            prop_assert!(coverage_complete(&trace.final_world));
        }
    }

    #[test]
    fn runs_are_pure_functions_of_their_config(
        n in 1usize..20,
        shape in any::<u64>(),
        seed in any::<u64>(),
        p in 0usize..7,
    ) {
        let config = RunConfig::new(random_region(n, shape), ProtocolId::ALL[p]).seed(seed);
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        prop_assert_eq!(&a.events, &b.events);
        prop_assert_eq!(a.outcome, b.outcome);
    }

    /// Agents waking at the same sub-time see the world from before any of
    /// them acted: nobody moves into a cell another agent leaves at that time,
    /// and no cell is settled twice.
    #[test]
    fn same_substep_wakers_share_one_snapshot(
        n in 2usize..25,
        shape in any::<u64>(),
        seed in any::<u64>(),
        p in 0usize..5,
    ) {
        let config = RunConfig::new(random_region(n, shape), GRADIENT[p])
            .seed(seed)
            .wake_mode(WakeMode::Synchronous);
        let trace = run(&config).unwrap();
        let mut by_time: std::collections::BTreeMap<SubTime, Vec<EventKind>> = Default::default();
        for e in &trace.events {
            by_time.entry(e.time).or_default().push(e.kind);
        }
        for (t, kinds) in by_time {
            let left: HashSet<Cell> = kinds
                .iter()
                .filter_map(|k| match *k {
                    EventKind::Moved { from, .. } => Some(from),
                    EventKind::Settled { from, at, .. } if from != at => Some(from),
                    _ => None,
                })
                .collect();
            let mut settled = HashSet::new();
            for k in &kinds {
                match *k {
                    EventKind::Moved { to, .. } => prop_assert!(!left.contains(&to), "move into a vacated cell at {}", t),
                    EventKind::Settled { at, .. } => prop_assert!(settled.insert(at), "two beacons at {} at {}", at, t),
                    _ => {}
                }
            }
        }
    }

    /// With one entry point and ΔT >= 2, agent i enters at (i-1)ΔT and DLLG
    /// ends with n mobile agents over n closed beacons.
    #[test]
    fn dllg_entry_schedule(n in 1usize..30, shape in any::<u64>(), seed in any::<u64>(), delta_t in 2u64..6) {
        let config = RunConfig::new(random_region(n, shape), ProtocolId::Dllg).delta_t(delta_t).seed(seed);
        let trace = run(&config).unwrap();
        for (i, (t, _)) in entries(&trace).enumerate() {
            prop_assert_eq!(t, SubTime::at_step(i as u64 * delta_t, 100));
        }
        let world = &trace.final_world;
        prop_assert_eq!(world.agents().len(), 2 * n);
        prop_assert_eq!(world.mobiles().count(), n);
        prop_assert_eq!(world.agents().iter().filter(|a| a.state == AgentState::ClosedBeacon).count(), n);
    }

    #[test]
    fn step_counts_never_repeat_along_dag_edges(
        n in 1usize..40,
        shape in any::<u64>(),
        seed in any::<u64>(),
        p in 0usize..5,
        budget in 1u64..200,
    ) {
        let config = RunConfig::new(random_region(n, shape), GRADIENT[p]).seed(seed).step_budget(budget);
        let trace = run(&config).unwrap();
        prop_assert!(build_dag(&trace.final_world, GRADIENT[p]).is_ok());
    }

    /// Reachability and leaves against a brute-force closure of the edge relation.
    #[test]
    fn dag_queries_match_brute_force(
        n in 1usize..=12,
        shape in any::<u64>(),
        seed in any::<u64>(),
        p in 0usize..5,
        budget in 1u64..60,
    ) {
        let protocol = GRADIENT[p];
        let trace = run(&RunConfig::new(random_region(n, shape), protocol).seed(seed).step_budget(budget)).unwrap();
        let world = &trace.final_world;
        let region = world.region();
        let dag = build_dag(world, protocol).unwrap();
        let rule = EdgeRule::for_protocol(protocol).unwrap();
        let beacons: Vec<_> = region.cells().iter().filter_map(|&c| world.beacon_at(c)).collect();
        let edge = |u: &beacon_cover::AgentRecord, v: &beacon_cover::AgentRecord| {
            u.position.manhattan(v.position) == 1
                && match rule {
                    EdgeRule::NextStep => v.step_count == u.step_count + 1,
                    EdgeRule::Greater => v.step_count > u.step_count,
                    EdgeRule::Parent => v.parent == Some(u.position),
                }
        };
        let k = beacons.len();
        let mut reach = vec![vec![false; k]; k];
        for a in 0..k {
            for b in 0..k {
                reach[a][b] = edge(beacons[a], beacons[b]);
            }
        }
        for m in 0..k {
            for a in 0..k {
                for b in 0..k {
                    reach[a][b] |= reach[a][m] && reach[m][b];
                }
            }
        }
        for a in 0..k {
            let mut expected: Vec<Cell> = (0..k).filter(|&b| reach[a][b]).map(|b| beacons[b].position).collect();
            expected.sort();
            prop_assert_eq!(dag.children(region, beacons[a].position), expected);
        }
        let mut leaves: Vec<Cell> = (0..k)
            .filter(|&a| (0..k).all(|b| !edge(beacons[a], beacons[b])))
            .map(|a| beacons[a].position)
            .collect();
        leaves.sort();
        prop_assert_eq!(dag.leaves(), leaves);
    }
}
