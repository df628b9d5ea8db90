//! Performance measures computed from a finished trace.

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, WorldState};
use crate::scheduler::{EventKind, Outcome, Trace};
use crate::time::SubTime;

/// True iff every entry point holds a closed beacon.
///
/// Looks at the entry-point cells and nothing else, the way an observer
/// standing outside the region would.
pub fn detect_termination(world: &WorldState) -> bool {
    world
        .region()
        .entry_points()
        .iter()
        .all(|&p| world.beacon_at(p).is_some_and(|b| b.state == AgentState::ClosedBeacon))
}

/// True iff every free cell holds a beacon, open or closed.
pub fn coverage_complete(world: &WorldState) -> bool {
    world.beacon_count() == world.region().n()
}

/// Per-agent energy in ticks (1/M of a step), measured up to the end of the
/// trace: time spent mobile between entering and settling, crashing or the
/// end, whichever comes first.
pub fn energy_ticks(trace: &Trace) -> Vec<u64> {
    let end = trace.end_time();
    trace
        .final_world
        .agents()
        .iter()
        .map(|a| {
            let stop = [a.settled_at, a.crashed_at].into_iter().flatten().fold(end, SubTime::min);
            stop.ticks().saturating_sub(a.entered_at.ticks())
        })
        .collect()
}

/// Per-agent energies with their total and maximum, in steps.
pub fn compute_energy(trace: &Trace) -> (Vec<f64>, f64, f64) {
    let m = f64::from(trace.m);
    let ticks = energy_ticks(trace);
    let total = ticks.iter().sum::<u64>() as f64 / m;
    let max = ticks.iter().copied().max().unwrap_or(0) as f64 / m;
    (ticks.into_iter().map(|t| t as f64 / m).collect(), total, max)
}

/// Number of moves, counting move-and-settle but not entries, up to the end
/// of the trace.
pub fn total_travel(trace: &Trace) -> u64 {
    let end = trace.end_time();
    trace.events.iter().filter(|e| e.time <= end).map(|e| e.kind.moves()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `T_C`, or the cutoff time for a censored run.
    pub termination_time: SubTime,
    pub termination_step: u64,
    pub coverage_complete_at: Option<SubTime>,
    pub per_agent_energy: Vec<f64>,
    pub total_energy: f64,
    pub max_energy: f64,
    pub total_travel: u64,
    pub agents_entered: usize,
    pub agents_at_tc: usize,
    /// The step budget ran out before termination.
    pub censored: bool,
    /// Terminated with every free cell covered.
    pub correct: bool,
}

impl RunMetrics {
    pub fn from_trace(trace: &Trace) -> Self {
        let world = &trace.final_world;
        let (per_agent_energy, total_energy, max_energy) = compute_energy(trace);
        let censored = matches!(trace.outcome, Outcome::BudgetExhausted(_));
        let termination_time = trace.end_time();
        Self {
            termination_time,
            termination_step: termination_time.ceil_step(),
            coverage_complete_at: trace.coverage_complete_at,
            per_agent_energy,
            total_energy,
            max_energy,
            total_travel: total_travel(trace),
            agents_entered: world.agents().len(),
            agents_at_tc: world.in_region_agents().count(),
            censored,
            correct: !censored && coverage_complete(world),
        }
    }

    pub fn mobiles_at_tc(trace: &Trace) -> usize {
        trace.final_world.mobiles().count()
    }
}

/// Counts entries in a trace.
pub fn entries(trace: &Trace) -> impl Iterator<Item = (SubTime, crate::grid::Cell)> + '_ {
    trace.events.iter().filter_map(|e| match e.kind {
        EventKind::Entered { cell } => Some((e.time, cell)),
        _ => None,
    })
}
