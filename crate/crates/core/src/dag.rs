//! The directed graph that beacon step counts induce, and the structural
//! checks run against it.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::agent::{AgentId, AgentState, WorldState};
use crate::grid::{Cell, Region};
use crate::protocol::ProtocolId;
use crate::scheduler::{EventKind, Trace};
use crate::time::SubTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// `s_j = s_i + 1`.
    NextStep,
    /// `s_j > s_i`.
    Greater,
    /// The beacon at `v` settled coming from `u`.
    Parent,
}

impl EdgeRule {
    pub fn for_protocol(protocol: ProtocolId) -> Option<Self> {
        match protocol {
            ProtocolId::Dllg => Some(Self::NextStep),
            ProtocolId::Slug | ProtocolId::Dlug | ProtocolId::RobustSlug => Some(Self::Greater),
            ProtocolId::Dltt => Some(Self::Parent),
            ProtocolId::Bflf | ProtocolId::Dflf => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DagError {
    #[error("{0} robots leave no step-count gradient")]
    Unsupported(ProtocolId),
    #[error("edge relation has a cycle through {0}")]
    Cycle(Cell),
}

/// One beacon as the DAG sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeaconVertex {
    pub cell: Cell,
    /// Step count recorded when the beacon settled.
    pub depth: u32,
    pub parent: Option<Cell>,
}

#[derive(Debug, Clone)]
pub struct BeaconDag {
    vertices: Vec<BeaconVertex>,
    /// Vertex position per region cell index.
    slot: Vec<Option<usize>>,
    out: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl BeaconDag {
    /// Builds the graph over the given beacons; entry points holding a
    /// beacon are the roots.
    pub fn from_beacons(region: &Region, beacons: Vec<BeaconVertex>, rule: EdgeRule) -> Result<Self, DagError> {
        let mut slot = vec![None; region.n()];
        for (k, v) in beacons.iter().enumerate() {
            slot[region.index_of(v.cell).expect("beacon inside region")] = Some(k);
        }
        let mut out = vec![Vec::new(); beacons.len()];
        for (k, u) in beacons.iter().enumerate() {
            let ui = region.index_of(u.cell).expect("beacon inside region");
            for vk in region.adjacent_indices(ui).filter_map(|j| slot[j]) {
                let v = &beacons[vk];
                let edge = match rule {
                    EdgeRule::NextStep => v.depth == u.depth + 1,
                    EdgeRule::Greater => v.depth > u.depth,
                    EdgeRule::Parent => v.parent == Some(u.cell),
                };
                if edge {
                    out[k].push(vk);
                }
            }
        }
        let roots = region
            .entry_points()
            .iter()
            .filter_map(|&p| slot[region.index_of(p).expect("entry inside region")])
            .collect();
        let dag = Self { vertices: beacons, slot, out, roots };
        dag.check_acyclic()?;
        Ok(dag)
    }

    fn check_acyclic(&self) -> Result<(), DagError> {
        let mut indegree = vec![0usize; self.vertices.len()];
        for targets in &self.out {
            for &v in targets {
                indegree[v] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..indegree.len()).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop() {
            seen += 1;
            for &v in &self.out[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push(v);
                }
            }
        }
        match indegree.iter().position(|&d| d > 0) {
            Some(v) if seen < self.vertices.len() => Err(DagError::Cycle(self.vertices[v].cell)),
            _ => Ok(()),
        }
    }

    pub fn vertices(&self) -> &[BeaconVertex] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Cell, Cell)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(move |(u, vs)| vs.iter().map(move |&v| (self.vertices[u].cell, self.vertices[v].cell)))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    fn vertex(&self, region: &Region, c: Cell) -> Option<usize> {
        region.index_of(c).and_then(|i| self.slot[i])
    }

    pub fn depth(&self, region: &Region, c: Cell) -> Option<u32> {
        self.vertex(region, c).map(|k| self.vertices[k].depth)
    }

    pub fn has_edge(&self, region: &Region, u: Cell, v: Cell) -> bool {
        match (self.vertex(region, u), self.vertex(region, v)) {
            (Some(u), Some(v)) => self.out[u].contains(&v),
            _ => false,
        }
    }

    /// Every vertex reachable from `c` by a non-empty directed path.
    pub fn children(&self, region: &Region, c: Cell) -> Vec<Cell> {
        let Some(start) = self.vertex(region, c) else { return Vec::new() };
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = self.out[start].clone();
        let mut found = Vec::new();
        while let Some(u) = stack.pop() {
            if !std::mem::replace(&mut seen[u], true) {
                found.push(self.vertices[u].cell);
                stack.extend(&self.out[u]);
            }
        }
        found.sort();
        found
    }

    /// Vertices with no outgoing edge.
    pub fn leaves(&self) -> Vec<Cell> {
        let mut leaves: Vec<Cell> =
            (0..self.vertices.len()).filter(|&k| self.out[k].is_empty()).map(|k| self.vertices[k].cell).collect();
        leaves.sort();
        leaves
    }

    /// Shortest directed distance from a root, per vertex in `vertices()` order.
    pub fn distances(&self) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.vertices.len()];
        let mut queue = VecDeque::new();
        for &r in &self.roots {
            dist[r] = Some(0);
            queue.push_back(r);
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued vertices have a distance") + 1;
            for &v in &self.out[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn dist(&self, region: &Region, c: Cell) -> Option<u32> {
        self.vertex(region, c).and_then(|k| self.distances()[k])
    }

    /// One `x,y -> x,y` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (u, v) in self.edges() {
            writeln!(s, "{u} -> {v}").expect("writing to a String");
        }
        s
    }
}

/// The graph over the beacons currently in `world`.
pub fn build_dag(world: &WorldState, protocol: ProtocolId) -> Result<BeaconDag, DagError> {
    let rule = EdgeRule::for_protocol(protocol).ok_or(DagError::Unsupported(protocol))?;
    let region = world.region();
    let beacons = region
        .cells()
        .iter()
        .filter_map(|&c| world.beacon_at(c))
        .map(|a| BeaconVertex { cell: a.position, depth: a.step_count, parent: a.parent })
        .collect();
    BeaconDag::from_beacons(region, beacons, rule)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lemma1Violation {
    pub cell: Cell,
    pub depth: u32,
    /// `None` when no directed path reaches the vertex.
    pub dist: Option<u32>,
}

/// Compares shortest directed distance with recorded depth at every vertex.
pub fn verify_lemma1(dag: &BeaconDag) -> Vec<Lemma1Violation> {
    dag.vertices
        .iter()
        .zip(dag.distances())
        .filter(|(v, d)| *d != Some(v.depth))
        .map(|(v, dist)| Lemma1Violation { cell: v.cell, depth: v.depth, dist })
        .collect()
}

/// `depth(a_i, t)`: logged wake-ups up to `t`, plus one virtual wake-up for
/// each integer time in `1..=t` at which the agent had not yet entered, minus
/// `(i-1) ΔT`. `entered_at` is `None` for an agent that never entered.
pub fn agent_depth_from(wakes_up_to_t: u64, entered_at: Option<SubTime>, i: u64, t: SubTime, delta_t: u64) -> i64 {
    let whole = t.ticks() / u64::from(t.m);
    // Integer t' counts while the agent is still outside at t' - dt, i.e. t' <= entry.
    let virtual_wakes = entered_at.map_or(whole, |e| whole.min(e.ticks() / u64::from(e.m)));
    (wakes_up_to_t + virtual_wakes) as i64 - ((i - 1) * delta_t) as i64
}

/// `depth(a_i, t)` read off a trace with logged wake-ups. `i` is 1-based.
pub fn agent_depth(trace: &Trace, i: u64, t: SubTime, delta_t: u64) -> i64 {
    assert!(trace.wakes_logged, "agent depth needs logged wake-ups");
    let id = AgentId((i - 1) as u32);
    let wakes = trace
        .events
        .iter()
        .take_while(|e| e.time <= t)
        .filter(|e| e.agent == id && e.kind == EventKind::Woke)
        .count() as u64;
    let entered = trace.final_world.agents().get(id.index()).map(|a| a.entered_at).filter(|&e| e <= t);
    agent_depth_from(wakes, entered, i, t, delta_t)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lemma2Violation {
    pub time: SubTime,
    pub agent: Option<AgentId>,
    pub cell: Cell,
    pub what: &'static str,
}

/// Checks, at every sub-time with logged activity, that a mobile agent over
/// an open beacon has the beacon's depth unless that beacon closes before the
/// step ends, and that a closed beacon carries a mobile agent and only closed
/// beacons below it. Meant for DLLG with one entry point and ΔT >= 2.
pub fn verify_lemma2(trace: &Trace) -> Vec<Lemma2Violation> {
    assert!(trace.wakes_logged, "agent depths need logged wake-ups");
    let mut violations = Vec::new();
    let mut world = WorldState::new(trace.region.clone(), trace.m);
    let mut wakes = Vec::<u64>::new();
    let final_agents = trace.final_world.agents();
    let events = &trace.events;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].time;
        while k < events.len() && events[k].time == t {
            let e = &events[k];
            match e.kind {
                EventKind::Woke => {
                    if wakes.len() <= e.agent.index() {
                        wakes.resize(e.agent.index() + 1, 0);
                    }
                    wakes[e.agent.index()] += 1;
                }
                EventKind::Entered { cell } => {
                    world.enter(cell, t).expect("trace replays");
                }
                EventKind::Moved { to, step_count, .. } => world.move_mobile(e.agent, to, step_count).expect("trace replays"),
                EventKind::Settled { at, step_count, state, .. } => {
                    world.settle(e.agent, at, step_count, state, t).expect("trace replays")
                }
                EventKind::Closed => world.close(e.agent, t).expect("trace replays"),
                _ => {}
            }
            k += 1;
        }
        let step_end = SubTime::at_step(t.ceil_step(), t.m);
        for a in world.mobiles() {
            let Some(beacon) = world.beacon_at(a.position) else { continue };
            if beacon.state != AgentState::OpenBeacon {
                continue;
            }
            let closes_in_step = final_agents[beacon.id.index()].closed_at.is_some_and(|c| c < step_end);
            let i = a.id.entry_index();
            let depth = agent_depth_from(wakes.get(a.id.index()).copied().unwrap_or(0), Some(a.entered_at), i, t, trace.delta_t);
            if !closes_in_step && depth != i64::from(beacon.step_count) {
                violations.push(Lemma2Violation { time: t, agent: Some(a.id), cell: a.position, what: "agent depth differs from vertex depth" });
            }
        }
        if let Ok(dag) = build_dag(&world, ProtocolId::Dllg) {
            violations.extend(closed_beacon_violations(&world, &dag).into_iter().map(|(cell, what)| Lemma2Violation {
                time: t,
                agent: None,
                cell,
                what,
            }));
        }
    }
    violations
}

/// Closed beacons lacking a mobile on top or with an open beacon below them.
pub fn closed_beacon_violations(world: &WorldState, dag: &BeaconDag) -> Vec<(Cell, &'static str)> {
    let region = world.region();
    let mut found = Vec::new();
    for v in dag.vertices() {
        if world.beacon_at(v.cell).is_some_and(|b| b.state == AgentState::ClosedBeacon) {
            if world.mobile_at(v.cell).is_none() {
                found.push((v.cell, "closed beacon without a mobile agent"));
            }
            let open_below = dag
                .children(region, v.cell)
                .into_iter()
                .any(|c| world.beacon_at(c).is_some_and(|b| b.state != AgentState::ClosedBeacon));
            if open_below {
                found.push((v.cell, "closed beacon above an open one"));
            }
        }
    }
    found
}
