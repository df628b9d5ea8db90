//! Agent records, per-cell occupancy and local sensing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Region};
use crate::time::SubTime;

/// Entry-order index of an agent: `AgentId(0)` is the first agent to enter.
///
/// Agents are anonymous to each other; the id is simulator bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl AgentId {
    /// The 1-based entry index `i` of agent `a_i`.
    pub fn entry_index(self) -> u64 {
        u64::from(self.0) + 1
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.entry_index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentState {
    Mobile,
    OpenBeacon,
    ClosedBeacon,
}

impl AgentState {
    pub fn is_beacon(self) -> bool {
        !matches!(self, Self::Mobile)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub state: AgentState,
    pub step_count: u32,
    pub position: Cell,
    pub entered_at: SubTime,
    pub settled_at: Option<SubTime>,
    pub closed_at: Option<SubTime>,
    /// Cell the agent left when it settled; `None` for in-place settles.
    pub parent: Option<Cell>,
    pub crashed_at: Option<SubTime>,
}

impl AgentRecord {
    pub fn in_region(&self) -> bool {
        self.crashed_at.is_none()
    }

    pub fn is_mobile(&self) -> bool {
        self.state == AgentState::Mobile
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("cell {0} already holds a beacon")]
    BeaconOccupied(Cell),
    #[error("cell {0} already holds a mobile agent")]
    MobileOccupied(Cell),
    #[error("cell {0} is not in the region")]
    OutsideRegion(Cell),
    #[error("agent {0} cannot {1}")]
    BadTransition(AgentId, &'static str),
    #[error("occupancy map disagrees with agent {0}")]
    Inconsistent(AgentId),
}

/// The full simulation state at one sub-time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    region: Arc<Region>,
    beacon: Vec<Option<AgentId>>,
    mobile: Vec<Option<AgentId>>,
    agents: Vec<AgentRecord>,
    beacons: usize,
    clock: SubTime,
}

impl WorldState {
    pub fn new(region: Arc<Region>, m: u32) -> Self {
        let n = region.n();
        Self {
            region,
            beacon: vec![None; n],
            mobile: vec![None; n],
            agents: Vec::new(),
            beacons: 0,
            clock: SubTime::zero(m),
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn region_arc(&self) -> &Arc<Region> {
        &self.region
    }

    pub fn clock(&self) -> SubTime {
        self.clock
    }

    pub fn set_clock(&mut self, t: SubTime) {
        self.clock = t;
    }

    /// Every agent that ever entered, in entry order (crashed ones included).
    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> &AgentRecord {
        &self.agents[id.index()]
    }

    pub fn in_region_agents(&self) -> impl Iterator<Item = &AgentRecord> {
        self.agents.iter().filter(|a| a.in_region())
    }

    pub fn mobiles(&self) -> impl Iterator<Item = &AgentRecord> {
        self.in_region_agents().filter(|a| a.is_mobile())
    }

    pub fn beacon_at(&self, c: Cell) -> Option<&AgentRecord> {
        let i = self.region.index_of(c)?;
        self.beacon[i].map(|id| self.agent(id))
    }

    pub fn mobile_at(&self, c: Cell) -> Option<&AgentRecord> {
        let i = self.region.index_of(c)?;
        self.mobile[i].map(|id| self.agent(id))
    }

    /// Number of cells holding a beacon.
    pub fn beacon_count(&self) -> usize {
        self.beacons
    }

    pub(crate) fn beacon_slot(&self, index: usize) -> Option<AgentId> {
        self.beacon[index]
    }

    pub(crate) fn mobile_slot(&self, index: usize) -> Option<AgentId> {
        self.mobile[index]
    }

    fn index(&self, c: Cell) -> Result<usize, WorldError> {
        self.region.index_of(c).ok_or(WorldError::OutsideRegion(c))
    }

    /// Places a fresh mobile agent with step count 0.
    pub fn enter(&mut self, cell: Cell, t: SubTime) -> Result<AgentId, WorldError> {
        let i = self.index(cell)?;
        if self.mobile[i].is_some() {
            return Err(WorldError::MobileOccupied(cell));
        }
        let id = AgentId(self.agents.len() as u32);
        self.agents.push(AgentRecord {
            id,
            state: AgentState::Mobile,
            step_count: 0,
            position: cell,
            entered_at: t,
            settled_at: None,
            closed_at: None,
            parent: None,
            crashed_at: None,
        });
        self.mobile[i] = Some(id);
        Ok(id)
    }

    fn take_mobile(&mut self, id: AgentId, what: &'static str) -> Result<usize, WorldError> {
        let a = &self.agents[id.index()];
        if !a.is_mobile() || !a.in_region() {
            return Err(WorldError::BadTransition(id, what));
        }
        let from = self.index(a.position)?;
        if self.mobile[from] != Some(id) {
            return Err(WorldError::Inconsistent(id));
        }
        self.mobile[from] = None;
        Ok(from)
    }

    /// Moves a mobile agent and sets its step count.
    pub fn move_mobile(&mut self, id: AgentId, to: Cell, step_count: u32) -> Result<(), WorldError> {
        let dest = self.index(to)?;
        if self.mobile[dest].is_some() {
            return Err(WorldError::MobileOccupied(to));
        }
        self.take_mobile(id, "move")?;
        self.mobile[dest] = Some(id);
        let a = &mut self.agents[id.index()];
        a.position = to;
        a.step_count = step_count;
        Ok(())
    }

    /// Turns a mobile agent into a beacon at `at` (its own cell or a neighbor).
    pub fn settle(
        &mut self,
        id: AgentId,
        at: Cell,
        step_count: u32,
        state: AgentState,
        t: SubTime,
    ) -> Result<(), WorldError> {
        let dest = self.index(at)?;
        if self.beacon[dest].is_some() {
            return Err(WorldError::BeaconOccupied(at));
        }
        let from = self.take_mobile(id, "settle")?;
        self.beacon[dest] = Some(id);
        self.beacons += 1;
        let from_cell = self.region.cell_at(from);
        let a = &mut self.agents[id.index()];
        a.parent = (from_cell != at).then_some(from_cell);
        a.position = at;
        a.step_count = step_count;
        a.state = state;
        a.settled_at = Some(t);
        if state == AgentState::ClosedBeacon {
            a.closed_at = Some(t);
        }
        Ok(())
    }

    /// Exchanges the cells of two mobile agents in adjacent cells.
    pub fn swap_mobiles(&mut self, a: AgentId, b: AgentId) -> Result<(), WorldError> {
        let ia = self.take_mobile(a, "swap")?;
        let ib = match self.take_mobile(b, "swap") {
            Ok(i) => i,
            Err(e) => {
                self.mobile[ia] = Some(a);
                return Err(e);
            }
        };
        self.mobile[ia] = Some(b);
        self.mobile[ib] = Some(a);
        let (ca, cb) = (self.region.cell_at(ia), self.region.cell_at(ib));
        self.agents[a.index()].position = cb;
        self.agents[b.index()].position = ca;
        Ok(())
    }

    pub fn close(&mut self, id: AgentId, t: SubTime) -> Result<(), WorldError> {
        let a = &mut self.agents[id.index()];
        if a.state != AgentState::OpenBeacon {
            return Err(WorldError::BadTransition(id, "close"));
        }
        a.state = AgentState::ClosedBeacon;
        a.closed_at = Some(t);
        Ok(())
    }

    /// Removes a mobile agent from the region.
    pub fn crash(&mut self, id: AgentId, t: SubTime) -> Result<(), WorldError> {
        self.take_mobile(id, "crash")?;
        self.agents[id.index()].crashed_at = Some(t);
        Ok(())
    }

    /// Relocates a mobile agent without changing its step count.
    pub fn teleport(&mut self, id: AgentId, to: Cell) -> Result<(), WorldError> {
        let step_count = self.agent(id).step_count;
        self.move_mobile(id, to, step_count)
    }

    pub fn set_step_count(&mut self, id: AgentId, step_count: u32) -> Result<(), WorldError> {
        let a = &mut self.agents[id.index()];
        if !a.is_mobile() || !a.in_region() {
            return Err(WorldError::BadTransition(id, "take a new step count"));
        }
        a.step_count = step_count;
        Ok(())
    }

    /// Re-derives occupancy from the agent records and compares.
    pub fn check_consistency(&self) -> Result<(), WorldError> {
        let n = self.region.n();
        let (mut beacon, mut mobile) = (vec![None; n], vec![None; n]);
        for a in self.in_region_agents() {
            let i = self.index(a.position)?;
            let slot = if a.is_mobile() { &mut mobile[i] } else { &mut beacon[i] };
            if slot.replace(a.id).is_some() {
                return Err(if a.is_mobile() {
                    WorldError::MobileOccupied(a.position)
                } else {
                    WorldError::BeaconOccupied(a.position)
                });
            }
        }
        for (i, (b, m)) in beacon.iter().zip(&mobile).enumerate() {
            if *b != self.beacon[i] || *m != self.mobile[i] {
                let id = b.or(*m).or(self.beacon[i]).or(self.mobile[i]).expect("differs");
                return Err(WorldError::Inconsistent(id));
            }
        }
        Ok(())
    }

    fn cell_view(&self, index: usize) -> CellView {
        CellView {
            cell: self.region.cell_at(index),
            beacon: self.beacon[index].map(|id| {
                let a = self.agent(id);
                BeaconView {
                    step_count: a.step_count,
                    closed: a.state == AgentState::ClosedBeacon,
                    parent: a.parent,
                }
            }),
            mobile: self.mobile[index].is_some(),
        }
    }
}

/// What a beacon projects to its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeaconView {
    pub step_count: u32,
    pub closed: bool,
    /// Cell the beacon arrived from when it settled. Only the tree-restricted
    /// protocol reads it.
    pub parent: Option<Cell>,
}

/// One sensed cell. Mobile agents are visible only as present or absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellView {
    pub cell: Cell,
    pub beacon: Option<BeaconView>,
    pub mobile: bool,
}

impl CellView {
    pub fn has_beacon(&self) -> bool {
        self.beacon.is_some()
    }
}

/// An agent's view of its own cell and the free cells at distance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: CellView,
    pub center_is_entry: bool,
    /// Slots in N, E, S, W order; `None` for obstacles and the grid edge.
    pub slots: [Option<CellView>; 4],
}

impl Neighborhood {
    pub fn adjacent(&self) -> impl Iterator<Item = &CellView> + '_ {
        self.slots.iter().flatten()
    }
}

/// Senses the neighborhood of `agent` in the given snapshot.
pub fn sense(world: &WorldState, agent: &AgentRecord) -> Neighborhood {
    let region = world.region();
    let i = region.index_of(agent.position).expect("agent inside the region");
    Neighborhood {
        center: world.cell_view(i),
        center_is_entry: region.is_entry(agent.position),
        slots: region.adjacency_slots(i).map(|s| s.map(|j| world.cell_view(j))),
    }
}
