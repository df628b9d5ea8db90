//! Mobile-agent faults: crashes, positional teleports and step-count
//! corruption.
//!
//! Fault events are written as tuples, one per entry of a run config's
//! `faults` list:
//!
//! ```text
//! (120, crash, random)
//! (40:25, crash, entered=3)
//! (75:10, teleport, random, random-cell)
//! (75:10, teleport, entered=2, cell=4:1)
//! (90, corrupt, random, 17)
//! ```
//!
//! Times are `step` or `step:substep`. Beacons are never faulted.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::agent::{AgentId, WorldState};
use crate::grid::Cell;
use crate::protocol::ProtocolId;
use crate::scheduler::{Event, EventKind};
use crate::time::SubTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VictimSelector {
    /// Uniformly among the mobile agents in the region.
    RandomMobile,
    /// The k-th agent to enter (1-based), if it is still mobile.
    Entered(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    /// Uniformly among free cells without a mobile agent.
    RandomFreeCell,
    Cell(Cell),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Crash(VictimSelector),
    Teleport(VictimSelector, Destination),
    Corrupt(VictimSelector, u32),
}

/// A fault scheduled at a step and sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEvent {
    pub step: u64,
    pub substep: u32,
    pub kind: FaultKind,
}

impl FaultEvent {
    pub fn time(&self, m: u32) -> SubTime {
        SubTime::new(self.step, self.substep, m)
    }
}

/// Fault events in time order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    events: Vec<FaultEvent>,
}

impl FaultPlan {
    pub fn new(mut events: Vec<FaultEvent>) -> Self {
        events.sort_by_key(|e| (e.step, e.substep));
        Self { events }
    }

    pub fn events(&self) -> &[FaultEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `crashes` random-mobile crashes at uniform sub-times in `[1, horizon)`.
    pub fn random_crashes(rng: &mut impl Rng, crashes: usize, horizon: u64, m: u32) -> Self {
        Self::new(
            (0..crashes)
                .map(|_| FaultEvent {
                    step: rng.gen_range(1..horizon.max(2)),
                    substep: rng.gen_range(0..m),
                    kind: FaultKind::Crash(VictimSelector::RandomMobile),
                })
                .collect(),
        )
    }

    /// Random crashes and random-cell teleports mixed together.
    pub fn random_crashes_and_teleports(
        rng: &mut impl Rng,
        crashes: usize,
        teleports: usize,
        horizon: u64,
        m: u32,
    ) -> Self {
        let mut plan = Self::random_crashes(rng, crashes, horizon, m).events;
        plan.extend((0..teleports).map(|_| FaultEvent {
            step: rng.gen_range(1..horizon.max(2)),
            substep: rng.gen_range(0..m),
            kind: FaultKind::Teleport(VictimSelector::RandomMobile, Destination::RandomFreeCell),
        }));
        Self::new(plan)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("bad fault tuple {text:?}: {reason}")]
pub struct FaultParseError {
    pub text: String,
    pub reason: &'static str,
}

fn parse_time(s: &str) -> Option<(u64, u32)> {
    match s.split_once(':') {
        Some((k, j)) => Some((k.trim().parse().ok()?, j.trim().parse().ok()?)),
        None => Some((s.trim().parse().ok()?, 0)),
    }
}

fn parse_selector(s: &str) -> Option<VictimSelector> {
    match s.trim() {
        "random" => Some(VictimSelector::RandomMobile),
        other => {
            let k: u32 = other.strip_prefix("entered=")?.trim().parse().ok()?;
            (k >= 1).then_some(VictimSelector::Entered(k))
        }
    }
}

fn parse_destination(s: &str) -> Option<Destination> {
    match s.trim() {
        "random-cell" => Some(Destination::RandomFreeCell),
        other => {
            let (x, y) = other.strip_prefix("cell=")?.split_once(':')?;
            Some(Destination::Cell(Cell::new(x.trim().parse().ok()?, y.trim().parse().ok()?)))
        }
    }
}

impl FromStr for FaultEvent {
    type Err = FaultParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |reason| FaultParseError { text: text.to_owned(), reason };
        let inner = text
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| err("expected a parenthesized tuple"))?;
        let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
        let (step, substep) = parse_time(fields[0]).ok_or_else(|| err("bad time"))?;
        let selector = || {
            fields.get(2).and_then(|s| parse_selector(s)).ok_or_else(|| err("bad victim selector"))
        };
        let kind = match (fields.get(1).copied(), fields.len()) {
            (Some("crash"), 3) => FaultKind::Crash(selector()?),
            (Some("teleport"), 4) => FaultKind::Teleport(
                selector()?,
                parse_destination(fields[3]).ok_or_else(|| err("bad teleport destination"))?,
            ),
            (Some("corrupt"), 4) => FaultKind::Corrupt(
                selector()?,
                fields[3].parse().map_err(|_| err("bad step count"))?,
            ),
            _ => return Err(err("expected crash/3, teleport/4 or corrupt/4 fields")),
        };
        Ok(Self { step, substep, kind })
    }
}

impl fmt::Display for FaultEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sel = |s: &VictimSelector| match s {
            VictimSelector::RandomMobile => "random".to_owned(),
            VictimSelector::Entered(k) => format!("entered={k}"),
        };
        write!(f, "({}:{}, ", self.step, self.substep)?;
        match &self.kind {
            FaultKind::Crash(s) => write!(f, "crash, {})", sel(s)),
            FaultKind::Teleport(s, Destination::RandomFreeCell) => {
                write!(f, "teleport, {}, random-cell)", sel(s))
            }
            FaultKind::Teleport(s, Destination::Cell(c)) => {
                write!(f, "teleport, {}, cell={}:{})", sel(s), c.x, c.y)
            }
            FaultKind::Corrupt(s, v) => write!(f, "corrupt, {}, {v})", sel(s)),
        }
    }
}

/// Why a fault event had no effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFault {
    pub time: SubTime,
    pub event: FaultEvent,
    pub reason: &'static str,
}

fn resolve_victim(world: &WorldState, sel: VictimSelector, rng: &mut impl Rng) -> Option<AgentId> {
    match sel {
        VictimSelector::RandomMobile => {
            let mobiles: Vec<AgentId> = world.mobiles().map(|a| a.id).collect();
            mobiles.choose(rng).copied()
        }
        VictimSelector::Entered(k) => {
            let a = world.agents().get(k as usize - 1)?;
            (a.in_region() && a.is_mobile()).then_some(a.id)
        }
    }
}

/// Applies one fault to the world at its scheduled time.
pub fn apply_fault(
    world: &mut WorldState,
    fault: &FaultEvent,
    protocol: ProtocolId,
    rng: &mut impl Rng,
) -> Result<Vec<Event>, SkippedFault> {
    let time = world.clock();
    let skip = |reason| SkippedFault { time, event: *fault, reason };
    let selector = match fault.kind {
        FaultKind::Crash(s) | FaultKind::Teleport(s, _) | FaultKind::Corrupt(s, _) => s,
    };
    if matches!(fault.kind, FaultKind::Corrupt(..)) && !protocol.stores_step_count() {
        return Err(skip("agents of this protocol hold no step count"));
    }
    let victim = resolve_victim(world, selector, rng).ok_or_else(|| skip("no eligible mobile agent"))?;
    let event = |kind| Event { time, agent: victim, kind };
    match fault.kind {
        FaultKind::Crash(_) => {
            world.crash(victim, time).map_err(|_| skip("victim is not mobile"))?;
            Ok(vec![event(EventKind::Crashed)])
        }
        FaultKind::Teleport(_, dest) => {
            let from = world.agent(victim).position;
            let to = match dest {
                Destination::Cell(c) if world.region().is_free(c) && world.mobile_at(c).is_none() => c,
                Destination::Cell(_) => return Err(skip("destination is not a mobile-free cell")),
                Destination::RandomFreeCell => {
                    let open: Vec<Cell> = world
                        .region()
                        .cells()
                        .iter()
                        .copied()
                        .filter(|&c| world.mobile_at(c).is_none())
                        .collect();
                    *open.choose(rng).ok_or_else(|| skip("every cell holds a mobile agent"))?
                }
            };
            world.teleport(victim, to).map_err(|_| skip("teleport rejected"))?;
            Ok(vec![event(EventKind::Teleported { from, to })])
        }
        FaultKind::Corrupt(_, step_count) => {
            world.set_step_count(victim, step_count).map_err(|_| skip("victim is not mobile"))?;
            Ok(vec![event(EventKind::Corrupted { step_count })])
        }
    }
}
