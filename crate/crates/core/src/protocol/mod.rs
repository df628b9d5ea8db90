//! Local action rules executed by an agent when it wakes up.
//!
//! Every rule is a pure function of the sensed [`Neighborhood`], the agent's
//! own record and a tie-break source. Candidate cells are gathered in
//! N, E, S, W order and one is drawn uniformly when several qualify.

pub mod leader_follower;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentRecord, AgentState, CellView, Neighborhood};
use crate::grid::Cell;

pub use leader_follower::{leader_follower_rule, LeaderFollowerView};

/// The effect an agent wants to have this wake-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Become a beacon on the current cell.
    SettleHere { step_count: u32 },
    /// Fly to an adjacent empty cell and become a beacon there.
    MoveAndSettle { target: Cell, step_count: u32 },
    Move { target: Cell, step_count: u32 },
    Close,
    NoOp,
}

impl Action {
    pub fn target(&self) -> Option<Cell> {
        match self {
            Self::MoveAndSettle { target, .. } | Self::Move { target, .. } => Some(*target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolId {
    /// Dual-layer, limited gradient: ascend only to `s + 1`.
    Dllg,
    /// Single-layer, unlimited gradient, with descent from closed beacons.
    Slug,
    /// Dual-layer, unlimited gradient.
    Dlug,
    /// Dual-layer tree traversal.
    Dltt,
    /// Stateless SLUG: step counts are read from the beacon underneath.
    RobustSlug,
    Bflf,
    Dflf,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 7] = [
        Self::Dllg,
        Self::Slug,
        Self::Dlug,
        Self::Dltt,
        Self::RobustSlug,
        Self::Bflf,
        Self::Dflf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dllg => "dllg",
            Self::Slug => "slug",
            Self::Dlug => "dlug",
            Self::Dltt => "dltt",
            Self::RobustSlug => "robust-slug",
            Self::Bflf => "bflf",
            Self::Dflf => "dflf",
        }
    }

    /// Beacons close only with a mobile agent hovering over them.
    pub fn is_dual_layer(self) -> bool {
        matches!(self, Self::Dllg | Self::Dlug | Self::Dltt)
    }

    pub fn is_leader_follower(self) -> bool {
        matches!(self, Self::Bflf | Self::Dflf)
    }

    /// Whether mobile agents carry a step count of their own.
    pub fn stores_step_count(self) -> bool {
        !matches!(self, Self::RobustSlug | Self::Bflf | Self::Dflf)
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown algorithm {0:?} (expected one of dllg, slug, dlug, dltt, robust-slug, bflf, dflf)")]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolId {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownProtocol(s.to_owned()))
    }
}

/// Source of the "arbitrary" choices the rules make.
pub trait TieBreak {
    /// Picks an index in `0..len`; `len` is at least 2.
    fn pick(&mut self, len: usize) -> usize;
}

impl<R: Rng> TieBreak for R {
    fn pick(&mut self, len: usize) -> usize {
        self.gen_range(0..len)
    }
}

/// Always takes the first candidate in N, E, S, W order.
#[derive(Debug, Default, Clone, Copy)]
pub struct FirstCandidate;

impl TieBreak for FirstCandidate {
    fn pick(&mut self, _len: usize) -> usize {
        0
    }
}

/// Up to four candidate cells, in sensing order.
#[derive(Debug, Default)]
struct Candidates {
    cells: [Option<(Cell, u32)>; 4],
    len: usize,
}

impl Candidates {
    fn collect<'a>(
        cells: impl Iterator<Item = &'a CellView>,
        mut keep: impl FnMut(&CellView) -> Option<u32>,
    ) -> Self {
        let mut out = Self::default();
        for c in cells {
            if let Some(s) = keep(c) {
                out.cells[out.len] = Some((c.cell, s));
                out.len += 1;
            }
        }
        out
    }

    fn choose(&self, tie: &mut impl TieBreak) -> Option<(Cell, u32)> {
        match self.len {
            0 => None,
            1 => self.cells[0],
            len => self.cells[tie.pick(len)],
        }
    }
}

/// A cell a mobile may settle into: no beacon, and no mobile unless
/// `under_mobiles` is set.
fn settle_target(c: &CellView, under_mobiles: bool) -> bool {
    !c.has_beacon() && (under_mobiles || !c.mobile)
}

/// A beacon with no mobile agent above it.
fn lone_beacon(c: &CellView) -> Option<crate::agent::BeaconView> {
    if c.mobile {
        None
    } else {
        c.beacon
    }
}

fn settle_into_empty(view: &Neighborhood, s: u32, under_mobiles: bool, tie: &mut impl TieBreak) -> Option<Action> {
    Candidates::collect(view.adjacent(), |c| settle_target(c, under_mobiles).then_some(s + 1))
        .choose(tie)
        .map(|(target, step_count)| Action::MoveAndSettle { target, step_count })
}

fn move_to(pick: Option<(Cell, u32)>) -> Option<Action> {
    pick.map(|(target, step_count)| Action::Move { target, step_count })
}

/// Beacon closing test shared by every gradient protocol: all neighbors hold
/// beacons and each higher neighbor is already closed. Dual-layer protocols
/// additionally need a mobile agent hovering over the beacon.
fn beacon_rule(view: &Neighborhood, me: &AgentRecord, needs_mobile: bool) -> Action {
    if me.state != AgentState::OpenBeacon {
        return Action::NoOp;
    }
    let covered = view.adjacent().all(CellView::has_beacon);
    let higher_closed = view
        .adjacent()
        .filter_map(|c| c.beacon)
        .all(|b| b.step_count <= me.step_count || b.closed);
    if covered && higher_closed && (view.center.mobile || !needs_mobile) {
        Action::Close
    } else {
        Action::NoOp
    }
}

/// Dual-layer mobile rule parameterized by which beacons are climbable.
fn dual_layer_mobile(
    view: &Neighborhood,
    me: &AgentRecord,
    tie: &mut impl TieBreak,
    climb: impl Fn(&CellView, u32) -> Option<u32>,
) -> Action {
    let s = me.step_count;
    if view.center.beacon.is_none() {
        return Action::SettleHere { step_count: s };
    }
    settle_into_empty(view, s, false, tie)
        .or_else(|| move_to(Candidates::collect(view.adjacent(), |c| climb(c, s)).choose(tie)))
        .unwrap_or(Action::NoOp)
}

/// Dual-Layer Limited Gradient.
pub fn dllg_rule(view: &Neighborhood, me: &AgentRecord, tie: &mut impl TieBreak) -> Action {
    match me.state {
        AgentState::Mobile => dual_layer_mobile(view, me, tie, |c, s| {
            lone_beacon(c).filter(|b| b.step_count == s + 1).map(|_| s + 1)
        }),
        _ => beacon_rule(view, me, true),
    }
}

/// Dual-Layer Unlimited Gradient: climb to any beacon with `s_j >= s + 1`
/// and adopt its step count.
pub fn dlug_rule(view: &Neighborhood, me: &AgentRecord, tie: &mut impl TieBreak) -> Action {
    match me.state {
        AgentState::Mobile => dual_layer_mobile(view, me, tie, |c, s| {
            lone_beacon(c).filter(|b| b.step_count > s).map(|b| b.step_count)
        }),
        _ => beacon_rule(view, me, true),
    }
}

/// Dual-Layer Tree Traversal: like DLLG, but only beacons that settled from
/// the agent's current cell are climbable.
pub fn dltt_rule(view: &Neighborhood, me: &AgentRecord, tie: &mut impl TieBreak) -> Action {
    let here = view.center.cell;
    match me.state {
        AgentState::Mobile => dual_layer_mobile(view, me, tie, |c, s| {
            lone_beacon(c)
                .filter(|b| b.step_count == s + 1 && b.parent == Some(here))
                .map(|_| s + 1)
        }),
        _ => beacon_rule(view, me, true),
    }
}

fn slug_mobile(view: &Neighborhood, s: u32, under_mobiles: bool, tie: &mut impl TieBreak) -> Action {
    let center_closed = view.center.beacon.is_some_and(|b| b.closed);
    settle_into_empty(view, s, under_mobiles, tie)
        .or_else(|| {
            move_to(
                Candidates::collect(view.adjacent(), |c| {
                    lone_beacon(c).filter(|b| !b.closed && b.step_count > s).map(|b| b.step_count)
                })
                .choose(tie),
            )
        })
        .or_else(|| {
            if !center_closed {
                return None;
            }
            move_to(
                Candidates::collect(view.adjacent(), |c| {
                    lone_beacon(c).filter(|b| b.step_count < s).map(|b| b.step_count)
                })
                .choose(tie),
            )
        })
        .unwrap_or(Action::NoOp)
}

/// Single-Layer Unlimited Gradient.
pub fn slug_rule(view: &Neighborhood, me: &AgentRecord, tie: &mut impl TieBreak) -> Action {
    match me.state {
        AgentState::Mobile => {
            if view.center.beacon.is_none() {
                return Action::SettleHere { step_count: me.step_count };
            }
            slug_mobile(view, me.step_count, false, tie)
        }
        _ => beacon_rule(view, me, false),
    }
}

/// SLUG with oblivious mobile agents.
///
/// A mobile reads its step count from the beacon underneath, waits when there
/// is none (except on an entry point, where it founds the root beacon), and
/// may settle underneath a stranded mobile agent.
pub fn robust_slug_rule(view: &Neighborhood, state: AgentState, tie: &mut impl TieBreak) -> Action {
    match state {
        AgentState::Mobile => match view.center.beacon {
            Some(b) => slug_mobile(view, b.step_count, true, tie),
            None if view.center_is_entry => Action::SettleHere { step_count: 0 },
            None => Action::NoOp,
        },
        AgentState::OpenBeacon => {
            // A beacon is the one beneath itself, so its count is in the center view.
            let step_count = view.center.beacon.map_or(0, |b| b.step_count);
            let covered = view.adjacent().all(CellView::has_beacon);
            let higher_closed = view
                .adjacent()
                .filter_map(|c| c.beacon)
                .all(|b| b.step_count <= step_count || b.closed);
            if covered && higher_closed {
                Action::Close
            } else {
                Action::NoOp
            }
        }
        AgentState::ClosedBeacon => Action::NoOp,
    }
}

/// Dispatches to the gradient rule of `protocol`.
///
/// # Panics
///
/// For the leader-follower protocols, which are driven by their own engine.
pub fn decide(protocol: ProtocolId, view: &Neighborhood, me: &AgentRecord, tie: &mut impl TieBreak) -> Action {
    match protocol {
        ProtocolId::Dllg => dllg_rule(view, me, tie),
        ProtocolId::Slug => slug_rule(view, me, tie),
        ProtocolId::Dlug => dlug_rule(view, me, tie),
        ProtocolId::Dltt => dltt_rule(view, me, tie),
        ProtocolId::RobustSlug => robust_slug_rule(view, me.state, tie),
        ProtocolId::Bflf | ProtocolId::Dflf => {
            panic!("{protocol} is not a gradient protocol")
        }
    }
}
