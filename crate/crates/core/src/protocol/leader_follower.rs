//! Breadth-first and depth-first leader-follower benchmarks.
//!
//! These robots carry no step counts. The oldest robot in the region is the
//! leader; every other robot trails the robot that entered just before it.
//! Both variants grow an exploration tree rooted at the entry point.
//!
//! Depth-first: the leader descends into unexplored cells and parks at a dead
//! end once everything below it is parked, and the next robot takes over.
//! Parked robots close immediately, so the entry cell parks last and the
//! entry-point observer sees completion.
//!
//! Breadth-first: cells are claimed in breadth-first discovery order. The
//! leader walks the tree to the oldest unclaimed cell and parks there, which
//! reveals that cell's unexplored neighbors. Parked robots stay open until
//! the last cell is claimed, when completion is broadcast to all of them.
//!
//! The robots sense more than the gradient agents do: the shape of the
//! exploration tree and the position of the robot they follow, standing in
//! for the radio links of the original algorithms.

use std::collections::VecDeque;

use crate::grid::{Cell, Region};

use super::{Action, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfVariant {
    BreadthFirst,
    DepthFirst,
}

/// Extended neighborhood handed to a leader-follower robot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderFollowerView {
    pub at: Cell,
    pub is_leader: bool,
    /// Adjacent cells nobody has entered yet, in N, E, S, W order.
    pub unvisited: Vec<Cell>,
    /// Tree children that are free and still have unparked cells below.
    pub open_children: Vec<Cell>,
    /// Every tree descendant of `at` is parked.
    pub subtree_done: bool,
    /// Next tree cell toward the robot ahead.
    pub toward_leader: Option<Cell>,
    /// Next tree cell toward the cell the leader is to claim, or `at` itself
    /// once it stands on it.
    pub toward_claim: Option<Cell>,
}

impl LeaderFollowerView {
    pub fn new(at: Cell, is_leader: bool) -> Self {
        Self {
            at,
            is_leader,
            unvisited: Vec::new(),
            open_children: Vec::new(),
            subtree_done: false,
            toward_leader: None,
            toward_claim: None,
        }
    }
}

fn pick(cells: &[Cell], tie: &mut impl TieBreak) -> Option<Cell> {
    match cells.len() {
        0 => None,
        1 => Some(cells[0]),
        len => Some(cells[tie.pick(len)]),
    }
}

fn go(cell: Option<Cell>) -> Option<Action> {
    cell.map(|target| Action::Move { target, step_count: 0 })
}

/// Decides one robot's move.
pub fn leader_follower_rule(view: &LeaderFollowerView, variant: LfVariant, tie: &mut impl TieBreak) -> Action {
    let park = Action::SettleHere { step_count: 0 };
    let action = match (variant, view.is_leader) {
        (_, false) => go(view.toward_leader),
        (LfVariant::DepthFirst, true) => go(pick(&view.open_children, tie))
            .or_else(|| go(pick(&view.unvisited, tie)))
            .or_else(|| view.subtree_done.then_some(park)),
        (LfVariant::BreadthFirst, true) => match view.toward_claim {
            Some(c) if c == view.at => Some(park),
            other => go(other),
        },
    };
    action.unwrap_or(Action::NoOp)
}

/// Depth-first exploration tree.
#[derive(Debug, Clone)]
pub(crate) struct ExplorationTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    visited: Vec<bool>,
    parked: Vec<bool>,
    /// Visited but unparked cells in each subtree.
    open_below: Vec<u32>,
    /// Depth-first stack from the root to the deepest open cell.
    stack: Vec<usize>,
    stack_pos: Vec<Option<usize>>,
}

impl ExplorationTree {
    pub(crate) fn new(n: usize, root: usize) -> Self {
        let mut tree = Self {
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            visited: vec![false; n],
            parked: vec![false; n],
            open_below: vec![0; n],
            stack: Vec::new(),
            stack_pos: vec![None; n],
        };
        tree.visited[root] = true;
        tree.open_below[root] = 1;
        tree.push(root);
        tree
    }

    fn push(&mut self, i: usize) {
        self.stack_pos[i] = Some(self.stack.len());
        self.stack.push(i);
    }

    fn ancestors_inclusive(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(i), |&j| self.parent[j])
    }

    /// Records a robot stepping from `from` into `to`.
    pub(crate) fn enter(&mut self, from: usize, to: usize) {
        if self.visited[to] {
            return;
        }
        self.visited[to] = true;
        self.parent[to] = Some(from);
        self.children[from].push(to);
        let path: Vec<usize> = self.ancestors_inclusive(to).collect();
        for j in path {
            self.open_below[j] += 1;
        }
        if self.stack.last() == Some(&from) {
            self.push(to);
        }
    }

    pub(crate) fn park(&mut self, i: usize) {
        self.parked[i] = true;
        let path: Vec<usize> = self.ancestors_inclusive(i).collect();
        for j in path {
            self.open_below[j] -= 1;
        }
        if self.stack.last() == Some(&i) {
            self.stack.pop();
            self.stack_pos[i] = None;
        }
    }

    /// Builds the view of a robot at `at`. `occupied` reports robots
    /// (moving or parked) on a cell.
    pub(crate) fn view(
        &self,
        region: &Region,
        at: usize,
        is_leader: bool,
        occupied: impl Fn(usize) -> bool,
    ) -> LeaderFollowerView {
        let mut view = LeaderFollowerView::new(region.cell_at(at), is_leader);
        view.unvisited = region
            .adjacent_indices(at)
            .filter(|&j| !self.visited[j] && !occupied(j))
            .map(|j| region.cell_at(j))
            .collect();
        view.open_children = self.children[at]
            .iter()
            .filter(|&&c| self.open_below[c] > 0 && !occupied(c))
            .map(|&c| region.cell_at(c))
            .collect();
        view.toward_leader = self
            .stack_pos[at]
            .and_then(|p| self.stack.get(p + 1))
            .filter(|&&next| !occupied(next))
            .map(|&next| region.cell_at(next));
        view.subtree_done = !self.parked[at] && self.open_below[at] == 1;
        view
    }
}

/// Breadth-first claim order over a tree of discovered cells.
#[derive(Debug, Clone)]
pub(crate) struct BreadthFirstClaims {
    parent: Vec<Option<usize>>,
    depth: Vec<u32>,
    discovered: Vec<bool>,
    queue: VecDeque<usize>,
}

impl BreadthFirstClaims {
    pub(crate) fn new(n: usize, root: usize) -> Self {
        let mut discovered = vec![false; n];
        discovered[root] = true;
        Self { parent: vec![None; n], depth: vec![0; n], discovered, queue: VecDeque::from([root]) }
    }

    /// The cell to be claimed next.
    pub(crate) fn next_claim(&self) -> Option<usize> {
        self.queue.front().copied()
    }

    /// Claims the front cell and discovers its unexplored neighbors.
    pub(crate) fn claim(&mut self, region: &Region, at: usize) {
        debug_assert_eq!(self.next_claim(), Some(at));
        self.queue.pop_front();
        for j in region.adjacent_indices(at) {
            if !self.discovered[j] {
                self.discovered[j] = true;
                self.parent[j] = Some(at);
                self.depth[j] = self.depth[at] + 1;
                self.queue.push_back(j);
            }
        }
    }

    pub(crate) fn all_claimed(&self) -> bool {
        self.queue.is_empty()
    }

    /// First cell after `from` on the tree path to `to`.
    pub(crate) fn next_hop(&self, from: usize, to: usize) -> Option<usize> {
        if from == to {
            return None;
        }
        let mut v = to;
        while self.depth[v] > self.depth[from] + 1 {
            v = self.parent[v].expect("non-root has a parent");
        }
        if self.depth[v] == self.depth[from] + 1 && self.parent[v] == Some(from) {
            Some(v)
        } else {
            self.parent[from]
        }
    }

    pub(crate) fn view(&self, region: &Region, at: usize, ahead: Option<usize>) -> LeaderFollowerView {
        let mut view = LeaderFollowerView::new(region.cell_at(at), ahead.is_none());
        match ahead {
            Some(a) => view.toward_leader = self.next_hop(at, a).map(|j| region.cell_at(j)),
            None => {
                view.toward_claim = self
                    .next_claim()
                    .map(|c| self.next_hop(at, c).unwrap_or(c))
                    .map(|j| region.cell_at(j))
            }
        }
        view
    }
}
