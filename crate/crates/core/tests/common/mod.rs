//! A deliberately plain step-by-step re-implementation of DLLG and SLUG under
//! synchronous wake-ups, for event-by-event comparison with the library.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use beacon_cover::grid::parse_region;
use beacon_cover::scheduler::{default_budget, EventKind};
use beacon_cover::{run, AgentState, Outcome, ProtocolId, RunConfig, WakeMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Pos = (i32, i32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ev {
    Entered(usize, Pos),
    Woke(usize),
    Moved(usize, Pos, Pos, u32),
    Settled(usize, Pos, Pos, u32),
    Closed(usize),
    Lost(usize, Pos),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Mobile,
    Open,
    Closed,
}

#[derive(Debug, Clone)]
struct Bot {
    kind: Kind,
    s: u32,
    at: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Act {
    SettleHere(u32),
    SettleAt(Pos, u32),
    Go(Pos, u32),
    Close,
}

struct Oracle {
    cells: BTreeSet<Pos>,
    entry: Pos,
    dual: bool,
    bots: Vec<Bot>,
    beacon: HashMap<Pos, usize>,
    mobile: HashMap<Pos, usize>,
}

/// Neighbors in N, E, S, W order.
fn around(p: Pos) -> [Pos; 4] {
    [(p.0, p.1 - 1), (p.0 + 1, p.1), (p.0, p.1 + 1), (p.0 - 1, p.1)]
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> Option<T> {
    match xs.len() {
        0 => None,
        1 => Some(xs[0]),
        n => Some(xs[rng.gen_range(0..n)]),
    }
}

impl Oracle {
    fn nbrs(&self, p: Pos) -> Vec<Pos> {
        around(p).into_iter().filter(|q| self.cells.contains(q)).collect()
    }

    fn beacon_s(&self, p: Pos) -> Option<(u32, bool)> {
        self.beacon.get(&p).map(|&b| (self.bots[b].s, self.bots[b].kind == Kind::Closed))
    }

    fn lone(&self, p: Pos) -> Option<(u32, bool)> {
        if self.mobile.contains_key(&p) {
            None
        } else {
            self.beacon_s(p)
        }
    }

    fn decide(&self, id: usize, rng: &mut ChaCha8Rng) -> Option<Act> {
        let me = &self.bots[id];
        let p = me.at;
        let ns = self.nbrs(p);
        match me.kind {
            Kind::Closed => None,
            Kind::Open => {
                let all_have = ns.iter().all(|q| self.beacon.contains_key(q));
                let higher_closed = ns.iter().filter_map(|&q| self.beacon_s(q)).all(|(s, c)| s <= me.s || c);
                let hover = self.mobile.contains_key(&p);
                (all_have && higher_closed && (hover || !self.dual)).then_some(Act::Close)
            }
            Kind::Mobile => {
                if !self.beacon.contains_key(&p) {
                    return Some(Act::SettleHere(me.s));
                }
                let empty: Vec<Pos> = ns
                    .iter()
                    .copied()
                    .filter(|q| !self.beacon.contains_key(q) && !self.mobile.contains_key(q))
                    .collect();
                if let Some(q) = pick(rng, &empty) {
                    return Some(Act::SettleAt(q, me.s + 1));
                }
                if self.dual {
                    let up: Vec<Pos> =
                        ns.iter().copied().filter(|&q| self.lone(q).is_some_and(|(s, _)| s == me.s + 1)).collect();
                    return pick(rng, &up).map(|q| Act::Go(q, me.s + 1));
                }
                let up: Vec<(Pos, u32)> = ns
                    .iter()
                    .filter_map(|&q| self.lone(q).filter(|&(s, c)| !c && s > me.s).map(|(s, _)| (q, s)))
                    .collect();
                if let Some((q, s)) = pick(rng, &up) {
                    return Some(Act::Go(q, s));
                }
                if self.beacon_s(p).is_some_and(|(_, c)| c) {
                    let down: Vec<(Pos, u32)> = ns
                        .iter()
                        .filter_map(|&q| self.lone(q).filter(|&(s, _)| s < me.s).map(|(s, _)| (q, s)))
                        .collect();
                    return pick(rng, &down).map(|(q, s)| Act::Go(q, s));
                }
                None
            }
        }
    }

    fn wake_all(&mut self, ids: &[usize], rng: &mut ChaCha8Rng, log: &mut Vec<Ev>) {
        let mut acts = Vec::new();
        for &id in ids {
            log.push(Ev::Woke(id));
            if let Some(a) = self.decide(id, rng) {
                acts.push((id, a));
            }
        }
        // Contested cells: keyed by (row-major cell, beacon layer before mobile layer).
        let mut claims: Vec<((i32, i32, u8), usize)> = Vec::new();
        for (k, &(id, a)) in acts.iter().enumerate() {
            let key = match a {
                Act::SettleHere(_) => Some((self.bots[id].at, 0)),
                Act::SettleAt(q, _) => Some((q, 0)),
                Act::Go(q, _) => Some((q, 1)),
                Act::Close => None,
            };
            if let Some((q, layer)) = key {
                claims.push(((q.1, q.0, layer), k));
            }
        }
        claims.sort();
        let mut lost = vec![false; acts.len()];
        let mut i = 0;
        while i < claims.len() {
            let j = (i..claims.len()).find(|&j| claims[j].0 != claims[i].0).unwrap_or(claims.len());
            if j - i > 1 {
                let win = rng.gen_range(0..j - i);
                for (n, &(key, k)) in claims[i..j].iter().enumerate() {
                    if n != win {
                        lost[k] = true;
                        log.push(Ev::Lost(acts[k].0, (key.1, key.0)));
                    }
                }
            }
            i = j;
        }
        for (k, &(id, a)) in acts.iter().enumerate() {
            if lost[k] {
                continue;
            }
            let from = self.bots[id].at;
            match a {
                Act::SettleHere(s) | Act::SettleAt(_, s) => {
                    let to = if let Act::SettleAt(q, _) = a { q } else { from };
                    self.mobile.remove(&from);
                    self.beacon.insert(to, id);
                    self.bots[id] = Bot { kind: Kind::Open, s, at: to };
                    log.push(Ev::Settled(id, from, to, s));
                }
                Act::Go(q, s) => {
                    self.mobile.remove(&from);
                    self.mobile.insert(q, id);
                    self.bots[id].at = q;
                    self.bots[id].s = s;
                    log.push(Ev::Moved(id, from, q, s));
                }
                Act::Close => {
                    self.bots[id].kind = Kind::Closed;
                    log.push(Ev::Closed(id));
                }
            }
        }
    }

    fn entry_closed(&self) -> bool {
        self.beacon_s(self.entry).is_some_and(|(_, c)| c)
    }

    fn simulate(mut self, delta_t: u64, seed: u64, budget: u64) -> Run {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut last_window = None;
        for step in 0..budget {
            let present: Vec<usize> = (0..self.bots.len()).collect();
            let mut subs = vec![0];
            if !present.is_empty() {
                subs.push(1);
            }
            for j in subs {
                let mut log = Vec::new();
                if j == 1 {
                    self.wake_all(&present, &mut rng, &mut log);
                }
                if self.entry_closed() {
                    out.extend(log.into_iter().map(|e| ((step, j), e)));
                    return (out, (step, j), true);
                }
                let window = step / delta_t;
                if last_window != Some(window) && !self.mobile.contains_key(&self.entry) {
                    let id = self.bots.len();
                    self.bots.push(Bot { kind: Kind::Mobile, s: 0, at: self.entry });
                    self.mobile.insert(self.entry, id);
                    last_window = Some(window);
                    log.push(Ev::Entered(id, self.entry));
                }
                out.extend(log.into_iter().map(|e| ((step, j), e)));
            }
        }
        (out, (budget, 0), false)
    }
}

/// Every fixed polyomino with up to `max` cells, normalized to the origin.
pub fn polyominoes(max: usize) -> Vec<BTreeSet<Pos>> {
    let normalize = |s: &BTreeSet<Pos>| -> BTreeSet<Pos> {
        let mx = s.iter().map(|p| p.0).min().unwrap();
        let my = s.iter().map(|p| p.1).min().unwrap();
        s.iter().map(|p| (p.0 - mx, p.1 - my)).collect()
    };
    let mut level: BTreeSet<BTreeSet<Pos>> = BTreeSet::from([BTreeSet::from([(0, 0)])]);
    let mut all: Vec<BTreeSet<Pos>> = level.iter().cloned().collect();
    for _ in 1..max {
        let mut next = BTreeSet::new();
        for shape in &level {
            for p in shape {
                for q in around(*p) {
                    if !shape.contains(&q) {
                        let mut grown = shape.clone();
                        grown.insert(q);
                        next.insert(normalize(&grown));
                    }
                }
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

pub fn to_text(cells: &BTreeSet<Pos>, entry: Pos) -> String {
    let w = cells.iter().map(|p| p.0).max().unwrap() + 1;
    let h = cells.iter().map(|p| p.1).max().unwrap() + 1;
    let mut s = String::new();
    for y in 0..h {
        for x in 0..w {
            s.push(if (x, y) == entry {
                'E'
            } else if cells.contains(&(x, y)) {
                '.'
            } else {
                '#'
            });
        }
        s.push('\n');
    }
    s
}

pub fn library_events(config: &RunConfig) -> Run {
    let trace = run(config).unwrap();
    let pos = |c: beacon_cover::Cell| (c.x as i32, c.y as i32);
    let events = trace
        .events
        .iter()
        .map(|e| {
            let id = e.agent.index();
            let ev = match e.kind {
                EventKind::Entered { cell } => Ev::Entered(id, pos(cell)),
                EventKind::Woke => Ev::Woke(id),
                EventKind::Moved { from, to, step_count } => Ev::Moved(id, pos(from), pos(to), step_count),
                EventKind::Settled { from, at, step_count, state } => {
                    assert_eq!(state, AgentState::OpenBeacon);
                    Ev::Settled(id, pos(from), pos(at), step_count)
                }
                EventKind::Closed => Ev::Closed(id),
                EventKind::ConflictLost { target } => Ev::Lost(id, pos(target)),
                other => panic!("unexpected event {other:?} in a fault-free run"),
            };
            ((e.time.step, e.time.substep), ev)
        })
        .collect();
    let end = trace.end_time();
    (events, (end.step, end.substep), matches!(trace.outcome, Outcome::Terminated(_)))
}

/// Events with their (step, substep), the end time and whether the run terminated.
pub type Run = (Vec<((u64, u32), Ev)>, (u64, u32), bool);

/// Runs DLLG or SLUG on `shape` entered at `entry` through both the oracle
/// and the library. `Err` describes the first divergence.
pub fn compare(shape: &BTreeSet<Pos>, entry: Pos, protocol: ProtocolId, seed: u64) -> Result<Run, String> {
    let region = Arc::new(parse_region(&to_text(shape, entry)).unwrap());
    let config = RunConfig::new(region, protocol).delta_t(2).seed(seed).wake_mode(WakeMode::Synchronous);
    let oracle = Oracle {
        cells: shape.clone(),
        entry,
        dual: protocol == ProtocolId::Dllg,
        bots: Vec::new(),
        beacon: HashMap::new(),
        mobile: HashMap::new(),
    };
    let expected = oracle.simulate(2, seed, default_budget(shape.len(), 2));
    let got = library_events(&config);
    if got == expected {
        return Ok(expected);
    }
    let k = got.0.iter().zip(&expected.0).position(|(a, b)| a != b);
    Err(format!(
        "{protocol} seed {seed} diverges on\n{}first difference at event {k:?}: {:?} vs {:?}",
        to_text(shape, entry),
        k.map(|k| &got.0[k]),
        k.map(|k| &expected.0[k]),
    ))
}
