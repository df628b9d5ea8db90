use std::fmt::Write as _;

use crate::agent::{AgentState, WorldState};
use crate::grid::Cell;
use crate::scheduler::{ReplayError, Trace};
use crate::time::SubTime;

/// Draws the world one character per cell.
///
/// `#` obstacle, `.` empty, `o`/`c` open/closed beacon, `O`/`C` the same with
/// a mobile agent above, `m` a mobile agent over no beacon. With
/// `step_counts`, a second grid follows giving each beacon's step count.
pub fn render_world(world: &WorldState, step_counts: bool) -> String {
    let region = world.region();
    let mut out = String::new();
    for y in 0..region.height() {
        for x in 0..region.width() {
            let c = Cell::new(x, y);
            let ch = if !region.is_free(c) {
                '#'
            } else {
                let mobile = world.mobile_at(c).is_some();
                match (world.beacon_at(c).map(|b| b.state), mobile) {
                    (None, false) => '.',
                    (None, true) => 'm',
                    (Some(AgentState::ClosedBeacon), false) => 'c',
                    (Some(AgentState::ClosedBeacon), true) => 'C',
                    (Some(_), false) => 'o',
                    (Some(_), true) => 'O',
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    if step_counts {
        let width = world
            .region()
            .cells()
            .iter()
            .filter_map(|&c| world.beacon_at(c))
            .map(|b| b.step_count.to_string().len())
            .max()
            .unwrap_or(1);
        out.push('\n');
        for y in 0..region.height() {
            let row: Vec<String> = (0..region.width())
                .map(|x| {
                    let c = Cell::new(x, y);
                    let text = match world.beacon_at(c) {
                        Some(b) => b.step_count.to_string(),
                        None if region.is_free(c) => ".".to_owned(),
                        None => "#".to_owned(),
                    };
                    format!("{text:>width$}")
                })
                .collect();
            writeln!(out, "{}", row.join(" ")).expect("writing to a String");
        }
    }
    out
}

/// The world of `trace` as it stood at `at`.
pub fn render_trace(trace: &Trace, at: SubTime, step_counts: bool) -> Result<String, ReplayError> {
    Ok(render_world(&trace.world_at(at)?, step_counts))
}
