//! Exact sub-step clock.
//!
//! Every integer time step is split into `M` sub-steps of length `1/M`. A
//! [`SubTime`] is the rational `step + substep / M`, kept as integers so that
//! ordering and ceilings never pass through floating point.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A point on the sub-step grid: `step + substep / m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubTime {
    pub step: u64,
    pub substep: u32,
    pub m: u32,
}

impl SubTime {
    pub fn new(step: u64, substep: u32, m: u32) -> Self {
        debug_assert!(m >= 1 && substep < m, "substep {substep} out of range for M={m}");
        Self { step, substep, m }
    }

    pub fn zero(m: u32) -> Self {
        Self::new(0, 0, m)
    }

    /// Start of integer step `step`.
    pub fn at_step(step: u64, m: u32) -> Self {
        Self::new(step, 0, m)
    }

    pub fn from_ticks(ticks: u64, m: u32) -> Self {
        Self::new(ticks / u64::from(m), (ticks % u64::from(m)) as u32, m)
    }

    /// Number of whole sub-steps since time zero.
    pub fn ticks(self) -> u64 {
        self.step * u64::from(self.m) + u64::from(self.substep)
    }

    /// `⌈t⌉`.
    pub fn ceil_step(self) -> u64 {
        if self.substep == 0 {
            self.step
        } else {
            self.step + 1
        }
    }

    pub fn is_integer(self) -> bool {
        self.substep == 0
    }

    /// The next grid point, `t + dt`.
    pub fn next(self) -> Self {
        Self::from_ticks(self.ticks() + 1, self.m)
    }

    /// The previous grid point, `t - dt`, or `None` at time zero.
    pub fn prev(self) -> Option<Self> {
        self.ticks().checked_sub(1).map(|t| Self::from_ticks(t, self.m))
    }

    pub fn as_f64(self) -> f64 {
        self.step as f64 + f64::from(self.substep) / f64::from(self.m)
    }

    /// `(numerator, denominator)` of the rational value, unreduced (denominator `M`).
    pub fn as_fraction(self) -> (u64, u32) {
        (self.ticks(), self.m)
    }
}

impl PartialOrd for SubTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SubTime {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.m, other.m, "comparing times on different sub-step grids");
        self.ticks().cmp(&other.ticks())
    }
}

impl fmt::Display for SubTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.substep == 0 {
            write!(f, "{}", self.step)
        } else {
            write!(f, "{}+{}/{}", self.step, self.substep, self.m)
        }
    }
}
