//! Simulation of beacon-based coverage of unknown grid regions by anonymous
//! agents that enter one at a time and communicate only through the beacons
//! they leave behind.

pub mod agent;
pub mod dag;
pub mod experiments;
pub mod faults;
pub mod grid;
pub mod metrics;
pub mod protocol;
pub mod scheduler;
pub mod time;

pub use agent::{AgentId, AgentRecord, AgentState, WorldState};
pub use faults::{FaultEvent, FaultPlan};
pub use grid::{Cell, Region, RegionKind, RegionSpec};
pub use metrics::RunMetrics;
pub use protocol::ProtocolId;
pub use scheduler::{run, Outcome, RunConfig, Trace, WakeMode};
pub use time::SubTime;
