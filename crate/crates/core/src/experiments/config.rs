use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::ExperimentError;
use crate::faults::{FaultEvent, FaultPlan};
use crate::grid::RegionSpec;
use crate::protocol::ProtocolId;
use crate::scheduler::{RunConfig, WakeMode};

/// A single-run config file. Every key is optional so that command-line
/// flags can fill or override it.
///
/// ```toml
/// region = "square:7"
/// algorithm = "slug"
/// delta_t = 2
/// m = 100
/// seed = 7
/// scheduler = "random"
/// budget = 2000
/// faults = ["(40, crash, random)", "(60:5, teleport, random, random-cell)"]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub region: Option<String>,
    pub algorithm: Option<String>,
    pub delta_t: Option<u64>,
    pub m: Option<u32>,
    pub seed: Option<u64>,
    pub scheduler: Option<String>,
    pub budget: Option<u64>,
    #[serde(default)]
    pub faults: Vec<String>,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::parse(&text)
    }

    /// Keys set in `other` replace ours; its faults replace ours when non-empty.
    pub fn overridden_by(self, other: RunFile) -> Self {
        Self {
            region: other.region.or(self.region),
            algorithm: other.algorithm.or(self.algorithm),
            delta_t: other.delta_t.or(self.delta_t),
            m: other.m.or(self.m),
            seed: other.seed.or(self.seed),
            scheduler: other.scheduler.or(self.scheduler),
            budget: other.budget.or(self.budget),
            faults: if other.faults.is_empty() { self.faults } else { other.faults },
        }
    }

    pub fn to_config(&self) -> Result<RunConfig, ExperimentError> {
        let region = self.region.as_deref().ok_or_else(|| ExperimentError::Invalid("no region given".into()))?;
        let region = region.parse::<RegionSpec>()?.load()?;
        let protocol: ProtocolId = self.algorithm.as_deref().unwrap_or("dllg").parse()?;
        let mut config = RunConfig::new(Arc::new(region), protocol);
        if let Some(dt) = self.delta_t {
            config = config.delta_t(dt);
        }
        if let Some(m) = self.m {
            config = config.m(m);
        }
        if let Some(seed) = self.seed {
            config = config.seed(seed);
        }
        if let Some(mode) = &self.scheduler {
            config = config.wake_mode(mode.parse::<WakeMode>()?);
        }
        if let Some(budget) = self.budget {
            config = config.step_budget(budget);
        }
        let events = self.faults.iter().map(|f| f.parse::<FaultEvent>()).collect::<Result<Vec<_>, _>>()?;
        Ok(config.faults(FaultPlan::new(events)))
    }
}
