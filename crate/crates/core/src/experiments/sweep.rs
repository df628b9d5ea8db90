use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::grid::{Region, RegionSpec};
use crate::metrics::RunMetrics;
use crate::protocol::ProtocolId;
use crate::scheduler::{run, RunConfig, WakeMode};

/// A grid of runs: algorithms × regions × ΔT values, `runs_per_cell` seeds each.
///
/// ```toml
/// algorithms = ["dllg", "slug"]
/// regions = ["linear:10", "linear:20", "square:7"]
/// delta_t = [1, 2, 4, 8]
/// runs_per_cell = 50
/// base_seed = 0
/// output = "sweep.csv"
/// ```
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub algorithms: Vec<ProtocolId>,
    pub regions: Vec<RegionSpec>,
    pub delta_t: Vec<u64>,
    pub m: u32,
    pub runs_per_cell: u64,
    pub base_seed: u64,
    pub wake_mode: WakeMode,
    pub step_budget: Option<u64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    algorithms: Vec<String>,
    regions: Vec<String>,
    delta_t: Vec<u64>,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default = "default_runs")]
    runs_per_cell: u64,
    #[serde(default)]
    base_seed: u64,
    scheduler: Option<String>,
    budget: Option<u64>,
    output: Option<PathBuf>,
}

fn default_m() -> u32 {
    100
}

fn default_runs() -> u64 {
    50
}

impl SweepSpec {
    pub fn new(algorithms: Vec<ProtocolId>, regions: Vec<RegionSpec>, delta_t: Vec<u64>) -> Self {
        Self {
            algorithms,
            regions,
            delta_t,
            m: default_m(),
            runs_per_cell: default_runs(),
            base_seed: 0,
            wake_mode: WakeMode::RandomUniform,
            step_budget: None,
            output: None,
        }
    }

    pub fn runs_per_cell(mut self, runs: u64) -> Self {
        self.runs_per_cell = runs;
        self
    }

    pub fn base_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let f: SweepFile = toml::from_str(text)?;
        Ok(Self {
            algorithms: f.algorithms.iter().map(|a| a.parse()).collect::<Result<_, _>>()?,
            regions: f.regions.iter().map(|r| r.parse()).collect::<Result<_, _>>()?,
            delta_t: f.delta_t,
            m: f.m,
            runs_per_cell: f.runs_per_cell,
            base_seed: f.base_seed,
            wake_mode: f.scheduler.as_deref().map(str::parse).transpose()?.unwrap_or(WakeMode::RandomUniform),
            step_budget: f.budget,
            output: f.output,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: &str| Err(ExperimentError::Invalid(m.to_owned()));
        if self.runs_per_cell == 0 {
            return invalid("runs_per_cell must be at least 1");
        }
        if self.algorithms.is_empty() || self.regions.is_empty() || self.delta_t.is_empty() {
            return invalid("sweep needs at least one algorithm, region and ΔT");
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub algorithm: String,
    pub region_name: String,
    pub n: usize,
    pub delta_t: u64,
    pub m_substeps: u32,
    pub seed: u64,
    pub termination_step: u64,
    pub termination_time_num: u64,
    pub termination_time_den: u32,
    pub coverage_complete_step: Option<u64>,
    pub total_energy: f64,
    pub max_energy: f64,
    pub total_travel: u64,
    pub agents_entered: usize,
    pub agents_at_tc: usize,
    pub censored_flag: bool,
    pub correct_flag: bool,
}

impl RunRow {
    pub fn new(config: &RunConfig, metrics: &RunMetrics) -> Self {
        let (num, den) = metrics.termination_time.as_fraction();
        Self {
            algorithm: config.protocol.to_string(),
            region_name: config.region.name().to_owned(),
            n: config.region.n(),
            delta_t: config.delta_t,
            m_substeps: config.m,
            seed: config.seed,
            termination_step: metrics.termination_step,
            termination_time_num: num,
            termination_time_den: den,
            coverage_complete_step: metrics.coverage_complete_at.map(|t| t.ceil_step()),
            total_energy: metrics.total_energy,
            max_energy: metrics.max_energy,
            total_travel: metrics.total_travel,
            agents_entered: metrics.agents_entered,
            agents_at_tc: metrics.agents_at_tc,
            censored_flag: metrics.censored,
            correct_flag: metrics.correct,
        }
    }

    /// Numeric fields that get summarized, by name.
    fn fields(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("termination_step", Some(self.termination_step as f64)),
            ("termination_time", Some(self.termination_time_num as f64 / f64::from(self.termination_time_den))),
            ("coverage_complete_step", self.coverage_complete_step.map(|s| s as f64)),
            ("total_energy", Some(self.total_energy)),
            ("max_energy", Some(self.max_energy)),
            ("total_travel", Some(self.total_travel as f64)),
            ("agents_entered", Some(self.agents_entered as f64)),
            ("agents_at_tc", Some(self.agents_at_tc as f64)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    /// Values that were present (coverage may never complete).
    pub count: usize,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt(), count }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Aggregates for one (algorithm, region, ΔT) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub region_name: String,
    pub n: usize,
    pub delta_t: u64,
    pub runs: usize,
    pub censored: usize,
    pub incorrect: usize,
    pub stats: Vec<(String, FieldStats)>,
}

impl CellSummary {
    pub fn from_rows(rows: &[RunRow]) -> Self {
        let first = &rows[0];
        let stats = (0..first.fields().len())
            .map(|k| {
                let values: Vec<f64> = rows.iter().filter_map(|r| r.fields()[k].1).collect();
                (first.fields()[k].0.to_owned(), FieldStats::of(&values))
            })
            .collect();
        Self {
            algorithm: first.algorithm.clone(),
            region_name: first.region_name.clone(),
            n: first.n,
            delta_t: first.delta_t,
            runs: rows.len(),
            censored: rows.iter().filter(|r| r.censored_flag).count(),
            incorrect: rows.iter().filter(|r| !r.correct_flag).count(),
            stats,
        }
    }

    pub fn stat(&self, field: &str) -> FieldStats {
        self.stats.iter().find(|(name, _)| name == field).map(|(_, s)| *s).expect("known field")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<RunRow>,
    pub cells: Vec<CellSummary>,
}

impl SweepResult {
    /// No censored and no incorrect runs.
    pub fn all_correct(&self) -> bool {
        self.rows.iter().all(|r| r.correct_flag && !r.censored_flag)
    }

    pub fn cell(&self, algorithm: ProtocolId, region_name: &str, delta_t: u64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm.as_str() && c.region_name == region_name && c.delta_t == delta_t)
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        std::fs::write(path, self.to_csv()?).map_err(|e| ExperimentError::io(path, e))
    }

    pub fn summary_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(&self.cells)?)
    }
}

/// Runs every cell of the sweep in parallel and aggregates. Writes the CSV
/// to `spec.output` when set, with a JSON summary next to it.
pub fn run_batch(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let regions: Vec<Arc<Region>> =
        spec.regions.iter().map(|r| r.load().map(Arc::new)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for &protocol in &spec.algorithms {
        for region in &regions {
            for &delta_t in &spec.delta_t {
                for k in 0..spec.runs_per_cell {
                    let mut config = RunConfig::new(region.clone(), protocol)
                        .delta_t(delta_t)
                        .m(spec.m)
                        .seed(spec.base_seed + k)
                        .wake_mode(spec.wake_mode)
                        .log_wakes(false);
                    config.step_budget = spec.step_budget;
                    jobs.push(config);
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|config| {
            let trace = run(config)?;
            Ok(RunRow::new(config, &RunMetrics::from_trace(&trace)))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let cells = rows.chunks(spec.runs_per_cell as usize).map(CellSummary::from_rows).collect();
    let result = SweepResult { rows, cells };
    if let Some(path) = &spec.output {
        result.write_csv(path)?;
        let summary = path.with_extension("summary.json");
        std::fs::write(&summary, result.summary_json()?).map_err(|e| ExperimentError::io(summary, e))?;
    }
    Ok(result)
}
