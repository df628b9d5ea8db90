use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::ExperimentError;
use crate::dag::{build_dag, verify_lemma1};
use crate::grid::{generate_region, Region, RegionKind, RegionSpec};
use crate::metrics::{coverage_complete, entries};
use crate::protocol::ProtocolId;
use crate::scheduler::{run, RunConfig, Trace, WakeMode};
use crate::time::SubTime;

/// Which DLLG runs to audit against the `(2n-1)ΔT + {1, 2}` window.
#[derive(Debug, Clone)]
pub struct AuditSpec {
    pub regions: Vec<RegionSpec>,
    pub delta_t: Vec<u64>,
    pub seeds: u64,
    pub base_seed: u64,
    pub m: u32,
    /// `(linear size, ΔT)` pairs for the wake-order constructions that hit
    /// each end of the window.
    pub tightness: Vec<(u32, u64)>,
}

impl AuditSpec {
    pub fn new(regions: Vec<RegionSpec>, delta_t: Vec<u64>, seeds: u64) -> Self {
        Self { regions, delta_t, seeds, base_seed: 0, m: 100, tightness: Vec::new() }
    }

    pub fn tightness(mut self, pairs: Vec<(u32, u64)>) -> Self {
        self.tightness = pairs;
        self
    }
}

/// `[(2n-1)ΔT + 1, (2n-1)ΔT + 2]`.
pub fn theorem1_window(n: usize, delta_t: u64) -> (u64, u64) {
    let base = (2 * n as u64 - 1) * delta_t;
    (base + 1, base + 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowViolation {
    pub region: String,
    pub n: usize,
    pub delta_t: u64,
    pub seed: u64,
    /// `None` when the run hit its step budget.
    pub termination_step: Option<u64>,
    pub window: (u64, u64),
}

/// A structural check that failed on one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub region: String,
    pub delta_t: u64,
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TightnessCheck {
    pub n: usize,
    pub delta_t: u64,
    pub mode: WakeMode,
    pub expected: u64,
    pub observed: Option<u64>,
}

impl TightnessCheck {
    pub fn passed(&self) -> bool {
        self.observed == Some(self.expected)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub runs: usize,
    pub window_violations: Vec<WindowViolation>,
    /// Vertices whose shortest directed distance from the entry differs from depth.
    pub lemma1_violations: Vec<Finding>,
    /// Entry times off `(i-1)ΔT`, wrong agent counts or uncovered cells.
    pub entry_violations: Vec<Finding>,
    pub tightness: Vec<TightnessCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.window_violations.is_empty()
            && self.lemma1_violations.is_empty()
            && self.entry_violations.is_empty()
            && self.tightness.iter().all(TightnessCheck::passed)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs audited: {}", self.runs)?;
        writeln!(f, "window violations: {}", self.window_violations.len())?;
        for v in &self.window_violations {
            let got = v.termination_step.map_or("budget".to_owned(), |s| s.to_string());
            writeln!(f, "  {} ΔT={} seed={}: {} not in {:?}", v.region, v.delta_t, v.seed, got, v.window)?;
        }
        for (name, list) in [("dist/depth", &self.lemma1_violations), ("entry schedule", &self.entry_violations)] {
            writeln!(f, "{name} violations: {}", list.len())?;
            for v in list {
                writeln!(f, "  {} ΔT={} seed={}: {}", v.region, v.delta_t, v.seed, v.detail)?;
            }
        }
        for t in &self.tightness {
            let got = t.observed.map_or("budget".to_owned(), |s| s.to_string());
            let verdict = if t.passed() { "ok" } else { "MISMATCH" };
            writeln!(f, "tightness linear n={} ΔT={} {}: expected {} got {} {verdict}", t.n, t.delta_t, t.mode, t.expected, got)?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

struct RunAudit {
    window: Option<WindowViolation>,
    lemma1: Option<Finding>,
    entry: Vec<Finding>,
}

fn audit_run(region: &Arc<Region>, delta_t: u64, seed: u64, m: u32) -> Result<RunAudit, ExperimentError> {
    let config = RunConfig::new(region.clone(), ProtocolId::Dllg).delta_t(delta_t).seed(seed).m(m).log_wakes(false);
    let trace = run(&config)?;
    let n = region.n();
    let window = theorem1_window(n, delta_t);
    let step = trace.outcome.termination_time().map(SubTime::ceil_step);
    let finding = |detail: String| Finding { region: region.name().to_owned(), delta_t, seed, detail };
    let window_violation = (!step.is_some_and(|s| s == window.0 || s == window.1)).then(|| WindowViolation {
        region: region.name().to_owned(),
        n,
        delta_t,
        seed,
        termination_step: step,
        window,
    });
    let lemma1 = match build_dag(&trace.final_world, ProtocolId::Dllg) {
        Ok(dag) => {
            let bad = verify_lemma1(&dag);
            (!bad.is_empty()).then(|| finding(format!("{} vertices, first at {}", bad.len(), bad[0].cell)))
        }
        Err(e) => Some(finding(e.to_string())),
    };
    Ok(RunAudit { window: window_violation, lemma1, entry: entry_findings(&trace, &finding) })
}

/// Entries at exactly `(i-1)ΔT`, `2n` of them, and `n` mobiles over `n`
/// closed beacons covering every cell at termination.
fn entry_findings(trace: &Trace, finding: &dyn Fn(String) -> Finding) -> Vec<Finding> {
    let mut found = Vec::new();
    let n = trace.n();
    for (i, (t, _)) in entries(trace).enumerate() {
        let expected = SubTime::at_step(i as u64 * trace.delta_t, trace.m);
        if t != expected {
            found.push(finding(format!("a{} entered at {t}, expected {expected}", i + 1)));
            break;
        }
    }
    let world = &trace.final_world;
    let entered = world.agents().len();
    let mobiles = world.mobiles().count();
    let closed = world.agents().iter().filter(|a| a.closed_at.is_some()).count();
    if entered != 2 * n || mobiles != n || closed != n {
        found.push(finding(format!("{entered} entered, {mobiles} mobile, {closed} closed; expected {n} + {n}")));
    }
    if !coverage_complete(world) {
        found.push(finding("a free cell holds no beacon".to_owned()));
    }
    found
}

/// Runs the audit. Every region must have one entry point and every ΔT must
/// be at least 2.
pub fn audit_theorem1(spec: &AuditSpec) -> Result<AuditReport, ExperimentError> {
    if let Some(dt) = spec.delta_t.iter().chain(spec.tightness.iter().map(|(_, dt)| dt)).find(|&&dt| dt < 2) {
        return Err(ExperimentError::Invalid(format!("the audited bound needs ΔT >= 2, got {dt}")));
    }
    let regions: Vec<Arc<Region>> = spec.regions.iter().map(|r| r.load().map(Arc::new)).collect::<Result<_, _>>()?;
    if let Some(r) = regions.iter().find(|r| r.entry_points().len() != 1) {
        return Err(ExperimentError::Invalid(format!("{} has {} entry points, need 1", r.name(), r.entry_points().len())));
    }
    let jobs: Vec<(&Arc<Region>, u64, u64)> = regions
        .iter()
        .flat_map(|r| spec.delta_t.iter().flat_map(move |&dt| (0..spec.seeds).map(move |k| (r, dt, spec.base_seed + k))))
        .collect();
    let audits = jobs
        .par_iter()
        .map(|&(r, dt, seed)| audit_run(r, dt, seed, spec.m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = AuditReport { runs: audits.len(), ..Default::default() };
    for a in audits {
        report.window_violations.extend(a.window);
        report.lemma1_violations.extend(a.lemma1);
        report.entry_violations.extend(a.entry);
    }
    for &(size, delta_t) in &spec.tightness {
        let region = Arc::new(generate_region(RegionKind::Linear, size)?);
        let (lo, hi) = theorem1_window(region.n(), delta_t);
        for (mode, expected) in [(WakeMode::BeaconsFirst, hi), (WakeMode::MobilesFirst, lo)] {
            let config = RunConfig::new(region.clone(), ProtocolId::Dllg)
                .delta_t(delta_t)
                .m(spec.m)
                .seed(spec.base_seed)
                .wake_mode(mode)
                .log_wakes(false);
            let observed = run(&config)?.outcome.termination_time().map(SubTime::ceil_step);
            report.tightness.push(TightnessCheck { n: region.n(), delta_t, mode, expected, observed });
        }
    }
    Ok(report)
}
