use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beacon_cover::dag::{build_dag, closed_beacon_violations, verify_lemma1};
use beacon_cover::experiments::{
    audit_theorem1, render_trace, run_batch, AuditSpec, ExperimentError, RunFile, SweepSpec,
};
use beacon_cover::faults::FaultPlan;
use beacon_cover::{run, RegionSpec, RunConfig, RunMetrics, SubTime, Trace};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "beacon-sim", version, about = "Beacon-based coverage of grid regions by entering agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its metrics.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Print the world every k steps.
        #[arg(long, value_name = "K")]
        render_every: Option<u64>,
        /// Add the step-count grid to each rendering.
        #[arg(long)]
        step_counts: bool,
    },
    /// Run a parameter sweep and write its CSV.
    Sweep {
        spec: PathBuf,
        /// Overrides the sweep file's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check DLLG termination times against the (2n-1)ΔT + {1, 2} window.
    AuditTheorem1 {
        /// Region specs such as `linear:10` or `complex:1`.
        #[arg(long, value_delimiter = ',', default_values_t = default_audit_regions())]
        regions: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 5])]
        delta_t: Vec<u64>,
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 100)]
        m: u32,
        /// `size:ΔT` pairs of linear regions for the wake-order extremes.
        #[arg(long, value_delimiter = ',', default_values_t = vec!["5:2".to_owned(), "10:2".to_owned()])]
        tightness: Vec<String>,
    },
    /// Run once and check that each beacon's depth equals its distance from the entry.
    VerifyLemma1 {
        #[command(flatten)]
        run: RunArgs,
        /// Write the beacon graph as an edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Run with a fault plan and report whether coverage survived.
    Faults {
        #[command(flatten)]
        run: RunArgs,
        /// Random mobile crashes to add to the plan.
        #[arg(long, default_value_t = 0)]
        random_crashes: usize,
        /// Random teleports to add to the plan.
        #[arg(long, default_value_t = 0)]
        random_teleports: usize,
    },
}

fn default_audit_regions() -> Vec<String> {
    ["linear:5", "linear:10", "linear:20", "square:5", "square:7", "square:10", "sawtooth:3", "sawtooth:5"]
        .into_iter()
        .chain(["complex:1", "complex:2", "complex:3"])
        .map(str::to_owned)
        .collect()
}

/// Config file plus one flag per key.
#[derive(Args)]
struct RunArgs {
    /// TOML run file; flags override its keys.
    config: Option<PathBuf>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    delta_t: Option<u64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheduler: Option<String>,
    #[arg(long)]
    budget: Option<u64>,
    /// Fault tuple such as `(40, crash, random)`; repeatable.
    #[arg(long = "fault")]
    faults: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, ExperimentError> {
        let file = match &self.config {
            Some(path) => RunFile::load(path)?,
            None => RunFile::default(),
        };
        let flags = RunFile {
            region: self.region.clone(),
            algorithm: self.algorithm.clone(),
            delta_t: self.delta_t,
            m: self.m,
            seed: self.seed,
            scheduler: self.scheduler.clone(),
            budget: self.budget,
            faults: self.faults.clone(),
        };
        file.overridden_by(flags).to_config()
    }
}

enum Failure {
    Config(String),
    Check,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { run: args, render_every, step_counts } => {
            let trace = simulate(&args.config()?)?;
            if let Some(k) = render_every {
                render_steps(&trace, k.max(1), step_counts);
            }
            report(&trace)
        }
        Command::Sweep { spec, output } => sweep(&spec, output),
        Command::AuditTheorem1 { regions, delta_t, seeds, base_seed, m, tightness } => {
            let regions = regions.iter().map(|r| r.parse::<RegionSpec>()).collect::<Result<Vec<_>, _>>();
            let tightness = tightness.iter().map(|p| parse_pair(p)).collect::<Result<Vec<_>, _>>()?;
            let mut spec = AuditSpec::new(regions.map_err(|e| Failure::Config(e.to_string()))?, delta_t, seeds)
                .tightness(tightness);
            spec.base_seed = base_seed;
            spec.m = m;
            let report = audit_theorem1(&spec)?;
            println!("{report}");
            check(report.passed())
        }
        Command::VerifyLemma1 { run: args, edges } => {
            let config = args.config()?;
            let trace = simulate(&config)?;
            let dag = build_dag(&trace.final_world, config.protocol).map_err(|e| Failure::Config(e.to_string()))?;
            if let Some(path) = edges {
                std::fs::write(&path, dag.to_edge_list()).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            }
            let bad = verify_lemma1(&dag);
            let closed = closed_beacon_violations(&trace.final_world, &dag);
            println!("vertices: {}  edges: {}", dag.len(), dag.edge_count());
            println!("depth/distance mismatches: {}", bad.len());
            for v in &bad {
                println!("  {}: depth {} dist {:?}", v.cell, v.depth, v.dist);
            }
            println!("closed-beacon structure findings: {}", closed.len());
            for (cell, what) in &closed {
                println!("  {cell}: {what}");
            }
            check(bad.is_empty())
        }
        Command::Faults { run: args, random_crashes, random_teleports } => {
            let mut config = args.config()?;
            if random_crashes + random_teleports > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_fa17);
                let horizon = 2 * config.region.n() as u64 * config.delta_t;
                let extra = FaultPlan::random_crashes_and_teleports(
                    &mut rng,
                    random_crashes,
                    random_teleports,
                    horizon,
                    config.m,
                );
                let mut events = config.faults.events().to_vec();
                events.extend_from_slice(extra.events());
                config = config.faults(FaultPlan::new(events));
            }
            for f in config.faults.events() {
                println!("fault {f}");
            }
            let trace = simulate(&config)?;
            for s in &trace.skipped_faults {
                println!("skipped {} at {}: {}", s.event, s.time, s.reason);
            }
            report(&trace)
        }
    }
}

fn simulate(config: &RunConfig) -> Result<Trace, Failure> {
    run(config).map_err(|e| Failure::Config(e.to_string()))
}

fn parse_pair(text: &str) -> Result<(u32, u64), Failure> {
    let bad = || Failure::Config(format!("expected size:ΔT, got {text:?}"));
    let (size, dt) = text.split_once(':').ok_or_else(bad)?;
    Ok((size.trim().parse().map_err(|_| bad())?, dt.trim().parse().map_err(|_| bad())?))
}

fn check(passed: bool) -> Result<(), Failure> {
    if passed { Ok(()) } else { Err(Failure::Check) }
}

fn render_steps(trace: &Trace, every: u64, step_counts: bool) {
    let end = trace.end_time();
    let mut step = 0;
    while step <= end.step {
        let at = SubTime::at_step(step, trace.m).min(end);
        if let Ok(text) = render_trace(trace, at, step_counts) {
            println!("t = {at}\n{text}");
        }
        step += every;
    }
    if !end.step.is_multiple_of(every) || end.substep != 0 {
        if let Ok(text) = render_trace(trace, end, step_counts) {
            println!("t = {end}\n{text}");
        }
    }
}

fn report(trace: &Trace) -> Result<(), Failure> {
    let m = RunMetrics::from_trace(trace);
    println!("region: {} (n = {})", trace.region.name(), trace.n());
    println!("algorithm: {}  ΔT: {}  M: {}  seed: {}  scheduler: {}", trace.protocol, trace.delta_t, trace.m, trace.seed, trace.wake_mode);
    println!("outcome: {}", if m.censored { "budget exhausted" } else { "terminated" });
    println!("termination time: {} (step {})", m.termination_time, m.termination_step);
    if let Some(t) = m.coverage_complete_at {
        println!("coverage complete at: {t}");
    }
    println!("total energy: {:.2}  max energy: {:.2}", m.total_energy, m.max_energy);
    println!("total travel: {}", m.total_travel);
    println!("agents entered: {}  in region at end: {}", m.agents_entered, m.agents_at_tc);
    println!("correct: {}", m.correct);
    check(m.correct)
}

fn sweep(path: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let mut spec = SweepSpec::load(path)?;
    if output.is_some() {
        spec.output = output;
    }
    let result = run_batch(&spec)?;
    if spec.output.is_none() {
        print!("{}", result.to_csv()?);
    }
    for c in &result.cells {
        let t = c.stat("termination_step");
        let e = c.stat("total_energy");
        eprintln!(
            "{} {} ΔT={}: T_C {:.1} ± {:.1}, E {:.1} ± {:.1}, censored {}, incorrect {}",
            c.algorithm,
            c.region_name,
            c.delta_t,
            t.mean,
            t.sem(),
            e.mean,
            e.sem(),
            c.censored,
            c.incorrect
        );
    }
    check(result.all_correct())
}
