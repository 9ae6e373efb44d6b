//! Monte Carlo experiment driver and CSV output.

pub mod recipes;
mod spec_file;
mod validate;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, AllocatorFlags};
use crate::energy::EhSource;
use crate::error::{Error, Result};
use crate::scenario::{InterferenceScenario, Scenario, ScenarioConfig};

pub use spec_file::parse_experiment;
pub use validate::{
    validate_allocation, validate_dump, AllocationDump, Constraint, NodeLedger, ValidationReport,
    Violation, DUMP_FORMAT_VERSION,
};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "density,eh_source,interference_scenario,toa_mode,eh_mode,power_mode,noma,mean_sum_rate_bps_hz,stderr,trials,seed_base";

/// One curve of an experiment: an energy source, an interference scenario
/// and allocator flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub eh_source: EhSource,
    pub interference: InterferenceScenario,
    pub flags: AllocatorFlags,
}

impl Configuration {
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}/{}",
            self.eh_source.kind().as_str(),
            self.interference.label(),
            self.flags.toa_mode.as_str(),
            self.flags.eh_mode.as_str(),
            self.flags.power_mode.as_str(),
            if self.flags.noma() { "on" } else { "off" },
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub base: ScenarioConfig,
    /// Node densities in nodes/km².
    pub densities: Vec<f64>,
    pub trials: usize,
    pub configurations: Vec<Configuration>,
    pub output: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("experiment needs at least one trial".into()));
        }
        if self.densities.is_empty() || self.configurations.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one density and one configuration".into(),
            ));
        }
        if self.densities.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidConfig("densities must be positive".into()));
        }
        Ok(())
    }

    pub fn scenario_config(&self, density: f64, config: &Configuration, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            eh_source: config.eh_source.clone(),
            interference: config.interference.clone(),
            rng_seed: seed,
            ..self.base.clone()
        }
        .with_density(density)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed shared by every configuration at one density, so that curves are
/// compared on identical node drops.
pub fn point_seed(base_seed: u64, density_index: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(density_index as u64 + 1))
}

pub fn trial_seed(seed_base: u64, trial: usize) -> u64 {
    splitmix64(seed_base.wrapping_add(trial as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub sum_rate: Option<f64>,
    pub error: Option<String>,
    pub violations: usize,
    /// Smallest step between consecutive CCCP objective values over all
    /// slots; negative means some trace decreased.
    pub min_trace_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub density: f64,
    pub num_nodes: usize,
    pub configuration: Configuration,
    pub seed_base: u64,
    pub mean: f64,
    pub stderr: f64,
    /// Completed trials.
    pub trials: usize,
    pub outcomes: Vec<TrialOutcome>,
}

impl PointResult {
    pub fn failures(&self) -> impl Iterator<Item = &TrialOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }

    pub fn sum_rates(&self) -> Vec<Option<f64>> {
        self.outcomes.iter().map(|o| o.sum_rate).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub points: Vec<PointResult>,
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn validation_failures(&self) -> usize {
        self.points.iter().flat_map(|p| &p.outcomes).map(|o| o.violations).sum()
    }

    pub fn point(&self, density: f64, config: &Configuration) -> Option<&PointResult> {
        self.points
            .iter()
            .find(|p| p.density == density && &p.configuration == config)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# schema_version={CSV_SCHEMA_VERSION}")?;
        writeln!(out, "{CSV_HEADER}")?;
        for p in &self.points {
            let c = &p.configuration;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                p.density,
                c.eh_source.kind().as_str(),
                c.interference.label(),
                c.flags.toa_mode.as_str(),
                c.flags.eh_mode.as_str(),
                c.flags.power_mode.as_str(),
                if c.flags.noma() { "on" } else { "off" },
                p.mean,
                p.stderr,
                p.trials,
                p.seed_base,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Runs one trial: draw, allocate, validate, evaluate.
pub fn run_trial(cfg: ScenarioConfig, flags: &AllocatorFlags) -> TrialOutcome {
    let seed = cfg.rng_seed;
    let result = Scenario::build(cfg).and_then(|scenario| {
        let allocation = allocate(&scenario, flags)?;
        let report = validate_allocation(&allocation, &scenario);
        let min_step = allocation
            .diagnostics
            .objective_traces
            .iter()
            .flat_map(|t| t.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0f64, f64::min);
        Ok((allocation.rates(&scenario).sum_rate, report.violations.len(), min_step))
    });
    match result {
        Ok((rate, violations, min_trace_step)) => TrialOutcome {
            seed,
            sum_rate: Some(rate),
            error: None,
            violations,
            min_trace_step,
        },
        Err(e) => TrialOutcome {
            seed,
            sum_rate: None,
            error: Some(e.to_string()),
            violations: 0,
            min_trace_step: 0.0,
        },
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every (density, configuration, trial) combination and writes the
/// CSV when the spec names an output path.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let start = Instant::now();
    let jobs: Vec<(usize, usize, usize)> = (0..spec.densities.len())
        .flat_map(|d| {
            (0..spec.configurations.len())
                .flat_map(move |c| (0..spec.trials).map(move |t| (d, c, t)))
        })
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(d, c, t)| {
                let seed = trial_seed(point_seed(spec.base.rng_seed, d), t);
                let config = &spec.configurations[c];
                run_trial(spec.scenario_config(spec.densities[d], config, seed), &config.flags)
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut outcomes = outcomes.into_iter();
    let mut points = Vec::new();
    for (d, &density) in spec.densities.iter().enumerate() {
        for config in &spec.configurations {
            let trials: Vec<TrialOutcome> = outcomes.by_ref().take(spec.trials).collect();
            let rates: Vec<f64> = trials.iter().filter_map(|o| o.sum_rate).collect();
            let (mean, stderr) = mean_and_stderr(&rates);
            points.push(PointResult {
                density,
                num_nodes: ScenarioConfig::nodes_for_density(density, spec.base.radius),
                configuration: config.clone(),
                seed_base: point_seed(spec.base.rng_seed, d),
                mean,
                stderr,
                trials: rates.len(),
                outcomes: trials,
            });
        }
    }
    let report = RunReport {
        points,
        wall_clock: start.elapsed(),
    };
    if let Some(path) = &spec.output {
        let file = std::fs::File::create(path)?;
        report.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(report)
}

/// Cartesian product of the given axes.
pub fn configurations(
    sources: &[EhSource],
    interference: &[InterferenceScenario],
    flags: &[AllocatorFlags],
) -> Vec<Configuration> {
    let mut out = Vec::new();
    for source in sources {
        for scenario in interference {
            for f in flags {
                out.push(Configuration {
                    eh_source: source.clone(),
                    interference: scenario.clone(),
                    flags: *f,
                });
            }
        }
    }
    out
}
