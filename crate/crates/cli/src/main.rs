use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use noma_lpwa::allocator::{allocate, AllocatorFlags, EhMode, PowerMode, ToaMode};
use noma_lpwa::harness::recipes::{self, Recipe};
use noma_lpwa::harness::{
    parse_experiment, run_experiment, validate_allocation, validate_dump, AllocationDump,
    ExperimentSpec, RunReport, ValidationReport,
};
use noma_lpwa::{Receiver, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "noma-lpwa", version, about = "Energy-harvesting NOMA LPWA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Noma {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec file and write its CSV.
    Run {
        spec: PathBuf,
        /// Overrides `experiment.output`; `-` writes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check an allocation dump against the feasibility constraints.
    Validate { dump: PathBuf },
    /// Run one of the built-in throughput-versus-density experiments.
    Recipes {
        #[arg(value_parser = parse_recipe)]
        recipe: Recipe,
        /// Scenario file providing the base parameters.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Base seed; per-point seeds are derived from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated densities in nodes/km².
        #[arg(long, value_delimiter = ',')]
        densities: Option<Vec<f64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Allocate a single scenario realization and report its sum rate.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "unfair", value_parser = parse_mode::<ToaMode>)]
        toa_mode: ToaMode,
        #[arg(long, default_value = "optimal", value_parser = parse_mode::<EhMode>)]
        eh_mode: EhMode,
        #[arg(long, default_value = "cccp", value_parser = parse_mode::<PowerMode>)]
        power_mode: PowerMode,
        #[arg(long, value_enum, default_value = "on")]
        noma: Noma,
        /// Write the full allocation ledger as JSON for `validate`.
        #[arg(long)]
        allocation_dump: Option<PathBuf>,
        /// Write the transmission schedule as `node,slot,rho,mu` rows.
        #[arg(long)]
        schedule_csv: Option<PathBuf>,
    },
}

fn parse_recipe(s: &str) -> Result<Recipe, String> {
    s.parse()
}

fn parse_mode<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { spec, out, workers } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let mut spec = parse_experiment(&text, &spec.display().to_string())?;
            if out.is_some() {
                spec.output = out;
            }
            if workers.is_some() {
                spec.workers = workers;
            }
            run_and_report(spec)
        }
        Command::Validate { dump } => {
            let dump = AllocationDump::load(&dump)
                .with_context(|| format!("loading {}", dump.display()))?;
            Ok(report_validation(&validate_dump(&dump)))
        }
        Command::Recipes {
            recipe,
            scenario,
            out,
            trials,
            seed,
            densities,
            workers,
        } => {
            let base = match scenario {
                Some(path) => ScenarioConfig::load(&path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => ScenarioConfig::default(),
            };
            let mut spec = recipes::recipe(recipe, base);
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(s) = seed {
                spec.base.rng_seed = s;
            }
            if let Some(d) = densities {
                spec.densities = d;
            }
            spec.output = out;
            spec.workers = workers;
            run_and_report(spec)
        }
        Command::Simulate {
            scenario,
            toa_mode,
            eh_mode,
            power_mode,
            noma,
            allocation_dump,
            schedule_csv,
        } => {
            let cfg = ScenarioConfig::load(&scenario)
                .with_context(|| format!("loading {}", scenario.display()))?;
            let flags = AllocatorFlags {
                toa_mode,
                eh_mode,
                power_mode,
                receiver: match noma {
                    Noma::On => Receiver::Sic,
                    Noma::Off => Receiver::Conventional,
                },
                ..AllocatorFlags::default()
            };
            let scenario = Scenario::build(cfg)?;
            let allocation = allocate(&scenario, &flags)?;
            if let Some(path) = schedule_csv {
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                allocation.schedule.write_csv(BufWriter::new(file))?;
            }
            if let Some(path) = allocation_dump {
                AllocationDump::new(&allocation, &scenario).save(&path)?;
            }
            let report = allocation.rates(&scenario);
            println!("nodes: {}", scenario.num_nodes());
            println!("active: {}", allocation.assignment.active.len());
            println!("sum_rate_bps_hz: {}", report.sum_rate);
            println!("sum_rate_bps: {}", report.sum_rate_bps(scenario.config.bandwidth));
            Ok(report_validation(&validate_allocation(&allocation, &scenario)))
        }
    }
}

fn report_validation(report: &ValidationReport) -> ExitCode {
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if report.passed() {
        println!("validation: pass");
        ExitCode::SUCCESS
    } else {
        println!("validation: FAIL ({} violations)", report.violations.len());
        ExitCode::FAILURE
    }
}

fn run_and_report(mut spec: ExperimentSpec) -> anyhow::Result<ExitCode> {
    let to_stdout = match &spec.output {
        None => true,
        Some(p) => p.as_os_str() == "-",
    };
    if to_stdout {
        spec.output = None;
    }
    let report = run_experiment(&spec)?;
    if to_stdout {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        report.write_csv(&mut lock)?;
        lock.flush()?;
    }
    summarize(&report)
}

fn summarize(report: &RunReport) -> anyhow::Result<ExitCode> {
    let mut failed_trials = 0;
    for point in &report.points {
        for f in point.failures() {
            failed_trials += 1;
            eprintln!(
                "trial failed ({} at density {}, seed {}): {}",
                point.configuration.label(),
                point.density,
                f.seed,
                f.error.as_deref().unwrap_or("")
            );
        }
    }
    let violations = report.validation_failures();
    eprintln!(
        "{} points, {} failed trials, {} constraint violations, {:.1} s",
        report.points.len(),
        failed_trials,
        violations,
        report.wall_clock.as_secs_f64()
    );
    Ok(if violations > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
