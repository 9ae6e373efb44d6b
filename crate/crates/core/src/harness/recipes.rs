//! Experiment presets for the three throughput-versus-density comparisons.

use crate::allocator::{AllocatorFlags, EhMode, PowerMode, ToaMode};
use crate::energy::EhSource;
use crate::interference::Receiver;
use crate::scenario::{InterferenceScenario, ScenarioConfig};

use super::{configurations, ExperimentSpec};

pub const DEFAULT_TRIALS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    /// Optimal versus longest harvesting time.
    Fig1a,
    /// CCCP versus full power, with and without NOMA.
    Fig1b,
    /// Unfair, fair and distance-based ToA assignment.
    Fig1c,
}

impl std::str::FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1a" => Ok(Recipe::Fig1a),
            "fig1b" => Ok(Recipe::Fig1b),
            "fig1c" => Ok(Recipe::Fig1c),
            other => Err(format!("unknown recipe `{other}` (fig1a, fig1b, fig1c)")),
        }
    }
}

/// `points` log-spaced densities from `lo` to `hi` nodes/km².
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            let v = (a + (b - a) * i as f64 / (points - 1) as f64).exp();
            (v * 1e6).round() / 1e6
        })
        .collect()
}

pub fn default_densities() -> Vec<f64> {
    log_grid(100.0, 3000.0, 8)
}

pub fn interference_scenarios() -> Vec<InterferenceScenario> {
    vec![
        InterferenceScenario::None,
        InterferenceScenario::CoSf,
        InterferenceScenario::CoSfInterSf {
            cross: InterferenceScenario::DEFAULT_CROSS,
        },
    ]
}

pub fn sources() -> Vec<EhSource> {
    vec![EhSource::solar(), EhSource::rf_nonlinear()]
}

pub fn flags_for(recipe: Recipe) -> Vec<AllocatorFlags> {
    let base = AllocatorFlags::default();
    match recipe {
        Recipe::Fig1a => [EhMode::Optimal, EhMode::Max]
            .into_iter()
            .map(|eh_mode| AllocatorFlags { eh_mode, ..base })
            .collect(),
        Recipe::Fig1b => {
            let mut out = Vec::new();
            for receiver in [Receiver::Sic, Receiver::Conventional] {
                for power_mode in [PowerMode::Cccp, PowerMode::Max] {
                    out.push(AllocatorFlags {
                        receiver,
                        power_mode,
                        ..base
                    });
                }
            }
            out
        }
        Recipe::Fig1c => [ToaMode::Unfair, ToaMode::Fair, ToaMode::Distance]
            .into_iter()
            .map(|toa_mode| AllocatorFlags { toa_mode, ..base })
            .collect(),
    }
}

pub fn recipe(recipe: Recipe, base: ScenarioConfig) -> ExperimentSpec {
    ExperimentSpec {
        base,
        densities: default_densities(),
        trials: DEFAULT_TRIALS,
        configurations: configurations(&sources(), &interference_scenarios(), &flags_for(recipe)),
        output: None,
        workers: None,
    }
}
