//! Experiment spec files: a scenario file plus `experiment.*` keys.
//!
//! ```text
//! format_version = 1
//! radius_m = 250
//! experiment.densities = 100,1000,3000
//! experiment.trials = 50
//! experiment.eh_sources = solar,rf-nonlinear
//! experiment.interference = none,co-sf,co-sf-inter-sf
//! experiment.toa_modes = unfair
//! experiment.eh_modes = optimal,max
//! experiment.power_modes = cccp
//! experiment.noma = on,off
//! experiment.output = results.csv
//! ```
//!
//! Every axis defaults to a single value (the scenario's own source and
//! interference, or the allocator defaults); the experiment runs their
//! Cartesian product.

use std::path::PathBuf;

use super::{configurations, ExperimentSpec};
use crate::allocator::{AllocatorFlags, EhMode, PowerMode, ToaMode};
use crate::energy::{BeaconField, EhSource, EhSourceKind};
use crate::error::Result;
use crate::interference::Receiver;
use crate::scenario::{parse_kv, InterferenceScenario, ScenarioConfig};

use super::recipes::{default_densities, DEFAULT_TRIALS};

fn source_of(kind: EhSourceKind, base: &EhSource) -> EhSource {
    if base.kind() == kind {
        return base.clone();
    }
    match kind {
        EhSourceKind::RfLinear => EhSource::RfLinear {
            beacons: BeaconField::default(),
            efficiency: 0.5,
        },
        EhSourceKind::RfNonlinear => EhSource::rf_nonlinear(),
        EhSourceKind::Solar => EhSource::solar(),
    }
}

pub fn parse_experiment(text: &str, path: &str) -> Result<ExperimentSpec> {
    let mut doc = parse_kv(text, path)?;
    let densities = doc.take_list::<f64>("experiment.densities")?;
    let trials = doc.take_parsed::<usize>("experiment.trials")?;
    let sources = doc.take_list::<String>("experiment.eh_sources")?;
    let interference = doc.take_list::<String>("experiment.interference")?;
    let toa_modes = doc.take_list::<String>("experiment.toa_modes")?;
    let eh_modes = doc.take_list::<String>("experiment.eh_modes")?;
    let power_modes = doc.take_list::<String>("experiment.power_modes")?;
    let noma = doc.take_list::<String>("experiment.noma")?;
    let grid_points = doc.take_parsed::<usize>("experiment.grid_points")?;
    let output = doc.take_parsed::<PathBuf>("experiment.output")?;
    let workers = doc.take_parsed::<usize>("experiment.workers")?;
    let base = ScenarioConfig::from_document(&mut doc)?;
    let err = |msg: String| doc.error(0, msg);

    let sources = match sources {
        None => vec![base.eh_source.clone()],
        Some(list) => list
            .iter()
            .map(|s| s.parse::<EhSourceKind>().map(|k| source_of(k, &base.eh_source)))
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?,
    };
    let interference = match interference {
        None => vec![base.interference.clone()],
        Some(list) => list
            .iter()
            .map(|s| {
                if s == base.interference.label() {
                    Ok(base.interference.clone())
                } else {
                    InterferenceScenario::from_label(s)
                        .ok_or_else(|| format!("unknown interference scenario `{s}`"))
                }
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?,
    };
    fn axis<T: std::str::FromStr<Err = String>>(
        list: Option<Vec<String>>,
        default: T,
    ) -> std::result::Result<Vec<T>, String> {
        match list {
            None => Ok(vec![default]),
            Some(l) => l.iter().map(|s| s.parse()).collect(),
        }
    }
    let defaults = AllocatorFlags::default();
    let toa_modes = axis::<ToaMode>(toa_modes, defaults.toa_mode).map_err(err)?;
    let eh_modes = axis::<EhMode>(eh_modes, defaults.eh_mode).map_err(err)?;
    let power_modes = axis::<PowerMode>(power_modes, defaults.power_mode).map_err(err)?;
    let receivers = match noma {
        None => vec![Receiver::Sic],
        Some(l) => l
            .iter()
            .map(|s| match s.as_str() {
                "on" => Ok(Receiver::Sic),
                "off" => Ok(Receiver::Conventional),
                other => Err(format!("noma must be `on` or `off`, got `{other}`")),
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?,
    };

    let mut flags = Vec::new();
    for &toa_mode in &toa_modes {
        for &eh_mode in &eh_modes {
            for &power_mode in &power_modes {
                for &receiver in &receivers {
                    flags.push(AllocatorFlags {
                        toa_mode,
                        eh_mode,
                        power_mode,
                        receiver,
                        grid_points: grid_points.unwrap_or(defaults.grid_points),
                        ..defaults
                    });
                }
            }
        }
    }
    doc.finish()?;
    let spec = ExperimentSpec {
        configurations: configurations(&sources, &interference, &flags),
        base,
        densities: densities.unwrap_or_else(default_densities),
        trials: trials.unwrap_or(DEFAULT_TRIALS),
        output,
        workers,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_axes_into_product() {
        let text = "format_version = 1\neh_source = solar\n\
                    experiment.densities = 100, 1000\nexperiment.trials = 3\n\
                    experiment.eh_sources = solar,rf-nonlinear\n\
                    experiment.interference = none,co-sf-inter-sf\n\
                    experiment.noma = on,off\nexperiment.output = out.csv\n";
        let spec = parse_experiment(text, "mem").unwrap();
        assert_eq!(spec.densities, vec![100.0, 1000.0]);
        assert_eq!(spec.trials, 3);
        assert_eq!(spec.configurations.len(), 2 * 2 * 2);
        assert_eq!(spec.output, Some(PathBuf::from("out.csv")));
    }

    #[test]
    fn defaults_to_single_configuration() {
        let spec = parse_experiment("format_version = 1\n", "mem").unwrap();
        assert_eq!(spec.configurations.len(), 1);
        assert_eq!(spec.trials, DEFAULT_TRIALS);
    }

    #[test]
    fn rejects_bad_axis_values() {
        assert!(parse_experiment("format_version = 1\nexperiment.noma = maybe\n", "mem").is_err());
        assert!(parse_experiment("format_version = 1\nexperiment.trials = 0\n", "mem").is_err());
        assert!(parse_experiment("format_version = 1\nexperiment.bogus = 1\n", "mem").is_err());
    }
}
