//! Flat `key = value` scenario files.
//!
//! ```text
//! # comment
//! format_version = 1
//! density = 1000          # or num_nodes = 196
//! radius_m = 250
//! eh_source = solar
//! interference = co-sf-inter-sf
//! inter_sf_correlation = 0.1
//! ```
//!
//! Every key is optional except `format_version`; missing keys take the
//! defaults of [`ScenarioConfig::default`]. Unknown keys and duplicate keys
//! are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{dbm_to_watts, CorrelationMatrix, InterferenceScenario, ScenarioConfig};
use crate::energy::{BeaconField, EhSource, EhSourceKind, NonlinearHarvester, SolarPanel};
use crate::error::{Error, Result};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Parsed key-value file. Keys are consumed with [`KvDocument::take`];
/// [`KvDocument::finish`] rejects whatever is left.
#[derive(Clone, Debug)]
pub struct KvDocument {
    path: String,
    entries: Vec<(String, String, usize)>,
}

pub fn parse_kv(text: &str, path: &str) -> Result<KvDocument> {
    let mut entries: Vec<(String, String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_string(),
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let key = key.trim().to_string();
        if let Some((_, _, first)) = entries.iter().find(|(k, _, _)| *k == key) {
            return Err(Error::Parse {
                path: path.to_string(),
                line,
                message: format!("duplicate key `{key}` (first defined on line {first})"),
            });
        }
        entries.push((key, value.trim().to_string(), line));
    }
    Ok(KvDocument {
        path: path.to_string(),
        entries,
    })
}

impl KvDocument {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let pos = self.entries.iter().position(|(k, _, _)| k == key)?;
        let (_, value, line) = self.entries.remove(pos);
        Some((value, line))
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.error(line, format!("`{key}`: {e}"))),
        }
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse::<T>()
                        .map_err(|e| self.error(line, format!("`{key}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some((key, _, line)) => Err(Error::Parse {
                path: self.path,
                line: *line,
                message: format!("unknown key `{key}`"),
            }),
        }
    }
}

fn parse_matrix(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect()
        })
        .collect()
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut doc = parse_kv(text, path)?;
        let cfg = Self::from_document(&mut doc)?;
        doc.finish()?;
        Ok(cfg)
    }

    /// Consumes the scenario keys of `doc`, leaving any other keys in place.
    pub fn from_document(doc: &mut KvDocument) -> Result<Self> {
        match doc.take("format_version") {
            None => return Err(doc.error(0, "missing `format_version`")),
            Some((v, line)) => {
                if v.parse::<u32>().ok() != Some(SCENARIO_FORMAT_VERSION) {
                    return Err(doc.error(
                        line,
                        format!("unsupported format_version `{v}` (expected {SCENARIO_FORMAT_VERSION})"),
                    ));
                }
            }
        }
        let mut cfg = ScenarioConfig::default();
        macro_rules! field {
            ($key:literal, $target:expr) => {
                if let Some(v) = doc.take_parsed($key)? {
                    $target = v;
                }
            };
        }
        field!("radius_m", cfg.radius);
        field!("num_slots", cfg.num_slots);
        field!("duty_cycle", cfg.duty_cycle);
        field!("bandwidth_hz", cfg.bandwidth);
        field!("num_toa_classes", cfg.num_toa_classes);
        field!("symbols_per_packet", cfg.symbols_per_packet);
        field!("pathloss_exponent", cfg.pathloss_exponent);
        field!("beacon_pathloss_exponent", cfg.beacon_pathloss_exponent);
        field!("noise_figure_db", cfg.noise_figure_db);
        field!("sensitivity_dbm", cfg.sensitivity_dbm);
        field!("min_distance_m", cfg.min_distance);
        field!("rng_seed", cfg.rng_seed);

        let nodes = doc.take_parsed::<usize>("num_nodes")?;
        let density = doc.take("density");
        match (nodes, density) {
            (Some(_), Some((_, line))) => {
                return Err(doc.error(line, "give either `num_nodes` or `density`, not both"))
            }
            (Some(n), None) => cfg.num_nodes = n,
            (None, Some((v, line))) => {
                let d: f64 = v
                    .parse()
                    .map_err(|e| doc.error(line, format!("`density`: {e}")))?;
                cfg.num_nodes = ScenarioConfig::nodes_for_density(d, cfg.radius);
            }
            (None, None) => {}
        }

        let watts = doc.take_parsed::<f64>("max_tx_power_w")?;
        let dbm = doc.take("max_tx_power_dbm");
        match (watts, dbm) {
            (Some(_), Some((_, line))) => {
                return Err(doc.error(
                    line,
                    "give either `max_tx_power_w` or `max_tx_power_dbm`, not both",
                ))
            }
            (Some(w), None) => cfg.max_tx_power = w,
            (None, Some((v, line))) => {
                let d: f64 = v
                    .parse()
                    .map_err(|e| doc.error(line, format!("`max_tx_power_dbm`: {e}")))?;
                cfg.max_tx_power = dbm_to_watts(d);
            }
            (None, None) => {}
        }

        cfg.eh_source = eh_source_from(doc)?;
        cfg.interference = interference_from(doc)?;
        Ok(cfg)
    }

    /// Renders the configuration in the scenario file format. Parsing the
    /// result yields an identical configuration.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("format_version", &SCENARIO_FORMAT_VERSION);
        put("num_nodes", &self.num_nodes);
        put("radius_m", &self.radius);
        put("num_slots", &self.num_slots);
        put("duty_cycle", &self.duty_cycle);
        put("bandwidth_hz", &self.bandwidth);
        put("num_toa_classes", &self.num_toa_classes);
        put("symbols_per_packet", &self.symbols_per_packet);
        put("pathloss_exponent", &self.pathloss_exponent);
        put("beacon_pathloss_exponent", &self.beacon_pathloss_exponent);
        put("max_tx_power_w", &self.max_tx_power);
        put("noise_figure_db", &self.noise_figure_db);
        put("sensitivity_dbm", &self.sensitivity_dbm);
        put("min_distance_m", &self.min_distance);
        put("rng_seed", &self.rng_seed);
        put("eh_source", &self.eh_source.kind().as_str());
        if let Some(b) = self.eh_source.beacons() {
            put("rf.beacon_count", &b.count);
            put("rf.beacon_power_w", &b.power);
            if let Some(r) = b.ring_radius {
                put("rf.beacon_ring_radius_m", &r);
            }
        }
        match &self.eh_source {
            EhSource::RfLinear { efficiency, .. } => put("rf.efficiency", efficiency),
            EhSource::RfNonlinear { harvester, .. } => {
                put("rf.steepness", &harvester.steepness);
                put("rf.turn_on_w", &harvester.turn_on);
                put("rf.saturation_w", &harvester.saturation);
            }
            EhSource::Solar(panel) => {
                put("solar.efficiency", &panel.efficiency);
                put("solar.panel_area_m2", &panel.area);
                put("solar.irradiance_w_m2", &panel.irradiance);
            }
        }
        put("interference", &self.interference.label());
        match &self.interference {
            InterferenceScenario::CoSfInterSf { cross } => put("inter_sf_correlation", cross),
            InterferenceScenario::Custom(m) => {
                let rows: Vec<String> = m
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                put("correlation", &rows.join(";"));
            }
            _ => {}
        }
        out
    }
}

fn eh_source_from(doc: &mut KvDocument) -> Result<EhSource> {
    let kind = match doc.take("eh_source") {
        None => EhSourceKind::RfNonlinear,
        Some((v, line)) => v.parse().map_err(|e: String| doc.error(line, e))?,
    };
    let mut beacons = BeaconField::default();
    if let Some(v) = doc.take_parsed("rf.beacon_count")? {
        beacons.count = v;
    }
    if let Some(v) = doc.take_parsed("rf.beacon_power_w")? {
        beacons.power = v;
    }
    beacons.ring_radius = doc.take_parsed("rf.beacon_ring_radius_m")?;
    let efficiency = doc.take_parsed::<f64>("rf.efficiency")?;
    let mut harvester = NonlinearHarvester::default();
    if let Some(v) = doc.take_parsed("rf.steepness")? {
        harvester.steepness = v;
    }
    if let Some(v) = doc.take_parsed("rf.turn_on_w")? {
        harvester.turn_on = v;
    }
    if let Some(v) = doc.take_parsed("rf.saturation_w")? {
        harvester.saturation = v;
    }
    let mut panel = SolarPanel::default();
    if let Some(v) = doc.take_parsed("solar.efficiency")? {
        panel.efficiency = v;
    }
    if let Some(v) = doc.take_parsed("solar.panel_area_m2")? {
        panel.area = v;
    }
    if let Some(v) = doc.take_parsed("solar.irradiance_w_m2")? {
        panel.irradiance = v;
    }
    Ok(match kind {
        EhSourceKind::RfLinear => EhSource::RfLinear {
            beacons,
            efficiency: efficiency.unwrap_or(0.5),
        },
        EhSourceKind::RfNonlinear => EhSource::RfNonlinear { beacons, harvester },
        EhSourceKind::Solar => EhSource::Solar(panel),
    })
}

fn interference_from(doc: &mut KvDocument) -> Result<InterferenceScenario> {
    let cross = doc.take_parsed::<f64>("inter_sf_correlation")?;
    let matrix = doc.take("correlation");
    let (label, line) = doc
        .take("interference")
        .unwrap_or_else(|| ("co-sf".to_string(), 0));
    match label.as_str() {
        "custom" => {
            let Some((text, mline)) = matrix else {
                return Err(doc.error(line, "`interference = custom` needs a `correlation` matrix"));
            };
            let rows = parse_matrix(&text).map_err(|e| doc.error(mline, e))?;
            Ok(InterferenceScenario::Custom(CorrelationMatrix::new(rows)?))
        }
        "co-sf-inter-sf" => Ok(InterferenceScenario::CoSfInterSf {
            cross: cross.unwrap_or(InterferenceScenario::DEFAULT_CROSS),
        }),
        other => InterferenceScenario::from_label(other)
            .ok_or_else(|| doc.error(line, format!("unknown interference scenario `{other}`"))),
    }
}
