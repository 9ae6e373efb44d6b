//! Network configuration, node placement and per-slot channel draws.

mod file;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::airtime::ToaSet;
use crate::energy::EhSource;
use crate::error::{Error, Result};

pub use file::{parse_kv, KvDocument, SCENARIO_FORMAT_VERSION};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Waveform correlation between ToA classes, `values[i][j]` for a node of
/// class `i` hit by a node of class `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    rows: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidConfig(format!(
                    "correlation row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                let ok = if i == j { v == 1.0 } else { (0.0..1.0).contains(&v) };
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "correlation[{i}][{j}] = {v} (diagonal must be 1, off-diagonal in [0, 1))"
                    )));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// How strongly two distinct colliding nodes disturb each other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InterferenceScenario {
    /// Only a node's own waveform correlates with itself.
    None,
    /// Full correlation inside a ToA class, none across classes.
    CoSf,
    /// Full correlation inside a class, `cross` across classes.
    CoSfInterSf { cross: f64 },
    Custom(CorrelationMatrix),
}

impl InterferenceScenario {
    pub const DEFAULT_CROSS: f64 = 0.1;

    pub fn label(&self) -> &'static str {
        match self {
            InterferenceScenario::None => "none",
            InterferenceScenario::CoSf => "co-sf",
            InterferenceScenario::CoSfInterSf { .. } => "co-sf-inter-sf",
            InterferenceScenario::Custom(_) => "custom",
        }
    }

    /// Correlation between two distinct nodes of classes `a` and `b`.
    pub fn correlation(&self, a: usize, b: usize) -> f64 {
        match self {
            InterferenceScenario::None => 0.0,
            InterferenceScenario::CoSf => (a == b) as u8 as f64,
            InterferenceScenario::CoSfInterSf { cross } => {
                if a == b {
                    1.0
                } else {
                    *cross
                }
            }
            InterferenceScenario::Custom(m) => m.get(a, b),
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "none" | "no-interference" => Some(InterferenceScenario::None),
            "co-sf" => Some(InterferenceScenario::CoSf),
            "co-sf-inter-sf" => Some(InterferenceScenario::CoSfInterSf {
                cross: Self::DEFAULT_CROSS,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_nodes: usize,
    /// Cell radius in meters.
    pub radius: f64,
    pub num_slots: usize,
    pub duty_cycle: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    pub num_toa_classes: usize,
    /// Symbols per packet, shared by every node.
    pub symbols_per_packet: u32,
    pub pathloss_exponent: f64,
    pub beacon_pathloss_exponent: f64,
    /// Maximum transmit power in watts.
    pub max_tx_power: f64,
    pub noise_figure_db: f64,
    pub eh_source: EhSource,
    pub interference: InterferenceScenario,
    /// Gateway sensitivity in dBm; weaker nodes are left inactive.
    pub sensitivity_dbm: f64,
    /// Lower bound on every link distance, in meters.
    pub min_distance: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_nodes: 196,
            radius: 250.0,
            num_slots: 4,
            duty_cycle: 0.01,
            bandwidth: 125e3,
            num_toa_classes: 6,
            symbols_per_packet: 10,
            pathloss_exponent: 3.0,
            beacon_pathloss_exponent: 3.0,
            max_tx_power: dbm_to_watts(14.0),
            noise_figure_db: 6.0,
            eh_source: EhSource::rf_nonlinear(),
            interference: InterferenceScenario::CoSf,
            sensitivity_dbm: -137.0,
            min_distance: 1.0,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Node count for `density` nodes/km² over a disk of `radius` meters.
    pub fn nodes_for_density(density: f64, radius: f64) -> usize {
        (density * PI * radius * radius / 1e6).round() as usize
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.num_nodes = Self::nodes_for_density(density, self.radius);
        self
    }

    /// Node density in nodes/km².
    pub fn density(&self) -> f64 {
        self.num_nodes as f64 * 1e6 / (PI * self.radius * self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return bad(format!("duty cycle {} outside (0, 1]", self.duty_cycle));
        }
        if self.num_nodes == 0 {
            return bad("at least one node is required".into());
        }
        if self.num_slots == 0 {
            return bad("at least one slot is required".into());
        }
        if self.num_toa_classes == 0 {
            return bad("at least one ToA class is required".into());
        }
        if self.symbols_per_packet == 0 {
            return bad("symbols per packet must be at least 1".into());
        }
        if !(self.radius > 0.0) || !(self.bandwidth > 0.0) {
            return bad("radius and bandwidth must be positive".into());
        }
        if !(self.pathloss_exponent > 0.0) || !(self.beacon_pathloss_exponent > 0.0) {
            return bad("pathloss exponents must be positive".into());
        }
        if !(self.max_tx_power > 0.0) {
            return bad("max transmit power must be positive".into());
        }
        if !(self.min_distance > 0.0 && self.min_distance <= self.radius) {
            return bad(format!(
                "minimum distance {} must lie in (0, radius]",
                self.min_distance
            ));
        }
        if !self.noise_figure_db.is_finite() || !self.sensitivity_dbm.is_finite() {
            return bad("noise figure and sensitivity must be finite".into());
        }
        match &self.interference {
            InterferenceScenario::CoSfInterSf { cross } if !(0.0..1.0).contains(cross) => {
                return bad(format!("inter-SF correlation {cross} outside [0, 1)"));
            }
            InterferenceScenario::Custom(m) if m.size() != self.num_toa_classes => {
                return bad(format!(
                    "correlation matrix is {0}x{0}, expected {1}x{1}",
                    m.size(),
                    self.num_toa_classes
                ));
            }
            _ => {}
        }
        self.eh_source.validate()?;
        ToaSet::build(self)?;
        Ok(())
    }

    pub fn beacon_positions(&self) -> Vec<(f64, f64)> {
        let Some(beacons) = self.eh_source.beacons() else {
            return Vec::new();
        };
        let ring = beacons.ring_radius.unwrap_or(self.radius / 2.0);
        (0..beacons.count)
            .map(|b| {
                let angle = 2.0 * PI * b as f64 / beacons.count as f64;
                (ring * angle.cos(), ring * angle.sin())
            })
            .collect()
    }
}

/// Independent random streams derived from one seed, so that changing
/// how one quantity is drawn leaves the others untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Placement = 1,
    Fading = 2,
    EhFading = 3,
    SolarAngle = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: usize,
    pub position: (f64, f64),
    /// Distance to the gateway in meters.
    pub distance: f64,
    pub toa_class: Option<usize>,
    /// Linear uplink power gain per slot.
    pub gains: Vec<f64>,
    /// Distance to each power beacon (RF sources only).
    pub beacon_distances: Vec<f64>,
    /// Beacon fading, indexed `[slot][beacon]` (RF sources only).
    pub beacon_fading: Vec<Vec<f64>>,
    /// Sun incidence angle per slot in radians (solar sources only).
    pub solar_incidence: Vec<f64>,
}

/// Rayleigh fading with pathloss.
pub fn channel_gain(fading: f64, distance: f64, exponent: f64) -> f64 {
    fading * distance.powf(-exponent)
}

/// Places `num_nodes` nodes uniformly over the disk around the gateway.
pub fn place_nodes(cfg: &ScenarioConfig) -> Vec<NodeState> {
    let mut rng = stream_rng(cfg.rng_seed, Stream::Placement);
    let beacons = cfg.beacon_positions();
    (0..cfg.num_nodes)
        .map(|id| {
            let r = cfg.radius * rng.random::<f64>().sqrt();
            let angle = 2.0 * PI * rng.random::<f64>();
            let position = (r * angle.cos(), r * angle.sin());
            let beacon_distances = beacons
                .iter()
                .map(|&(bx, by)| {
                    (position.0 - bx).hypot(position.1 - by).max(cfg.min_distance)
                })
                .collect();
            NodeState {
                id,
                position,
                distance: r.max(cfg.min_distance),
                toa_class: None,
                gains: Vec::new(),
                beacon_distances,
                beacon_fading: Vec::new(),
                solar_incidence: Vec::new(),
            }
        })
        .collect()
}

/// Draws per-slot fading for the uplink and for the energy source.
pub fn draw_channels(mut nodes: Vec<NodeState>, cfg: &ScenarioConfig) -> Vec<NodeState> {
    let mut fading = stream_rng(cfg.rng_seed, Stream::Fading);
    let mut eh_fading = stream_rng(cfg.rng_seed, Stream::EhFading);
    let mut solar = stream_rng(cfg.rng_seed, Stream::SolarAngle);
    let is_solar = matches!(cfg.eh_source, EhSource::Solar(_));
    for node in &mut nodes {
        node.gains = (0..cfg.num_slots)
            .map(|_| {
                let h: f64 = Exp1.sample(&mut fading);
                channel_gain(h, node.distance, cfg.pathloss_exponent)
            })
            .collect();
        let beacons = node.beacon_distances.len();
        node.beacon_fading = (0..cfg.num_slots)
            .map(|_| (0..beacons).map(|_| Exp1.sample(&mut eh_fading)).collect())
            .collect();
        node.solar_incidence = if is_solar {
            (0..cfg.num_slots)
                .map(|_| solar.random_range(0.0..=FRAC_PI_2))
                .collect()
        } else {
            Vec::new()
        };
    }
    nodes
}

/// Receiver noise power in watts: `-174 dBm/Hz + NF + 10 log10(BW)`.
pub fn noise_power(cfg: &ScenarioConfig) -> f64 {
    dbm_to_watts(-174.0 + cfg.noise_figure_db + 10.0 * cfg.bandwidth.log10())
}

/// A fully drawn network realization.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub toa: ToaSet,
    pub nodes: Vec<NodeState>,
    pub noise: f64,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let toa = ToaSet::build(&config)?;
        let nodes = draw_channels(place_nodes(&config), &config);
        let noise = noise_power(&config);
        Ok(Self {
            config,
            toa,
            nodes,
            noise,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_slots(&self) -> usize {
        self.config.num_slots
    }

    /// Harvest rates `E_n(k)` for every node and slot.
    pub fn harvest_rates(&self) -> Vec<Vec<f64>> {
        self.nodes
            .iter()
            .map(|node| {
                (0..self.num_slots())
                    .map(|k| crate::energy::harvest_rate(&self.config, node, k))
                    .collect()
            })
            .collect()
    }

    /// Transmitting order for successive interference cancellation:
    /// descending gain, ties broken by node id.
    pub fn sic_order(&self, slot: usize, candidates: &[usize]) -> Vec<usize> {
        let mut order = candidates.to_vec();
        order.sort_by(|&a, &b| {
            self.nodes[b].gains[slot]
                .total_cmp(&self.nodes[a].gains[slot])
                .then(a.cmp(&b))
        });
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_nodes_places_nothing() {
        let cfg = ScenarioConfig {
            num_nodes: 0,
            ..Default::default()
        };
        assert!(place_nodes(&cfg).is_empty());
    }

    #[test]
    fn placement_stays_in_disk_and_matches_radius_moment() {
        let cfg = ScenarioConfig {
            num_nodes: 100_000,
            radius: 1000.0,
            ..Default::default()
        };
        let nodes = place_nodes(&cfg);
        assert!(nodes.iter().all(|n| n.distance > 0.0 && n.distance <= 1000.0));
        let mean_sq: f64 =
            nodes.iter().map(|n| n.distance * n.distance).sum::<f64>() / nodes.len() as f64;
        let target = 1000.0f64.powi(2) / 2.0;
        assert!(((mean_sq - target) / target).abs() < 0.05, "{mean_sq}");
    }

    #[test]
    fn same_seed_same_nodes() {
        let cfg = ScenarioConfig::default();
        let a = draw_channels(place_nodes(&cfg), &cfg);
        let b = draw_channels(place_nodes(&cfg), &cfg);
        assert_eq!(a, b);
        let other = ScenarioConfig {
            rng_seed: 2,
            ..cfg.clone()
        };
        assert_ne!(a, draw_channels(place_nodes(&other), &other));
    }

    #[test]
    fn fading_has_unit_mean() {
        let cfg = ScenarioConfig {
            num_nodes: 1,
            num_slots: 1_000_000,
            pathloss_exponent: 0.0,
            eh_source: EhSource::solar(),
            ..Default::default()
        };
        let nodes = draw_channels(place_nodes(&cfg), &cfg);
        let mean = nodes[0].gains.iter().sum::<f64>() / cfg.num_slots as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn zero_exponent_leaves_fading_only() {
        assert_eq!(channel_gain(0.37, 123.0, 0.0), 0.37);
    }

    #[test]
    fn pathloss_direct_evaluation() {
        assert!((channel_gain(1.0, 10.0, 3.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn solar_stream_does_not_disturb_fading() {
        let rf = ScenarioConfig::default();
        let solar = ScenarioConfig {
            eh_source: EhSource::solar(),
            ..rf.clone()
        };
        let a = draw_channels(place_nodes(&rf), &rf);
        let b = draw_channels(place_nodes(&solar), &solar);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.gains, y.gains);
            assert_eq!(x.position, y.position);
        }
    }

    #[test]
    fn noise_power_values() {
        let cfg = ScenarioConfig::default();
        let dbm = watts_to_dbm(noise_power(&cfg));
        assert!((dbm - (-174.0 + 6.0 + 10.0 * 125e3f64.log10())).abs() < 1e-9);
        assert!((dbm + 117.03).abs() < 0.01);
        assert!((noise_power(&cfg) - 1.98e-15).abs() < 0.01e-15);

        let base = ScenarioConfig {
            noise_figure_db: 0.0,
            bandwidth: 1.0,
            ..Default::default()
        };
        assert!((watts_to_dbm(noise_power(&base)) + 174.0).abs() < 1e-9);

        let wide = ScenarioConfig {
            bandwidth: 250e3,
            ..Default::default()
        };
        let gap = watts_to_dbm(noise_power(&wide)) - dbm;
        assert!((gap - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn sic_order_is_a_permutation_sorted_by_gain() {
        let scenario = Scenario::build(ScenarioConfig::default()).unwrap();
        let all: Vec<usize> = (0..scenario.num_nodes()).collect();
        let order = scenario.sic_order(0, &all);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, all);
        for w in order.windows(2) {
            assert!(scenario.nodes[w[0]].gains[0] >= scenario.nodes[w[1]].gains[0]);
        }
    }

    #[test]
    fn density_round_trip() {
        let cfg = ScenarioConfig::default().with_density(1000.0);
        assert_eq!(cfg.num_nodes, 196);
        assert!((cfg.density() - 1000.0).abs() < 5.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            ScenarioConfig { duty_cycle: 0.0, ..Default::default() },
            ScenarioConfig { num_nodes: 0, ..Default::default() },
            ScenarioConfig { num_slots: 0, ..Default::default() },
            ScenarioConfig { max_tx_power: 0.0, ..Default::default() },
            ScenarioConfig { pathloss_exponent: 0.0, ..Default::default() },
            ScenarioConfig {
                interference: InterferenceScenario::CoSfInterSf { cross: 1.0 },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(ScenarioConfig::default().validate().is_ok());
    }

    #[test]
    fn correlation_matrix_checks_diagonal() {
        assert!(CorrelationMatrix::new(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_ok());
        assert!(CorrelationMatrix::new(vec![vec![0.9, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CorrelationMatrix::new(vec![vec![1.0, 1.0], vec![0.3, 1.0]]).is_err());
        assert!(CorrelationMatrix::new(vec![vec![1.0], vec![0.3, 1.0]]).is_err());
    }
}
