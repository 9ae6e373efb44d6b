//! ToA class assignment from first-slot RSSI.

use serde::{Deserialize, Serialize};

use crate::scenario::{watts_to_dbm, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToaMode {
    /// Equal group sizes.
    Unfair,
    /// Group sizes inversely proportional to packet duration, so every
    /// class occupies the same total airtime.
    Fair,
    /// Classes by equal-area distance rings around the gateway.
    Distance,
}

impl ToaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ToaMode::Unfair => "unfair",
            ToaMode::Fair => "fair",
            ToaMode::Distance => "distance",
        }
    }
}

impl std::str::FromStr for ToaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unfair" => Ok(ToaMode::Unfair),
            "fair" => Ok(ToaMode::Fair),
            "distance" => Ok(ToaMode::Distance),
            other => Err(format!("unknown toa mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToaAssignment {
    /// Nodes above the sensitivity threshold, strongest RSSI first.
    pub active: Vec<usize>,
    pub group_sizes: Vec<usize>,
    /// Class of every node; `None` for inactive nodes.
    pub classes: Vec<Option<usize>>,
    /// First-slot RSSI of every node in dBm.
    pub rssi_dbm: Vec<f64>,
}

impl ToaAssignment {
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// Rounds `ideal` shares to integers summing to `total`. Leftover units go
/// to the largest fractional parts; ties favour lower indices.
pub fn largest_remainder(ideal: &[f64], total: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Group sizes for the equal-count and equal-airtime modes.
pub fn group_sizes(active: usize, packet_durations: &[f64], mode: ToaMode) -> Vec<usize> {
    let m = packet_durations.len();
    let ideal: Vec<f64> = match mode {
        ToaMode::Fair => {
            let inv_sum: f64 = packet_durations.iter().map(|t| 1.0 / t).sum();
            packet_durations
                .iter()
                .map(|t| active as f64 / (t * inv_sum))
                .collect()
        }
        _ => vec![active as f64 / m as f64; m],
    };
    largest_remainder(&ideal, active)
}

/// Ring index of a node at `distance` when the disk of `radius` is cut
/// into `classes` equal-area annuli.
pub fn distance_class(distance: f64, radius: f64, classes: usize) -> usize {
    let frac = (distance / radius).powi(2) * classes as f64;
    (frac.ceil() as usize).clamp(1, classes) - 1
}

/// Largest first-slot transmit power of each node when it harvests for the
/// whole slot minus the shortest airtime.
pub fn first_slot_max_power(scenario: &Scenario, harvest_rates: &[Vec<f64>]) -> Vec<f64> {
    let airtime = scenario.toa.airtimes[0];
    let tau = scenario.toa.slot_duration - airtime;
    harvest_rates
        .iter()
        .map(|rates| (tau * rates[0] / airtime).min(scenario.config.max_tx_power))
        .collect()
}

pub fn assign_toa(scenario: &Scenario, harvest_rates: &[Vec<f64>], mode: ToaMode) -> ToaAssignment {
    let powers = first_slot_max_power(scenario, harvest_rates);
    let rssi_dbm: Vec<f64> = scenario
        .nodes
        .iter()
        .zip(&powers)
        .map(|(node, p)| watts_to_dbm(p * node.gains[0]))
        .collect();
    let mut active: Vec<usize> = (0..scenario.num_nodes())
        .filter(|&n| rssi_dbm[n] > scenario.config.sensitivity_dbm)
        .collect();
    active.sort_by(|&a, &b| rssi_dbm[b].total_cmp(&rssi_dbm[a]).then(a.cmp(&b)));

    let m = scenario.toa.num_classes();
    let mut classes = vec![None; scenario.num_nodes()];
    let group_sizes = match mode {
        ToaMode::Distance => {
            let mut sizes = vec![0; m];
            for &n in &active {
                let c = distance_class(scenario.nodes[n].distance, scenario.config.radius, m);
                classes[n] = Some(c);
                sizes[c] += 1;
            }
            sizes
        }
        _ => {
            let sizes = group_sizes(active.len(), &scenario.toa.packet_durations, mode);
            let mut it = active.iter();
            for (c, &size) in sizes.iter().enumerate() {
                for &n in it.by_ref().take(size) {
                    classes[n] = Some(c);
                }
            }
            sizes
        }
    };
    ToaAssignment {
        active,
        group_sizes,
        classes,
        rssi_dbm,
    }
}
