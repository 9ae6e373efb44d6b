//! Independent constraint checker working from raw ledgers.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::Allocation;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeLedger {
    pub id: usize,
    /// Airtime in seconds; `null` for nodes without a ToA class.
    pub airtime: Option<f64>,
    pub max_attempts: u32,
    pub rho: Vec<bool>,
    /// Harvest rate per slot in watts.
    pub harvest_rate: Vec<f64>,
    /// Harvesting time per slot in seconds.
    pub tau: Vec<f64>,
    /// Transmit power per slot in watts.
    pub power: Vec<f64>,
}

/// Everything needed to re-check an allocation without the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationDump {
    pub format_version: u32,
    pub slot_duration: f64,
    pub max_tx_power: f64,
    pub nodes: Vec<NodeLedger>,
}

impl AllocationDump {
    pub fn new(allocation: &Allocation, scenario: &Scenario) -> Self {
        let nodes = (0..scenario.num_nodes())
            .map(|n| NodeLedger {
                id: n,
                airtime: allocation.schedule.airtime(n),
                max_attempts: allocation.schedule.max_attempts[n],
                rho: allocation.schedule.rho[n].clone(),
                harvest_rate: allocation.harvest_rate[n].clone(),
                tau: allocation.tau[n].clone(),
                power: allocation.power[n].clone(),
            })
            .collect();
        Self {
            format_version: DUMP_FORMAT_VERSION,
            slot_duration: scenario.toa.slot_duration,
            max_tx_power: scenario.config.max_tx_power,
            nodes,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let dump: Self = serde_json::from_str(&text)?;
        if dump.format_version != DUMP_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "allocation dump version {} (expected {DUMP_FORMAT_VERSION})",
                dump.format_version
            )));
        }
        Ok(dump)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// `0 <= p <= P_t`.
    C1,
    /// Cumulative spending within cumulative harvested power.
    C2,
    /// `0 <= τ <= T_slot - ρ T_a`.
    C3,
    /// Attempts within the duty-cycle cap; only classed nodes transmit.
    C4,
    /// Nonzero power in a slot without transmission.
    SilentPower,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::C1 => "C1",
            Constraint::C2 => "C2",
            Constraint::C3 => "C3",
            Constraint::C4 => "C4",
            Constraint::SilentPower => "silent-power",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: usize,
    /// 0-based slot.
    pub slot: usize,
    pub constraint: Constraint,
    /// How far outside the feasible range the value lies.
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "node {} slot {}: {} violated by {:e}",
            self.node,
            self.slot + 1,
            self.constraint,
            self.magnitude
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const REL_TOL: f64 = 1e-9;

pub fn validate_dump(dump: &AllocationDump) -> ValidationReport {
    let mut violations = Vec::new();
    let mut flag = |node: usize, slot: usize, constraint: Constraint, magnitude: f64| {
        violations.push(Violation {
            node,
            slot,
            constraint,
            magnitude,
        })
    };
    let p_t = dump.max_tx_power;
    for node in &dump.nodes {
        let mut harvested = 0.0;
        let mut spent = 0.0;
        let mut attempts = 0u32;
        for k in 0..node.tau.len() {
            let (tau, p, rho) = (node.tau[k], node.power[k], node.rho[k]);
            if p < 0.0 {
                flag(node.id, k, Constraint::C1, -p);
            } else if p > p_t * (1.0 + REL_TOL) {
                flag(node.id, k, Constraint::C1, p - p_t);
            }
            if !rho && p != 0.0 {
                flag(node.id, k, Constraint::SilentPower, p.abs());
            }
            let airtime = node.airtime.unwrap_or(0.0);
            let tau_max = dump.slot_duration - if rho { airtime } else { 0.0 };
            if tau < 0.0 {
                flag(node.id, k, Constraint::C3, -tau);
            } else if tau > tau_max + REL_TOL * dump.slot_duration {
                flag(node.id, k, Constraint::C3, tau - tau_max);
            }
            if rho {
                attempts += 1;
                if node.airtime.is_none() {
                    flag(node.id, k, Constraint::C4, 1.0);
                }
                spent += p;
            }
            if let Some(airtime) = node.airtime {
                harvested += tau * node.harvest_rate[k] / airtime;
            }
            if spent > harvested * (1.0 + REL_TOL) + f64::MIN_POSITIVE {
                flag(node.id, k, Constraint::C2, spent - harvested);
            }
        }
        if attempts > node.max_attempts {
            let last = node.tau.len().saturating_sub(1);
            flag(node.id, last, Constraint::C4, (attempts - node.max_attempts) as f64);
        }
    }
    ValidationReport { violations }
}

pub fn validate_allocation(allocation: &Allocation, scenario: &Scenario) -> ValidationReport {
    validate_dump(&AllocationDump::new(allocation, scenario))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump() -> AllocationDump {
        AllocationDump {
            format_version: 1,
            slot_duration: 1.0,
            max_tx_power: 0.025,
            nodes: vec![NodeLedger {
                id: 0,
                airtime: Some(0.01),
                max_attempts: 2,
                rho: vec![true, true],
                harvest_rate: vec![1e-3, 1e-3],
                tau: vec![0.0, 0.0],
                power: vec![0.0, 0.0],
            }],
        }
    }

    #[test]
    fn all_zero_passes() {
        assert!(validate_dump(&dump()).passed());
    }

    #[test]
    fn power_above_cap_fails_c1() {
        let mut d = dump();
        d.nodes[0].tau = vec![0.99, 0.99];
        d.nodes[0].power[0] = 0.05;
        let report = validate_dump(&d);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].constraint, Constraint::C1);
        assert!((report.violations[0].magnitude - 0.025).abs() < 1e-15);
    }

    #[test]
    fn overspending_fails_c2() {
        let mut d = dump();
        d.nodes[0].tau = vec![0.1, 0.0];
        d.nodes[0].power = vec![0.01, 0.001];
        let report = validate_dump(&d);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!((v.constraint, v.slot), (Constraint::C2, 1));
    }

    #[test]
    fn long_harvest_fails_c3() {
        let mut d = dump();
        d.nodes[0].tau = vec![1.0, -0.1];
        let kinds: Vec<_> = validate_dump(&d).violations.iter().map(|v| v.constraint).collect();
        assert_eq!(kinds, vec![Constraint::C3, Constraint::C3]);
    }

    #[test]
    fn too_many_attempts_fail_c4() {
        let mut d = dump();
        d.nodes[0].max_attempts = 1;
        assert_eq!(validate_dump(&d).violations[0].constraint, Constraint::C4);
    }

    #[test]
    fn silent_slot_power_is_flagged() {
        let mut d = dump();
        d.nodes[0].rho[1] = false;
        d.nodes[0].tau = vec![0.5, 1.0];
        d.nodes[0].power[1] = 1e-3;
        let kinds: Vec<_> = validate_dump(&d).violations.iter().map(|v| v.constraint).collect();
        assert_eq!(kinds, vec![Constraint::SilentPower]);
    }

    #[test]
    fn dump_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alloc.json");
        dump().save(&path).unwrap();
        assert_eq!(AllocationDump::load(&path).unwrap(), dump());
    }
}
