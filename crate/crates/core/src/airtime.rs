//! ToA classes, the slot grid, and per-node transmission schedules.
//!
//! Class `i` (0-based) uses spreading factor `7 + i`, so its airtime is
//! `2^i` times the class-0 airtime. Slots are 0-based in storage; a node of
//! class `i` transmits in slot `k` when `(k + 1) % 2^i == 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

/// Lowest spreading factor, used by class 0.
pub const BASE_SPREADING_FACTOR: u32 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToaSet {
    /// Airtime of each class in seconds.
    pub airtimes: Vec<f64>,
    /// Mandatory silence after a packet of each class.
    pub time_offs: Vec<f64>,
    /// Airtime plus silence.
    pub packet_durations: Vec<f64>,
    /// Equal to the shortest packet duration.
    pub slot_duration: f64,
}

impl ToaSet {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.num_toa_classes == 0 || !(cfg.bandwidth > 0.0) || cfg.symbols_per_packet == 0 {
            return Err(Error::InvalidConfig(
                "ToA set needs at least one class, positive bandwidth and symbols".into(),
            ));
        }
        let d = cfg.duty_cycle;
        let airtimes: Vec<f64> = (0..cfg.num_toa_classes)
            .map(|i| {
                let sf = BASE_SPREADING_FACTOR + i as u32;
                cfg.symbols_per_packet as f64 * 2f64.powi(sf as i32) / cfg.bandwidth
            })
            .collect();
        let time_offs = airtimes.iter().map(|t| (1.0 - d) / d * t).collect();
        let packet_durations: Vec<f64> = airtimes.iter().map(|t| t / d).collect();
        let slot_duration = packet_durations[0];
        let airtime_sum: f64 = airtimes.iter().sum();
        if airtime_sum >= slot_duration {
            return Err(Error::AirtimeBudget {
                airtime_sum,
                packet_duration: slot_duration,
            });
        }
        Ok(Self {
            airtimes,
            time_offs,
            packet_durations,
            slot_duration,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.airtimes.len()
    }

    /// Slots between consecutive transmissions of `class`.
    pub fn period(class: usize) -> usize {
        1usize << class
    }
}

pub fn build_toa_set(cfg: &ScenarioConfig) -> Result<ToaSet> {
    ToaSet::build(cfg)
}

/// Which nodes transmit in which slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotSchedule {
    /// `rho[n][k]`: node `n` transmits in slot `k`.
    pub rho: Vec<Vec<bool>>,
    /// Cumulative attempt count through slot `k`.
    pub mu: Vec<Vec<u32>>,
    pub max_attempts: Vec<u32>,
    /// Window length `K · T_slot` in seconds.
    pub window: f64,
    classes: Vec<Option<usize>>,
    airtimes: Vec<Option<f64>>,
}

impl SlotSchedule {
    pub fn num_nodes(&self) -> usize {
        self.rho.len()
    }

    pub fn num_slots(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    pub fn transmits(&self, node: usize, slot: usize) -> bool {
        self.rho[node][slot]
    }

    pub fn attempts(&self, node: usize, slot: usize) -> u32 {
        self.mu[node][slot]
    }

    pub fn class(&self, node: usize) -> Option<usize> {
        self.classes[node]
    }

    pub fn airtime(&self, node: usize) -> Option<f64> {
        self.airtimes[node]
    }

    /// Nodes transmitting in `slot`, in id order.
    pub fn transmitters(&self, slot: usize) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| self.rho[n][slot]).collect()
    }

    /// Assigned nodes that never transmit in the window because their class
    /// period exceeds the number of slots.
    pub fn silent_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&n| self.classes[n].is_some() && self.mu[n].last().copied().unwrap_or(0) == 0)
            .collect()
    }

    /// Writes `node,slot,rho,mu` rows with 1-based slots.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,slot,rho,mu")?;
        for n in 0..self.num_nodes() {
            for k in 0..self.num_slots() {
                writeln!(out, "{},{},{},{}", n, k + 1, self.rho[n][k] as u8, self.mu[n][k])?;
            }
        }
        Ok(())
    }
}

/// Builds the duty-cycled schedule for a class assignment. Nodes without a
/// class never transmit.
pub fn build_schedule(
    toa: &ToaSet,
    classes: &[Option<usize>],
    num_slots: usize,
    duty_cycle: f64,
) -> SlotSchedule {
    let window = num_slots as f64 * toa.slot_duration;
    let mut rho = Vec::with_capacity(classes.len());
    let mut mu = Vec::with_capacity(classes.len());
    let mut max_attempts = Vec::with_capacity(classes.len());
    for class in classes {
        let row: Vec<bool> = match class {
            Some(c) => (1..=num_slots).map(|k| k % ToaSet::period(*c) == 0).collect(),
            None => vec![false; num_slots],
        };
        let counts = row
            .iter()
            .scan(0u32, |acc, &r| {
                *acc += r as u32;
                Some(*acc)
            })
            .collect();
        let cap = match class {
            Some(c) => {
                let packets = (window / toa.airtimes[*c] * (1.0 + 1e-12)).floor();
                (duty_cycle * packets + 1e-9).floor() as u32
            }
            None => 0,
        };
        rho.push(row);
        mu.push(counts);
        max_attempts.push(cap);
    }
    SlotSchedule {
        rho,
        mu,
        max_attempts,
        window,
        classes: classes.to_vec(),
        airtimes: classes.iter().map(|c| c.map(|c| toa.airtimes[c])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toa() -> ToaSet {
        ToaSet::build(&ScenarioConfig::default()).unwrap()
    }

    #[test]
    fn lora_airtimes() {
        let t = toa();
        assert!((t.airtimes[0] - 10.24e-3).abs() < 1e-15);
        assert!((t.airtimes[1] - 20.48e-3).abs() < 1e-15);
        assert!((t.slot_duration - 1.024).abs() < 1e-12);
        for i in 1..t.num_classes() {
            assert_eq!(t.airtimes[i], 2.0 * t.airtimes[i - 1]);
            assert!((t.time_offs[i] - 2.0 * t.time_offs[i - 1]).abs() < 1e-12);
            assert!((t.packet_durations[i] - 2.0 * t.packet_durations[i - 1]).abs() < 1e-12);
        }
        assert!((t.time_offs[0] - 0.99 / 0.01 * 10.24e-3).abs() < 1e-12);
        assert!(t.airtimes.iter().sum::<f64>() < t.slot_duration);
    }

    #[test]
    fn airtime_budget_violation_names_sums() {
        let cfg = ScenarioConfig {
            duty_cycle: 0.1,
            ..Default::default()
        };
        match ToaSet::build(&cfg) {
            Err(Error::AirtimeBudget {
                airtime_sum,
                packet_duration,
            }) => {
                assert!((airtime_sum - 63.0 * 10.24e-3).abs() < 1e-12);
                assert!((packet_duration - 0.1024).abs() < 1e-12);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
        let small = ScenarioConfig {
            duty_cycle: 0.1,
            num_toa_classes: 3,
            ..Default::default()
        };
        assert!(ToaSet::build(&small).is_ok());
    }

    #[test]
    fn class_zero_transmits_every_slot() {
        let s = build_schedule(&toa(), &[Some(0)], 4, 0.01);
        assert_eq!(s.rho[0], vec![true; 4]);
        assert_eq!(s.mu[0][3], 4);
        assert_eq!(s.max_attempts[0], 4);
    }

    #[test]
    fn class_one_transmits_every_other_slot() {
        let s = build_schedule(&toa(), &[Some(1)], 4, 0.01);
        assert_eq!(s.rho[0], vec![false, true, false, true]);
        assert_eq!(s.mu[0], vec![0, 1, 1, 2]);
    }

    #[test]
    fn attempts_never_exceed_cap() {
        let classes: Vec<Option<usize>> = (0..6).map(Some).chain([None]).collect();
        for k in [1, 2, 4, 7, 16, 32, 64] {
            let s = build_schedule(&toa(), &classes, k, 0.01);
            for n in 0..classes.len() {
                let sent = s.rho[n].iter().filter(|&&r| r).count() as u32;
                assert_eq!(sent, s.mu[n][k - 1]);
                assert!(sent <= s.max_attempts[n], "class {n} K={k}");
            }
        }
    }

    #[test]
    fn long_classes_are_silent_in_short_windows() {
        let s = build_schedule(&toa(), &[Some(0), Some(2), Some(3), None], 4, 0.01);
        assert_eq!(s.silent_nodes(), vec![2]);
    }

    #[test]
    fn schedule_csv_rows() {
        let s = build_schedule(&toa(), &[Some(1)], 2, 0.01);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "node,slot,rho,mu\n0,1,0,0\n0,2,1,1\n");
    }
}
