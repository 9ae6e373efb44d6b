//! Harvest models and the harvest-then-transmit energy ledger.
//!
//! Harvest rates are expressed in watts (energy per unit time). The ledger
//! converts harvested energy into a power budget per transmission by dividing
//! by the node's airtime, so the causality constraint compares transmit powers
//! with harvested powers directly.

use serde::{Deserialize, Serialize};

use crate::airtime::{SlotSchedule, ToaSet};
use crate::error::{Error, Result};
use crate::scenario::{NodeState, ScenarioConfig};

/// Power beacons radiating energy towards the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeaconField {
    pub count: usize,
    /// Transmit power of each beacon in watts.
    pub power: f64,
    /// Beacons sit equally spaced on a circle of this radius around the
    /// gateway. `None` means half the cell radius.
    pub ring_radius: Option<f64>,
}

impl Default for BeaconField {
    fn default() -> Self {
        Self {
            count: 3,
            power: 0.1,
            ring_radius: None,
        }
    }
}

/// Logistic rectifier model with the zero-input offset removed, so that
/// `psi(0) == 0` and `psi` saturates at `saturation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearHarvester {
    /// Charging-rate steepness (1/W).
    pub steepness: f64,
    /// Turn-on input power (W).
    pub turn_on: f64,
    /// Maximum harvested power (W).
    pub saturation: f64,
}

impl Default for NonlinearHarvester {
    fn default() -> Self {
        Self {
            steepness: 1500.0,
            turn_on: 0.0022,
            saturation: 0.024,
        }
    }
}

impl NonlinearHarvester {
    /// Logistic value at zero input, as a fraction of saturation.
    pub fn zero_offset(&self) -> f64 {
        1.0 / (1.0 + (self.steepness * self.turn_on).exp())
    }

    pub fn logistic(&self, input: f64) -> f64 {
        self.saturation / (1.0 + (-self.steepness * (input - self.turn_on)).exp())
    }

    pub fn psi(&self, input: f64) -> f64 {
        let omega = self.zero_offset();
        let out = (self.logistic(input) - self.saturation * omega) / (1.0 - omega);
        out.clamp(0.0, self.saturation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolarPanel {
    pub efficiency: f64,
    /// Panel area in m².
    pub area: f64,
    /// Beam irradiance on the tilted plane in W/m².
    pub irradiance: f64,
}

impl Default for SolarPanel {
    fn default() -> Self {
        Self {
            efficiency: 0.15,
            area: 0.058 * 0.058,
            irradiance: 1000.0,
        }
    }
}

impl SolarPanel {
    pub fn harvest(&self, incidence: f64) -> f64 {
        (self.efficiency * self.area * self.irradiance * incidence.cos()).max(0.0)
    }
}

/// Ambient energy source feeding every node of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EhSource {
    RfLinear {
        beacons: BeaconField,
        efficiency: f64,
    },
    RfNonlinear {
        beacons: BeaconField,
        harvester: NonlinearHarvester,
    },
    Solar(SolarPanel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EhSourceKind {
    RfLinear,
    RfNonlinear,
    Solar,
}

impl EhSourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EhSourceKind::RfLinear => "rf-linear",
            EhSourceKind::RfNonlinear => "rf-nonlinear",
            EhSourceKind::Solar => "solar",
        }
    }
}

impl std::str::FromStr for EhSourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rf-linear" => Ok(EhSourceKind::RfLinear),
            "rf-nonlinear" | "rf" => Ok(EhSourceKind::RfNonlinear),
            "solar" => Ok(EhSourceKind::Solar),
            other => Err(format!("unknown eh source `{other}`")),
        }
    }
}

impl EhSource {
    pub fn rf_nonlinear() -> Self {
        EhSource::RfNonlinear {
            beacons: BeaconField::default(),
            harvester: NonlinearHarvester::default(),
        }
    }

    pub fn solar() -> Self {
        EhSource::Solar(SolarPanel::default())
    }

    pub fn kind(&self) -> EhSourceKind {
        match self {
            EhSource::RfLinear { .. } => EhSourceKind::RfLinear,
            EhSource::RfNonlinear { .. } => EhSourceKind::RfNonlinear,
            EhSource::Solar(_) => EhSourceKind::Solar,
        }
    }

    pub fn beacons(&self) -> Option<&BeaconField> {
        match self {
            EhSource::RfLinear { beacons, .. } | EhSource::RfNonlinear { beacons, .. } => {
                Some(beacons)
            }
            EhSource::Solar(_) => None,
        }
    }

    /// Maps received RF power to harvested power. Solar sources have no RF
    /// conversion and return zero.
    pub fn psi(&self, received: f64) -> f64 {
        match self {
            EhSource::RfLinear { efficiency, .. } => efficiency * received,
            EhSource::RfNonlinear { harvester, .. } => harvester.psi(received),
            EhSource::Solar(_) => 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        match self {
            EhSource::RfLinear { beacons, efficiency } => {
                if !(0.0..=1.0).contains(efficiency) {
                    return bad("rf efficiency must lie in [0, 1]");
                }
                validate_beacons(beacons)
            }
            EhSource::RfNonlinear { beacons, harvester } => {
                if !(harvester.saturation > 0.0) {
                    return bad("nonlinear saturation must be positive");
                }
                if !(harvester.steepness > 0.0) || !(harvester.turn_on >= 0.0) {
                    return bad("nonlinear steepness must be positive and turn-on nonnegative");
                }
                validate_beacons(beacons)
            }
            EhSource::Solar(panel) => {
                if !(0.0..=1.0).contains(&panel.efficiency) {
                    return bad("solar efficiency must lie in [0, 1]");
                }
                if !(panel.area >= 0.0) || !(panel.irradiance >= 0.0) {
                    return bad("solar area and irradiance must be nonnegative");
                }
                Ok(())
            }
        }
    }
}

fn validate_beacons(beacons: &BeaconField) -> Result<()> {
    if beacons.count == 0 {
        return Err(Error::InvalidConfig("rf source needs at least one beacon".into()));
    }
    if !(beacons.power >= 0.0) {
        return Err(Error::InvalidConfig("beacon power must be nonnegative".into()));
    }
    if let Some(r) = beacons.ring_radius {
        if !(r >= 0.0) {
            return Err(Error::InvalidConfig("beacon ring radius must be nonnegative".into()));
        }
    }
    Ok(())
}

/// Harvest rate `E_n(k)` in watts for `node` during `slot` (0-based).
pub fn harvest_rate(cfg: &ScenarioConfig, node: &NodeState, slot: usize) -> f64 {
    match &cfg.eh_source {
        EhSource::Solar(panel) => panel.harvest(node.solar_incidence[slot]),
        source @ (EhSource::RfLinear { beacons, .. } | EhSource::RfNonlinear { beacons, .. }) => {
            let fading = &node.beacon_fading[slot];
            node.beacon_distances
                .iter()
                .zip(fading)
                .map(|(&d, &h)| {
                    source.psi(beacons.power * h * d.powf(-cfg.beacon_pathloss_exponent))
                })
                .sum()
        }
    }
}

/// Longest harvesting time in a slot: the whole slot in EH mode, the slot
/// minus the airtime when the node transmits.
pub fn max_eh_time(schedule: &SlotSchedule, toa: &ToaSet, node: usize, slot: usize) -> f64 {
    match schedule.airtime(node) {
        Some(airtime) if schedule.transmits(node, slot) => {
            (toa.slot_duration - airtime).max(0.0)
        }
        _ => toa.slot_duration,
    }
}

/// Per-node, per-slot harvesting and spending record.
#[derive(Clone, Debug)]
pub struct EnergyLedger {
    airtime: Vec<Option<f64>>,
    rho: Vec<Vec<bool>>,
    harvest_rate: Vec<Vec<f64>>,
    tau: Vec<Vec<f64>>,
    power: Vec<Vec<f64>>,
}

impl EnergyLedger {
    /// Empty ledger: no harvesting time and no spending recorded yet.
    pub fn new(schedule: &SlotSchedule, harvest_rate: Vec<Vec<f64>>) -> Self {
        let nodes = schedule.num_nodes();
        let slots = schedule.num_slots();
        assert_eq!(harvest_rate.len(), nodes, "harvest rates must cover every node");
        Self {
            airtime: (0..nodes).map(|n| schedule.airtime(n)).collect(),
            rho: schedule.rho.clone(),
            harvest_rate,
            tau: vec![vec![0.0; slots]; nodes],
            power: vec![vec![0.0; slots]; nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.airtime.len()
    }

    pub fn harvest_rate(&self, node: usize, slot: usize) -> f64 {
        self.harvest_rate[node][slot]
    }

    pub fn tau(&self, node: usize, slot: usize) -> f64 {
        self.tau[node][slot]
    }

    pub fn power(&self, node: usize, slot: usize) -> f64 {
        self.power[node][slot]
    }

    pub fn airtime(&self, node: usize) -> Option<f64> {
        self.airtime[node]
    }

    pub fn transmits(&self, node: usize, slot: usize) -> bool {
        self.rho[node][slot]
    }

    pub fn set_tau(&mut self, node: usize, slot: usize, tau: f64) {
        self.tau[node][slot] = tau;
    }

    pub fn set_power(&mut self, node: usize, slot: usize, power: f64) {
        self.power[node][slot] = power;
    }

    /// Harvested energy `τ·E` in joules.
    pub fn harvested_energy(&self, node: usize, slot: usize) -> f64 {
        self.tau[node][slot] * self.harvest_rate[node][slot]
    }

    /// Harvested energy expressed as power over one airtime. Nodes without a
    /// ToA class never transmit and carry no power budget.
    pub fn harvested_power(&self, node: usize, slot: usize) -> f64 {
        match self.airtime[node] {
            Some(airtime) => self.harvested_energy(node, slot) / airtime,
            None => 0.0,
        }
    }

    /// Harvested energy `Σ_{j<slot} τ(j)E(j)` before `slot`.
    pub fn energy_before(&self, node: usize, slot: usize) -> f64 {
        (0..slot).map(|j| self.harvested_energy(node, j)).sum()
    }

    /// Budget carried into `slot`: past harvested power minus past spending.
    pub fn carryover(&self, node: usize, slot: usize) -> f64 {
        (0..slot)
            .map(|j| {
                let spent = if self.rho[node][j] { self.power[node][j] } else { 0.0 };
                self.harvested_power(node, j) - spent
            })
            .sum()
    }

    /// Available power at `slot` given the harvesting time recorded for it.
    pub fn available_power(&self, node: usize, slot: usize) -> Result<f64> {
        let value = self.carryover(node, slot) + self.harvested_power(node, slot);
        let scale: f64 = (0..=slot).map(|j| self.harvested_power(node, j)).sum();
        if value < -1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NegativeBudget { node, slot, value });
        }
        Ok(value.max(0.0))
    }

    /// Energy left in the battery after the last slot.
    pub fn residual_energy(&self, node: usize) -> f64 {
        let slots = self.tau[node].len();
        match self.airtime[node] {
            Some(airtime) => self.carryover(node, slots) * airtime,
            None => self.energy_before(node, slots),
        }
    }

    /// `(harvest_rate, tau, power)`, each indexed `[node][slot]`.
    pub(crate) fn into_parts(self) -> [Vec<Vec<f64>>; 3] {
        [self.harvest_rate, self.tau, self.power]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airtime::build_schedule;

    #[test]
    fn nonlinear_psi_vanishes_at_zero() {
        let h = NonlinearHarvester::default();
        assert_eq!(h.psi(0.0), 0.0);
    }

    #[test]
    fn nonlinear_psi_at_turn_on_point() {
        let h = NonlinearHarvester::default();
        let omega = 1.0 / (1.0 + 3.3f64.exp());
        let expected = (0.012 - 0.024 * omega) / (1.0 - omega);
        assert!((h.psi(0.0022) - expected).abs() < 1e-15);
        assert!((h.psi(0.0022) - 11.557e-3).abs() < 1e-6);
    }

    #[test]
    fn nonlinear_psi_monotone_and_bounded_on_grid() {
        let h = NonlinearHarvester::default();
        let mut prev = 0.0;
        for i in 0..=10_000 {
            let x = i as f64 * 1e-5;
            let y = h.psi(x);
            assert!(y >= prev, "psi decreased at {x}");
            assert!(y <= h.saturation);
            prev = y;
        }
    }

    #[test]
    fn solar_harvest_matches_panel_product() {
        let p = SolarPanel::default();
        assert!((p.harvest(0.0) - 0.15 * 0.058 * 0.058 * 1000.0).abs() < 1e-15);
        assert!((p.harvest(0.0) - 0.5046).abs() < 1e-12);
        assert!(p.harvest(std::f64::consts::FRAC_PI_2) < 1e-16);
    }

    #[test]
    fn linear_psi_scales() {
        let s = EhSource::RfLinear {
            beacons: BeaconField::default(),
            efficiency: 0.5,
        };
        assert!((s.psi(0.010) - 0.005).abs() < 1e-18);
    }

    fn one_node_ledger(classes: &[Option<usize>], slots: usize, rate: f64) -> (ToaSet, EnergyLedger) {
        let cfg = ScenarioConfig::default();
        let toa = ToaSet::build(&cfg).unwrap();
        let schedule = build_schedule(&toa, classes, slots, cfg.duty_cycle);
        let rates = vec![vec![rate; slots]; classes.len()];
        (toa, EnergyLedger::new(&schedule, rates))
    }

    #[test]
    fn max_eh_time_cases() {
        let cfg = ScenarioConfig::default();
        let toa = ToaSet::build(&cfg).unwrap();
        // class 2 (index 1) transmits at slot 2 only among the first two
        let schedule = build_schedule(&toa, &[Some(0), Some(1)], 2, cfg.duty_cycle);
        assert_eq!(max_eh_time(&schedule, &toa, 1, 0), toa.slot_duration);
        let t = max_eh_time(&schedule, &toa, 0, 0);
        assert!((t - (1.024 - 0.01024)).abs() < 1e-12);
        assert!((t - 1.01376).abs() < 1e-12);
    }

    #[test]
    fn max_eh_time_zero_when_airtime_fills_slot() {
        let cfg = ScenarioConfig::default();
        let mut toa = ToaSet::build(&cfg).unwrap();
        toa.slot_duration = toa.airtimes[0];
        let schedule = build_schedule(&toa, &[Some(0)], 1, cfg.duty_cycle);
        assert_eq!(max_eh_time(&schedule, &toa, 0, 0), 0.0);
    }

    #[test]
    fn available_power_divides_energy_by_airtime() {
        let (_, mut ledger) = one_node_ledger(&[Some(0)], 2, 1e-3);
        ledger.airtime[0] = Some(0.01);
        ledger.set_tau(0, 0, 1.0);
        assert!((ledger.available_power(0, 0).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn spending_everything_leaves_only_new_harvest() {
        let (_, mut ledger) = one_node_ledger(&[Some(0)], 2, 1e-3);
        ledger.set_tau(0, 0, 0.5);
        let budget = ledger.available_power(0, 0).unwrap();
        ledger.set_power(0, 0, budget);
        ledger.set_tau(0, 1, 0.25);
        let expected = ledger.harvested_power(0, 1);
        assert!((ledger.available_power(0, 1).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_harvest_time_gives_zero_budget() {
        let (_, ledger) = one_node_ledger(&[Some(0), Some(1)], 4, 1e-3);
        for k in 0..4 {
            assert_eq!(ledger.available_power(0, k).unwrap(), 0.0);
            assert_eq!(ledger.available_power(1, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn overspending_is_reported() {
        let (_, mut ledger) = one_node_ledger(&[Some(0)], 2, 1e-3);
        ledger.set_tau(0, 0, 0.1);
        ledger.set_power(0, 0, 1.0);
        assert!(matches!(
            ledger.available_power(0, 1),
            Err(Error::NegativeBudget { node: 0, slot: 1, .. })
        ));
    }

    #[test]
    fn residual_energy_conserves_harvest() {
        let (toa, mut ledger) = one_node_ledger(&[Some(0)], 4, 3.7e-4);
        let airtime = toa.airtimes[0];
        for k in 0..4 {
            ledger.set_tau(0, k, 0.3 + 0.1 * k as f64);
            let budget = ledger.available_power(0, k).unwrap();
            ledger.set_power(0, k, 0.6 * budget);
        }
        let spent: f64 = (0..4).map(|k| ledger.power(0, k) * airtime).sum();
        let harvested: f64 = (0..4).map(|k| ledger.harvested_energy(0, k)).sum();
        let total = spent + ledger.residual_energy(0);
        assert!(((total - harvested) / harvested).abs() < 1e-12);
    }
}
