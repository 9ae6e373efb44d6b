//! Three-stage resource allocation: ToA classes once, then harvesting times
//! and transmit powers slot by slot.

pub mod cccp;
pub mod eh;
pub mod toa;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::airtime::{build_schedule, SlotSchedule};
use crate::energy::{max_eh_time, EnergyLedger};
use crate::error::Result;
use crate::interference::{rates, RateReport, Receiver, SlotLinks};
use crate::scenario::Scenario;

pub use cccp::{cccp_power, surrogate, CccpOutcome, CccpSettings};
pub use eh::{optimize_eh_time, EhBranch, EhDecision, EhInputs, SlotEhSearch, DEFAULT_GRID_POINTS};
pub use toa::{assign_toa, group_sizes, ToaAssignment, ToaMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EhMode {
    Optimal,
    /// Always harvest for the longest allowed time.
    Max,
}

impl EhMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EhMode::Optimal => "optimal",
            EhMode::Max => "max",
        }
    }
}

impl std::str::FromStr for EhMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(EhMode::Optimal),
            "max" => Ok(EhMode::Max),
            other => Err(format!("unknown eh mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerMode {
    Cccp,
    /// Spend `min(P_t, available)` on every transmission.
    Max,
}

impl PowerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PowerMode::Cccp => "cccp",
            PowerMode::Max => "max",
        }
    }
}

impl std::str::FromStr for PowerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cccp" => Ok(PowerMode::Cccp),
            "max" => Ok(PowerMode::Max),
            other => Err(format!("unknown power mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocatorFlags {
    pub toa_mode: ToaMode,
    pub eh_mode: EhMode,
    pub power_mode: PowerMode,
    /// `Sic` for NOMA, `Conventional` for the no-NOMA baseline.
    pub receiver: Receiver,
    pub grid_points: usize,
    pub cccp: CccpSettings,
}

impl Default for AllocatorFlags {
    fn default() -> Self {
        Self {
            toa_mode: ToaMode::Unfair,
            eh_mode: EhMode::Optimal,
            power_mode: PowerMode::Cccp,
            receiver: Receiver::Sic,
            grid_points: DEFAULT_GRID_POINTS,
            cccp: CccpSettings::default(),
        }
    }
}

impl AllocatorFlags {
    pub fn baseline() -> Self {
        Self {
            eh_mode: EhMode::Max,
            power_mode: PowerMode::Max,
            ..Self::default()
        }
    }

    pub fn noma(&self) -> bool {
        self.receiver == Receiver::Sic
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub no_active_nodes: bool,
    /// Assigned nodes whose class never transmits within the window.
    pub silent_nodes: Vec<usize>,
    pub eh_branches: BTreeMap<EhBranch, usize>,
    /// `(node, slot)` pairs that had to transmit with zero harvest rate.
    pub zero_harvest: Vec<(usize, usize)>,
    /// Outer CCCP iterations per slot (empty for max power).
    pub cccp_iterations: Vec<usize>,
    /// True objective trace per slot.
    pub objective_traces: Vec<Vec<f64>>,
    /// Slots whose inner solve hit the iteration cap.
    pub inner_capped_slots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub flags: AllocatorFlags,
    pub assignment: ToaAssignment,
    pub schedule: SlotSchedule,
    /// `E_n(k)` used by the ledger.
    pub harvest_rate: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Allocation {
    pub fn rates(&self, scenario: &Scenario) -> RateReport {
        rates(scenario, &self.schedule, &self.tau, &self.power, self.flags.receiver)
    }
}

/// Runs the full allocation for one scenario realization.
pub fn allocate(scenario: &Scenario, flags: &AllocatorFlags) -> Result<Allocation> {
    let harvest = scenario.harvest_rates();
    let assignment = assign_toa(scenario, &harvest, flags.toa_mode);
    let schedule = build_schedule(
        &scenario.toa,
        &assignment.classes,
        scenario.num_slots(),
        scenario.config.duty_cycle,
    );
    let mut diagnostics = Diagnostics {
        no_active_nodes: assignment.is_empty(),
        silent_nodes: schedule.silent_nodes(),
        ..Default::default()
    };
    let mut ledger = EnergyLedger::new(&schedule, harvest);
    let slot_duration = scenario.toa.slot_duration;
    let p_max = scenario.config.max_tx_power;

    for k in 0..scenario.num_slots() {
        for n in 0..scenario.num_nodes() {
            if !schedule.transmits(n, k) {
                ledger.set_tau(n, k, slot_duration);
                *diagnostics.eh_branches.entry(EhBranch::EhMode).or_default() += 1;
            }
        }
        let links = SlotLinks::new(scenario, &schedule, k, flags.receiver);
        if links.is_empty() {
            continue;
        }
        let tau_max: Vec<f64> = links
            .nodes
            .iter()
            .map(|&n| max_eh_time(&schedule, &scenario.toa, n, k))
            .collect();
        let taus = match flags.eh_mode {
            EhMode::Max => tau_max,
            EhMode::Optimal => {
                optimize_slot_taus(scenario, &schedule, &ledger, &links, tau_max, flags, &mut diagnostics)
            }
        };
        let mut upper = Vec::with_capacity(links.len());
        for (i, &n) in links.nodes.iter().enumerate() {
            ledger.set_tau(n, k, taus[i]);
            upper.push(ledger.available_power(n, k)?.min(p_max));
        }
        let powers = match flags.power_mode {
            PowerMode::Max => upper,
            PowerMode::Cccp => {
                let problem = links.problem(&taus);
                let out = cccp_power(&problem, &upper, None, &flags.cccp);
                diagnostics.cccp_iterations.push(out.outer_iterations);
                diagnostics.objective_traces.push(out.trace);
                if out.inner_capped {
                    diagnostics.inner_capped_slots.push(k);
                }
                out.powers
            }
        };
        for (i, &n) in links.nodes.iter().enumerate() {
            ledger.set_power(n, k, powers[i]);
        }
    }

    let [harvest_rate, tau, power] = ledger.into_parts();
    Ok(Allocation {
        flags: *flags,
        assignment,
        schedule,
        harvest_rate,
        tau,
        power,
        diagnostics,
    })
}

/// Chooses harvesting times for the transmitters of one slot, one node at a
/// time in SIC order. Nodes not yet visited sit at their longest time.
fn optimize_slot_taus(
    scenario: &Scenario,
    schedule: &SlotSchedule,
    ledger: &EnergyLedger,
    links: &SlotLinks,
    tau_max: Vec<f64>,
    flags: &AllocatorFlags,
    diagnostics: &mut Diagnostics,
) -> Vec<f64> {
    let k = links.slot;
    let carryover = links.nodes.iter().map(|&n| ledger.carryover(n, k)).collect();
    let rates = links.nodes.iter().map(|&n| ledger.harvest_rate(n, k)).collect();
    let mut search = SlotEhSearch::new(links, carryover, rates, scenario.config.max_tx_power, tau_max.clone());
    for (i, &n) in links.nodes.iter().enumerate() {
        let inputs = EhInputs {
            transmitting: true,
            slot_duration: scenario.toa.slot_duration,
            max_eh_time: tau_max[i],
            airtime: links.airtime[i],
            harvest_rate: ledger.harvest_rate(n, k),
            energy_before: ledger.energy_before(n, k),
            attempts: schedule.attempts(n, k),
            max_tx_power: scenario.config.max_tx_power,
        };
        search.focus(i);
        let decision = optimize_eh_time(
            &inputs,
            |t| search.collision_load(i, t),
            |t| search.slot_rate_with(i, t),
            flags.grid_points,
        );
        *diagnostics.eh_branches.entry(decision.branch).or_default() += 1;
        if decision.branch == EhBranch::NoHarvest {
            diagnostics.zero_harvest.push((n, k));
        }
        search.commit(i, decision.tau);
    }
    search.into_taus()
}
