//! Slot-based simulator and resource allocator for uplink LPWA networks
//! whose nodes harvest ambient energy (RF or solar) before each
//! transmission and share a NOMA gateway with successive interference
//! cancellation.
//!
//! The pipeline for one realization:
//!
//! 1. [`Scenario::build`] places nodes and draws fading.
//! 2. [`allocate`] assigns ToA classes, then walks the slots choosing
//!    harvesting times and transmit powers.
//! 3. [`rates`] evaluates per-node and sum throughput.
//!
//! [`harness::run_experiment`] repeats this over densities, configurations
//! and seeds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airtime;
pub mod allocator;
pub mod energy;
pub mod error;
pub mod harness;
pub mod interference;
pub mod scenario;

pub use airtime::{build_schedule, build_toa_set, SlotSchedule, ToaSet};
pub use allocator::{
    allocate, Allocation, AllocatorFlags, CccpSettings, EhMode, PowerMode, ToaAssignment, ToaMode,
};
pub use energy::{EhSource, EhSourceKind, EnergyLedger};
pub use error::{Error, Result};
pub use interference::{collision_time, rates, RateReport, Receiver, SlotLinks, SlotProblem};
pub use scenario::{
    noise_power, CorrelationMatrix, InterferenceScenario, NodeState, Scenario, ScenarioConfig,
};
