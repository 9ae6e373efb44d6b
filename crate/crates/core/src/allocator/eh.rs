//! Harvesting-time selection for one node and slot.
//!
//! Slots are processed in order, so everything before the current slot is
//! fixed. A silent node harvests for the whole slot. A transmitting node
//! needs `required_time` seconds of harvesting to afford full power on all
//! of its attempts so far; whether it should harvest exactly that long, as
//! long as possible, or somewhere in between depends on how its collision
//! overlap moves with the harvesting time.

use serde::{Deserialize, Serialize};

use crate::interference::SlotLinks;

pub const DEFAULT_GRID_POINTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EhInputs {
    pub transmitting: bool,
    pub slot_duration: f64,
    pub max_eh_time: f64,
    pub airtime: f64,
    /// `E_n(k)` in watts.
    pub harvest_rate: f64,
    /// Harvested energy `Σ_{j<k} τ(j)E(j)` from earlier slots, in joules.
    pub energy_before: f64,
    /// Attempts made through this slot, including it.
    pub attempts: u32,
    pub max_tx_power: f64,
}

impl EhInputs {
    /// Harvesting time that makes the cumulative budget equal to full power
    /// on every attempt so far. Negative when earlier slots already cover it;
    /// `None` when nothing can be harvested.
    pub fn required_time(&self) -> Option<f64> {
        if !(self.harvest_rate > 0.0) {
            return None;
        }
        Some(
            self.max_tx_power * self.airtime / self.harvest_rate * self.attempts as f64
                - self.energy_before / self.harvest_rate,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EhBranch {
    /// Silent slot: harvest for the whole slot.
    EhMode,
    /// Overlap grows (or stays flat) with harvesting time: harvest only what
    /// full power needs.
    Increasing,
    /// Overlap shrinks with harvesting time: harvest as long as possible.
    Decreasing,
    /// Neither: grid search plus golden-section refinement.
    LineSearch,
    /// Transmitting with a zero harvest rate; harvests as long as possible.
    NoHarvest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollisionTrend {
    Nondecreasing,
    Nonincreasing,
    Mixed,
}

/// Classifies `collision` on `[0, max]` from its endpoint and midpoint
/// values. A flat profile counts as nondecreasing.
pub fn collision_trend(collision: impl Fn(f64) -> f64, max: f64) -> CollisionTrend {
    let (a, b, c) = (collision(0.0), collision(0.5 * max), collision(max));
    let slack = 1e-15 * (a.abs() + b.abs() + c.abs());
    if a <= b + slack && b <= c + slack {
        CollisionTrend::Nondecreasing
    } else if a + slack >= b && b + slack >= c {
        CollisionTrend::Nonincreasing
    } else {
        CollisionTrend::Mixed
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EhDecision {
    pub tau: f64,
    pub branch: EhBranch,
}

/// Maximizes `objective` over `(0, hi]`: uniform grid of `points` samples,
/// then golden-section refinement around the best sample. Ties keep the
/// longer harvesting time.
pub fn line_search(mut objective: impl FnMut(f64) -> f64, hi: f64, points: usize) -> f64 {
    if !(hi > 0.0) {
        return 0.0;
    }
    let points = points.max(1);
    let step = hi / points as f64;
    let mut best = (hi, f64::NEG_INFINITY);
    let mut best_idx = points;
    for i in 1..=points {
        let t = if i == points { hi } else { step * i as f64 };
        let v = objective(t);
        if v >= best.1 {
            best = (t, v);
            best_idx = i;
        }
    }
    let lo = step * (best_idx as f64 - 1.0);
    let up = (step * (best_idx as f64 + 1.0)).min(hi);
    let refined = golden_section(&mut objective, lo.max(f64::MIN_POSITIVE), up);
    if refined.1 > best.1 {
        refined.0
    } else {
        best.0
    }
}

fn golden_section(objective: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    for _ in 0..60 {
        if (b - a) <= 1e-10 * b.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Picks the harvesting time of one node in one slot.
pub fn optimize_eh_time(
    inputs: &EhInputs,
    collision: impl Fn(f64) -> f64,
    objective: impl FnMut(f64) -> f64,
    grid_points: usize,
) -> EhDecision {
    if !inputs.transmitting {
        return EhDecision {
            tau: inputs.slot_duration,
            branch: EhBranch::EhMode,
        };
    }
    let max = inputs.max_eh_time;
    let Some(required) = inputs.required_time() else {
        return EhDecision {
            tau: max,
            branch: EhBranch::NoHarvest,
        };
    };
    match collision_trend(collision, max) {
        CollisionTrend::Nondecreasing => EhDecision {
            tau: required.min(max).clamp(0.0, max),
            branch: EhBranch::Increasing,
        },
        CollisionTrend::Nonincreasing => EhDecision {
            tau: max,
            branch: EhBranch::Decreasing,
        },
        CollisionTrend::Mixed => EhDecision {
            tau: line_search(objective, max, grid_points),
            branch: EhBranch::LineSearch,
        },
    }
}

/// Incremental slot state for choosing harvesting times node by node.
///
/// Positions follow the SIC order of `links`. Each node's power is the
/// largest affordable one, `min(P_t, carryover + τE/T_a)`, so changing one
/// node's harvesting time changes its power and its overlaps only. Two
/// packets can only overlap when their harvesting times differ by less
/// than the shorter airtime, so evaluations only visit the nodes whose
/// harvesting times lie within one airtime of the candidate.
pub struct SlotEhSearch<'a> {
    links: &'a SlotLinks,
    carryover: Vec<f64>,
    harvest_rate: Vec<f64>,
    max_tx_power: f64,
    taus: Vec<f64>,
    powers: Vec<f64>,
    interference: Vec<f64>,
    /// Weighted log-rate of every position at the committed state.
    terms: Vec<f64>,
    /// `(τ, position)` sorted by harvesting time.
    order: Vec<(f64, usize)>,
    /// Position whose committed interference on the others is cached.
    focus: Option<usize>,
    /// Committed interference of `focus` on every position, per unit gain.
    focus_load: Vec<f64>,
    /// Positions with a nonzero entry in `focus_load`.
    focus_victims: Vec<usize>,
    /// Sum of `terms` when `focus` was set.
    focus_total: f64,
}

impl<'a> SlotEhSearch<'a> {
    pub fn new(
        links: &'a SlotLinks,
        carryover: Vec<f64>,
        harvest_rate: Vec<f64>,
        max_tx_power: f64,
        taus: Vec<f64>,
    ) -> Self {
        let len = taus.len();
        let mut order: Vec<(f64, usize)> = taus.iter().copied().zip(0..).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut s = Self {
            links,
            carryover,
            harvest_rate,
            max_tx_power,
            powers: vec![0.0; len],
            interference: vec![0.0; len],
            terms: vec![0.0; len],
            order,
            focus: None,
            focus_load: vec![0.0; len],
            focus_victims: Vec::new(),
            focus_total: 0.0,
            taus,
        };
        for i in 0..len {
            s.powers[i] = s.power_for(i, s.taus[i]);
        }
        for i in 0..len {
            s.interference[i] = s.own_interference(i, s.taus[i]);
            s.terms[i] = s.term(i, s.powers[i], s.interference[i]);
        }
        s
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn into_taus(self) -> Vec<f64> {
        self.taus
    }

    pub fn power_for(&self, i: usize, tau: f64) -> f64 {
        let budget = self.carryover[i] + tau * self.harvest_rate[i] / self.links.airtime[i];
        budget.clamp(0.0, self.max_tx_power)
    }

    fn term(&self, j: usize, power: f64, interference: f64) -> f64 {
        let sinr = power * self.links.snr_gain[j] / (1.0 + interference);
        self.links.weight[j] * sinr.ln_1p()
    }

    /// Positions whose harvesting time may overlap a packet of position `i`
    /// started after `tau`.
    fn window(&self, i: usize, tau: f64) -> impl Iterator<Item = usize> + '_ {
        let reach = self.links.airtime[i] * (1.0 + 1e-9);
        let lo = self.order.partition_point(|e| e.0 <= tau - reach);
        let hi = self.order.partition_point(|e| e.0 < tau + reach);
        self.order[lo..hi].iter().map(|e| e.1).filter(move |&j| j != i)
    }

    fn coupling_at(&self, victim: usize, source: usize, tau_victim: f64, tau_source: f64) -> f64 {
        if !self.links.receiver.interferes(victim, source) {
            return 0.0;
        }
        let col = crate::interference::collision_time(
            tau_victim,
            tau_source,
            self.links.airtime[victim],
            self.links.airtime[source],
        );
        if col == 0.0 {
            return 0.0;
        }
        let xi = self.links.correlation(victim, source);
        (col / self.links.airtime[victim] * xi).clamp(0.0, 1.0)
    }

    fn own_interference(&self, i: usize, tau: f64) -> f64 {
        self.window(i, tau)
            .map(|m| {
                self.coupling_at(i, m, tau, self.taus[m]) * self.powers[m] * self.links.snr_gain[m]
            })
            .sum()
    }

    /// Caches the committed interference of position `i` on every other
    /// position. Must precede [`Self::slot_rate_with`] and [`Self::commit`]
    /// for the same `i`.
    pub fn focus(&mut self, i: usize) {
        for &j in &self.focus_victims {
            self.focus_load[j] = 0.0;
        }
        let victims: Vec<(usize, f64)> = self
            .window(i, self.taus[i])
            .map(|j| (j, self.coupling_at(j, i, self.taus[j], self.taus[i]) * self.powers[i]))
            .filter(|e| e.1 != 0.0)
            .collect();
        self.focus_victims.clear();
        for (j, load) in victims {
            self.focus_load[j] = load;
            self.focus_victims.push(j);
        }
        self.focus_total = self.terms.iter().sum();
        self.focus = Some(i);
    }

    /// Total overlap in seconds between node `i`, harvesting for `tau`,
    /// and every other transmitter of the slot.
    pub fn collision_load(&self, i: usize, tau: f64) -> f64 {
        self.window(i, tau)
            .map(|m| {
                crate::interference::collision_time(
                    tau,
                    self.taus[m],
                    self.links.airtime[i],
                    self.links.airtime[m],
                )
            })
            .sum()
    }

    /// Change in the weighted log-rate of the other positions if position
    /// `i` moved to `tau` with power `p_new`, as `(position, interference)`
    /// updates.
    fn victim_updates(&self, i: usize, tau: f64, p_new: f64, mut visit: impl FnMut(usize, f64)) {
        assert_eq!(self.focus, Some(i), "focus({i}) must be called first");
        let q_i = self.links.snr_gain[i];
        for &j in &self.focus_victims {
            let new = self.coupling_at(j, i, self.taus[j], tau) * p_new;
            let old = self.focus_load[j];
            if new != old {
                visit(j, (self.interference[j] + (new - old) * q_i).max(0.0));
            }
        }
        for j in self.window(i, tau) {
            if self.focus_load[j] != 0.0 {
                continue;
            }
            let new = self.coupling_at(j, i, self.taus[j], tau) * p_new;
            if new != 0.0 {
                visit(j, self.interference[j] + new * q_i);
            }
        }
    }

    /// Weighted slot rate if node `i` switched to `tau`.
    pub fn slot_rate_with(&self, i: usize, tau: f64) -> f64 {
        let p_new = self.power_for(i, tau);
        let mut change = self.term(i, p_new, self.own_interference(i, tau)) - self.terms[i];
        self.victim_updates(i, tau, p_new, |j, interference| {
            change += self.term(j, self.powers[j], interference) - self.terms[j];
        });
        (self.focus_total + change) / std::f64::consts::LN_2
    }

    pub fn commit(&mut self, i: usize, tau: f64) {
        let p_new = self.power_for(i, tau);
        let mut updates = Vec::new();
        self.victim_updates(i, tau, p_new, |j, interference| updates.push((j, interference)));
        for (j, interference) in updates {
            self.interference[j] = interference;
            self.terms[j] = self.term(j, self.powers[j], interference);
        }
        let at = self
            .order
            .iter()
            .position(|e| e.1 == i)
            .expect("position is ordered");
        self.order.remove(at);
        let key = (tau, i);
        let slot = self
            .order
            .partition_point(|e| e.0.total_cmp(&key.0).then(e.1.cmp(&key.1)).is_lt());
        self.order.insert(slot, key);
        self.taus[i] = tau;
        self.powers[i] = p_new;
        self.interference[i] = self.own_interference(i, tau);
        self.terms[i] = self.term(i, p_new, self.interference[i]);
        for &j in &self.focus_victims {
            self.focus_load[j] = 0.0;
        }
        self.focus_victims.clear();
        self.focus = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> EhInputs {
        EhInputs {
            transmitting: true,
            slot_duration: 1.024,
            max_eh_time: 1.024 - 0.01024,
            airtime: 0.01024,
            harvest_rate: 0.5,
            energy_before: 0.0,
            attempts: 1,
            max_tx_power: 0.025,
        }
    }

    #[test]
    fn silent_slot_harvests_whole_slot() {
        let inp = EhInputs {
            transmitting: false,
            ..inputs()
        };
        let d = optimize_eh_time(&inp, |_| panic!("unused"), |_| panic!("unused"), 64);
        assert_eq!(d, EhDecision { tau: 1.024, branch: EhBranch::EhMode });
    }

    #[test]
    fn surplus_with_increasing_collision_harvests_nothing() {
        let inp = EhInputs {
            energy_before: 1.0,
            ..inputs()
        };
        assert!(inp.required_time().unwrap() <= 0.0);
        let d = optimize_eh_time(&inp, |t| t, |_| 0.0, 64);
        assert_eq!(d, EhDecision { tau: 0.0, branch: EhBranch::Increasing });
    }

    #[test]
    fn deficit_with_increasing_collision_harvests_just_enough() {
        let inp = EhInputs {
            harvest_rate: 1e-3,
            energy_before: 1e-4,
            attempts: 2,
            ..inputs()
        };
        let expected = 0.025 * 0.01024 / 1e-3 * 2.0 - 1e-4 / 1e-3;
        let d = optimize_eh_time(&inp, |t| t * t, |_| 0.0, 64);
        assert_eq!(d.branch, EhBranch::Increasing);
        assert!((d.tau - expected).abs() < 1e-12);
        assert!((d.tau - 0.412).abs() < 1e-12);

        // requirement beyond the slot is capped at the maximum harvesting time
        let starved = EhInputs {
            harvest_rate: 1e-5,
            ..inp
        };
        let d = optimize_eh_time(&starved, |_| 0.0, |_| 0.0, 64);
        assert_eq!(d.tau, starved.max_eh_time);
        assert_eq!(d.branch, EhBranch::Increasing);
    }

    #[test]
    fn decreasing_collision_harvests_longest() {
        let d = optimize_eh_time(&inputs(), |t| 1.0 - t, |_| 0.0, 64);
        assert_eq!(d, EhDecision { tau: inputs().max_eh_time, branch: EhBranch::Decreasing });
    }

    #[test]
    fn mixed_collision_runs_line_search() {
        let inp = inputs();
        let peak = 0.37;
        let d = optimize_eh_time(&inp, |t| (t - 0.5).abs(), |t| -(t - peak).powi(2), 64);
        assert_eq!(d.branch, EhBranch::LineSearch);
        assert!((d.tau - peak).abs() < 1e-6, "{}", d.tau);
    }

    #[test]
    fn zero_harvest_rate_is_flagged() {
        let inp = EhInputs {
            harvest_rate: 0.0,
            ..inputs()
        };
        let d = optimize_eh_time(&inp, |_| 0.0, |_| 0.0, 64);
        assert_eq!(d, EhDecision { tau: inp.max_eh_time, branch: EhBranch::NoHarvest });
    }

    #[test]
    fn line_search_prefers_longest_on_ties() {
        assert_eq!(line_search(|_| 1.0, 2.0, 8), 2.0);
        let t = line_search(|t| if t < 1.0 { t } else { 1.0 }, 2.0, 8);
        assert_eq!(t, 2.0);
    }

    #[test]
    fn trend_classification() {
        assert_eq!(collision_trend(|_| 3.0, 1.0), CollisionTrend::Nondecreasing);
        assert_eq!(collision_trend(|t| t, 1.0), CollisionTrend::Nondecreasing);
        assert_eq!(collision_trend(|t| -t, 1.0), CollisionTrend::Nonincreasing);
        assert_eq!(collision_trend(|t| (t - 0.5).abs(), 1.0), CollisionTrend::Mixed);
    }

    #[test]
    fn incremental_rate_matches_full_evaluation() {
        use crate::airtime::build_schedule;
        use crate::allocator::toa::{assign_toa, ToaMode};
        use crate::energy::EhSource;
        use crate::interference::Receiver;
        use crate::scenario::{InterferenceScenario, Scenario, ScenarioConfig};

        let cfg = ScenarioConfig {
            eh_source: EhSource::solar(),
            interference: InterferenceScenario::CoSfInterSf { cross: 0.3 },
            rng_seed: 9,
            ..ScenarioConfig::default()
        }
        .with_density(1500.0);
        let scenario = Scenario::build(cfg).unwrap();
        let harvest = scenario.harvest_rates();
        let assignment = assign_toa(&scenario, &harvest, ToaMode::Unfair);
        let schedule = build_schedule(&scenario.toa, &assignment.classes, 4, scenario.config.duty_cycle);
        let p_t = scenario.config.max_tx_power;
        for rx in [Receiver::Sic, Receiver::Conventional] {
            let links = SlotLinks::new(&scenario, &schedule, 3, rx);
            let len = links.len();
            assert!(len > 20);
            // crowd the harvesting times so that packets overlap heavily
            let taus: Vec<f64> = (0..len).map(|i| 0.5 + 0.002 * (i % 17) as f64).collect();
            let carry: Vec<f64> = (0..len).map(|i| 0.001 * (i % 5) as f64).collect();
            let rates: Vec<f64> = links.nodes.iter().map(|&n| harvest[n][3]).collect();
            let mut search = SlotEhSearch::new(&links, carry, rates, p_t, taus);
            let full = |search: &SlotEhSearch, i: usize, tau: f64| {
                let mut t = search.taus().to_vec();
                t[i] = tau;
                let p: Vec<f64> = (0..len).map(|j| search.power_for(j, t[j])).collect();
                links.problem(&t).sum_rate(&p)
            };
            for i in [0, len / 3, len / 2, len - 1] {
                search.focus(i);
                for tau in [0.0, 0.49, 0.5, 0.505, 0.51, 0.9] {
                    let fast = search.slot_rate_with(i, tau);
                    let slow = full(&search, i, tau);
                    assert!((fast - slow).abs() <= 1e-9 * slow.abs(), "{rx:?} {i} {tau}: {fast} vs {slow}");
                }
                search.commit(i, 0.503);
            }
        }
    }
}
