//! Packet collision overlap, NOMA/SIC SINR and throughput rates.
//!
//! Powers enter every formula multiplied by `g / σ²`, so the slot problems
//! work with SNR-per-watt gains and a unit noise floor.

use serde::{Deserialize, Serialize};

use crate::airtime::SlotSchedule;
use crate::scenario::Scenario;

/// Overlap in seconds between two packets that both start after their
/// harvesting times.
pub fn collision_time(tau_n: f64, tau_m: f64, airtime_n: f64, airtime_m: f64) -> f64 {
    let shortest = airtime_n.min(airtime_m);
    let gap = (tau_n - tau_m).abs();
    if gap >= shortest {
        0.0
    } else {
        shortest - gap
    }
}

/// Gateway receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Receiver {
    /// Successive interference cancellation: a node only sees interference
    /// from weaker nodes.
    Sic,
    /// No cancellation: every other colliding node interferes.
    Conventional,
}

impl Receiver {
    pub fn interferes(self, victim: usize, source: usize) -> bool {
        match self {
            Receiver::Sic => source > victim,
            Receiver::Conventional => source != victim,
        }
    }
}

/// The transmitters of one slot, in SIC order.
#[derive(Clone, Debug)]
pub struct SlotLinks {
    pub slot: usize,
    /// Node ids, strongest gain first.
    pub nodes: Vec<usize>,
    pub snr_gain: Vec<f64>,
    /// Time-averaging weight `T_a / T` of each transmitter.
    pub weight: Vec<f64>,
    pub airtime: Vec<f64>,
    pub class: Vec<usize>,
    pub receiver: Receiver,
    correlation: Vec<f64>,
}

impl SlotLinks {
    pub fn new(scenario: &Scenario, schedule: &SlotSchedule, slot: usize, receiver: Receiver) -> Self {
        let candidates = schedule.transmitters(slot);
        let nodes = scenario.sic_order(slot, &candidates);
        let noise = scenario.noise;
        let snr_gain = nodes.iter().map(|&n| scenario.nodes[n].gains[slot] / noise).collect();
        let airtime: Vec<f64> = nodes
            .iter()
            .map(|&n| schedule.airtime(n).expect("transmitters have a class"))
            .collect();
        let weight = airtime.iter().map(|t| t / schedule.window).collect();
        let class: Vec<usize> = nodes
            .iter()
            .map(|&n| schedule.class(n).expect("transmitters have a class"))
            .collect();
        let len = nodes.len();
        let mut correlation = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                if i != j {
                    correlation[i * len + j] =
                        scenario.config.interference.correlation(class[i], class[j]);
                }
            }
        }
        Self {
            slot,
            nodes,
            snr_gain,
            weight,
            airtime,
            class,
            receiver,
            correlation,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Waveform correlation between positions `i` and `j` (0 on the diagonal).
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.len() + j]
    }

    pub fn collision(&self, i: usize, j: usize, taus: &[f64]) -> f64 {
        collision_time(taus[i], taus[j], self.airtime[i], self.airtime[j])
    }

    /// Effective interference coupling of `j` on `i`.
    pub fn coupling(&self, i: usize, j: usize, taus: &[f64]) -> f64 {
        let xi = self.correlation(i, j);
        if xi == 0.0 {
            return 0.0;
        }
        (self.collision(i, j, taus) / self.airtime[i] * xi).clamp(0.0, 1.0)
    }

    pub fn collision_matrix(&self, taus: &[f64]) -> CollisionMatrix {
        let len = self.len();
        let mut col = vec![0.0; len * len];
        let mut eta = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                if i != j {
                    col[i * len + j] = self.collision(i, j, taus);
                    eta[i * len + j] = self.coupling(i, j, taus);
                }
            }
        }
        CollisionMatrix { len, col, eta }
    }

    /// Slot rate problem for the given harvesting times.
    pub fn problem(&self, taus: &[f64]) -> SlotProblem {
        SlotProblem::new(
            self.snr_gain.clone(),
            self.weight.clone(),
            |i, j| self.coupling(i, j, taus),
            self.receiver,
        )
    }
}

/// Pairwise overlap (`col`, seconds) and coupling (`eta`) for one slot,
/// indexed by SIC position, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionMatrix {
    len: usize,
    col: Vec<f64>,
    eta: Vec<f64>,
}

impl CollisionMatrix {
    pub fn col(&self, i: usize, j: usize) -> f64 {
        self.col[i * self.len + j]
    }

    pub fn eta(&self, i: usize, j: usize) -> f64 {
        self.eta[i * self.len + j]
    }
}

/// Weighted sum rate of one slot as a function of transmit powers.
#[derive(Clone, Debug)]
pub struct SlotProblem {
    pub snr_gain: Vec<f64>,
    pub weight: Vec<f64>,
    /// `interferers[i]`: `(j, η_ij)` for every `j` disturbing `i`.
    pub interferers: Vec<Vec<(usize, f64)>>,
    /// `victims[j]`: `(i, η_ij)`, the transpose of `interferers`.
    pub victims: Vec<Vec<(usize, f64)>>,
}

impl SlotProblem {
    /// `coupling(i, j)` is only queried for pairs the receiver lets interfere.
    #[allow(clippy::needless_range_loop)]
    pub fn new(
        snr_gain: Vec<f64>,
        weight: Vec<f64>,
        coupling: impl Fn(usize, usize) -> f64,
        receiver: Receiver,
    ) -> Self {
        let len = snr_gain.len();
        let mut interferers = vec![Vec::new(); len];
        let mut victims = vec![Vec::new(); len];
        for i in 0..len {
            for j in 0..len {
                if !receiver.interferes(i, j) {
                    continue;
                }
                let eta = coupling(i, j);
                if eta > 0.0 {
                    interferers[i].push((j, eta));
                    victims[j].push((i, eta));
                }
            }
        }
        Self {
            snr_gain,
            weight,
            interferers,
            victims,
        }
    }

    pub fn len(&self) -> usize {
        self.snr_gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_gain.is_empty()
    }

    /// Interference at `i` normalized by the noise power.
    pub fn interference(&self, i: usize, powers: &[f64]) -> f64 {
        self.interferers[i]
            .iter()
            .map(|&(j, eta)| eta * powers[j] * self.snr_gain[j])
            .sum()
    }

    pub fn sinr(&self, i: usize, powers: &[f64]) -> f64 {
        powers[i] * self.snr_gain[i] / (1.0 + self.interference(i, powers))
    }

    pub fn rate(&self, i: usize, powers: &[f64]) -> f64 {
        self.sinr(i, powers).ln_1p() / std::f64::consts::LN_2
    }

    pub fn sum_rate(&self, powers: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.weight[i] * self.rate(i, powers)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `sinr[n][k]`, zero when the node does not transmit.
    pub sinr: Vec<Vec<f64>>,
    /// `log2(1 + sinr)` in bits/s/Hz, zero when silent.
    pub instantaneous: Vec<Vec<f64>>,
    /// Time-averaged rate per node in bits/s/Hz.
    pub average: Vec<f64>,
    pub sum_rate: f64,
}

impl RateReport {
    pub fn sum_rate_bps(&self, bandwidth: f64) -> f64 {
        self.sum_rate * bandwidth
    }
}

/// Evaluates the rates of a full allocation.
pub fn rates(
    scenario: &Scenario,
    schedule: &SlotSchedule,
    tau: &[Vec<f64>],
    power: &[Vec<f64>],
    receiver: Receiver,
) -> RateReport {
    let nodes = scenario.num_nodes();
    let slots = scenario.num_slots();
    let mut sinr = vec![vec![0.0; slots]; nodes];
    let mut instantaneous = vec![vec![0.0; slots]; nodes];
    for k in 0..slots {
        let links = SlotLinks::new(scenario, schedule, k, receiver);
        let taus: Vec<f64> = links.nodes.iter().map(|&n| tau[n][k]).collect();
        let powers: Vec<f64> = links.nodes.iter().map(|&n| power[n][k]).collect();
        let problem = links.problem(&taus);
        for (i, &n) in links.nodes.iter().enumerate() {
            sinr[n][k] = problem.sinr(i, &powers);
            instantaneous[n][k] = problem.rate(i, &powers);
        }
    }
    let average: Vec<f64> = (0..nodes)
        .map(|n| match schedule.airtime(n) {
            Some(airtime) => airtime / schedule.window * instantaneous[n].iter().sum::<f64>(),
            None => 0.0,
        })
        .collect();
    let sum_rate = average.iter().sum();
    RateReport {
        sinr,
        instantaneous,
        average,
        sum_rate,
    }
}
