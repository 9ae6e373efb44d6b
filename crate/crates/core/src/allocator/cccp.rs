//! Concave-convex power allocation for one slot.
//!
//! Each rate `log2(1 + S + I) - log2(1 + I)` is a difference of concave
//! functions of the powers. Replacing the subtracted term by its tangent at
//! the current point `p̂` gives a concave minorant that touches the true
//! objective at `p̂`. Maximizing the minorant over the power box and moving
//! the expansion point there never decreases the true objective.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::interference::SlotProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CccpSettings {
    /// Stop when the relative change of the objective drops below this.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for CccpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_outer: 50,
            max_inner: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CccpOutcome {
    pub powers: Vec<f64>,
    /// True slot objective at the initial point and after every outer step.
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    /// Some inner solve hit its iteration cap.
    pub inner_capped: bool,
}

/// Normalized interference at every receiver position.
fn interference_all(problem: &SlotProblem, powers: &[f64]) -> Vec<f64> {
    (0..problem.len()).map(|i| problem.interference(i, powers)).collect()
}

/// Concave minorant of [`SlotProblem::sum_rate`] expanded at `expansion`.
pub fn surrogate(problem: &SlotProblem, powers: &[f64], expansion: &[f64]) -> f64 {
    let fixed = interference_all(problem, expansion);
    surrogate_with(problem, powers, &fixed)
}

fn surrogate_with(problem: &SlotProblem, powers: &[f64], fixed: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..problem.len() {
        let interference = problem.interference(i, powers);
        let signal = powers[i] * problem.snr_gain[i];
        let concave = (signal + interference).ln_1p();
        let tangent = fixed[i].ln_1p() + (interference - fixed[i]) / (1.0 + fixed[i]);
        total += problem.weight[i] * (concave - tangent);
    }
    total / LN_2
}

/// Gradient of the minorant and the magnitude of its Hessian diagonal.
fn surrogate_derivatives(
    problem: &SlotProblem,
    powers: &[f64],
    fixed: &[f64],
    grad: &mut [f64],
    curvature: &mut [f64],
) {
    let len = problem.len();
    let totals: Vec<f64> = (0..len)
        .map(|i| 1.0 + powers[i] * problem.snr_gain[i] + problem.interference(i, powers))
        .collect();
    for j in 0..len {
        let q = problem.snr_gain[j];
        let own = problem.weight[j] * q / totals[j];
        let mut g = own;
        let mut h = own * q / totals[j];
        for &(i, eta) in &problem.victims[j] {
            let c = eta * q / totals[i];
            g += problem.weight[i] * (c - eta * q / (1.0 + fixed[i]));
            h += problem.weight[i] * c * c;
        }
        grad[j] = g / LN_2;
        curvature[j] = h / LN_2;
    }
}

/// Projected gradient ascent on the minorant over `0 <= p <= upper`,
/// starting from `start`, with the gradient scaled by the inverse Hessian
/// diagonal and Armijo backtracking. Works in coordinates scaled by
/// `upper`. Returns the final point and whether the iteration cap was hit.
fn maximize_surrogate(
    problem: &SlotProblem,
    upper: &[f64],
    start: &[f64],
    max_iter: usize,
) -> (Vec<f64>, bool) {
    let len = problem.len();
    let fixed = interference_all(problem, start);
    let to_power = |x: &[f64]| -> Vec<f64> { x.iter().zip(upper).map(|(x, u)| x * u).collect() };
    let mut x: Vec<f64> = start
        .iter()
        .zip(upper)
        .map(|(p, u)| if *u > 0.0 { (p / u).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    let mut p = to_power(&x);
    let mut value = surrogate_with(problem, &p, &fixed);
    let mut grad = vec![0.0; len];
    let mut curv = vec![0.0; len];
    let mut dir = vec![0.0; len];
    for _ in 0..max_iter {
        surrogate_derivatives(problem, &p, &fixed, &mut grad, &mut curv);
        let mut stationary = true;
        for j in 0..len {
            grad[j] *= upper[j];
            let h = curv[j] * upper[j] * upper[j];
            dir[j] = if grad[j] == 0.0 { 0.0 } else { grad[j] / h.max(1e-12 * grad[j].abs()) };
            let moved = (x[j] + dir[j]).clamp(0.0, 1.0) - x[j];
            stationary &= moved.abs() <= 1e-12;
        }
        if stationary {
            return (p, false);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = (0..len).map(|j| (x[j] + step * dir[j]).clamp(0.0, 1.0)).collect();
            let cand_p = to_power(&cand);
            let cand_value = surrogate_with(problem, &cand_p, &fixed);
            let ascent: f64 = (0..len).map(|j| grad[j] * (cand[j] - x[j])).sum();
            if cand_value >= value + 1e-4 * ascent && cand_value >= value {
                let moved = (0..len).fold(0.0f64, |m, j| m.max((cand[j] - x[j]).abs()));
                let gain = cand_value - value;
                x = cand;
                p = cand_p;
                value = cand_value;
                accepted = true;
                if moved <= 1e-10 || gain <= 1e-10 * value.abs() {
                    return (p, false);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return (p, false);
        }
    }
    (p, true)
}

/// Powers for one slot by the concave-convex procedure.
///
/// `upper[i]` is `min(P_t, available power)` of position `i`. The initial
/// expansion point defaults to `upper`.
pub fn cccp_power(
    problem: &SlotProblem,
    upper: &[f64],
    init: Option<&[f64]>,
    settings: &CccpSettings,
) -> CccpOutcome {
    let mut current: Vec<f64> = match init {
        Some(p) => p.iter().zip(upper).map(|(p, u)| p.clamp(0.0, *u)).collect(),
        None => upper.to_vec(),
    };
    let mut objective = problem.sum_rate(&current);
    let mut trace = vec![objective];
    let mut inner_capped = false;
    let mut outer_iterations = 0;
    if problem.is_empty() {
        return CccpOutcome {
            powers: current,
            trace,
            outer_iterations,
            inner_capped,
        };
    }
    while outer_iterations < settings.max_outer {
        outer_iterations += 1;
        let (next, capped) = maximize_surrogate(problem, upper, &current, settings.max_inner);
        inner_capped |= capped;
        let next_objective = problem.sum_rate(&next);
        if next_objective < objective {
            // numerical noise only; the minorant guarantees ascent
            break;
        }
        trace.push(next_objective);
        let change = (next_objective - objective).abs();
        current = next;
        let done = change <= settings.tolerance * objective.abs();
        objective = next_objective;
        if done {
            break;
        }
    }
    CccpOutcome {
        powers: current,
        trace,
        outer_iterations,
        inner_capped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interference::Receiver;
    use proptest::prelude::*;

    fn random_problem(gains: Vec<f64>, etas: &[f64], weights: Vec<f64>, rx: Receiver) -> SlotProblem {
        let n = gains.len();
        SlotProblem::new(gains, weights, |i, j| etas[i * n + j], rx)
    }

    #[test]
    fn separable_problem_uses_full_budget() {
        let p = random_problem(vec![1e4, 3e3, 50.0], &[0.0; 9], vec![1.0, 2.0, 4.0], Receiver::Sic);
        let upper = [0.02, 0.001, 0.025];
        let out = cccp_power(&p, &upper, None, &CccpSettings::default());
        assert_eq!(out.powers, upper.to_vec());
    }

    #[test]
    fn zero_budget_stays_zero() {
        let p = random_problem(vec![10.0, 5.0], &[0.0, 1.0, 1.0, 0.0], vec![1.0; 2], Receiver::Conventional);
        let out = cccp_power(&p, &[0.0, 0.0], None, &CccpSettings::default());
        assert_eq!(out.powers, vec![0.0, 0.0]);
        assert_eq!(out.trace, vec![0.0, 0.0]);
    }

    #[test]
    fn conventional_receiver_can_silence_a_weak_interferer() {
        // strong node hit hard by a weak one: turning the weak one off wins
        let p = random_problem(vec![1e6, 1.0], &[0.0, 1.0, 1.0, 0.0], vec![1.0; 2], Receiver::Conventional);
        let out = cccp_power(&p, &[1.0, 1.0], None, &CccpSettings::default());
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        let at_max = p.sum_rate(&[1.0, 1.0]);
        assert!(*out.trace.last().unwrap() >= at_max);
    }

    proptest! {
        #[test]
        fn minorant_is_tight_and_below(
            gains in proptest::collection::vec(1e-2f64..1e5, 1..6),
            etas in proptest::collection::vec(0.0f64..1.0, 36),
            x in proptest::collection::vec(0.0f64..1.0, 6),
            y in proptest::collection::vec(0.0f64..1.0, 6),
            sic in any::<bool>(),
        ) {
            let n = gains.len();
            let etas: Vec<f64> = etas[..n * n].to_vec();
            let rx = if sic { Receiver::Sic } else { Receiver::Conventional };
            let p = random_problem(gains, &etas, vec![1.0; n], rx);
            let (a, b) = (&x[..n], &y[..n]);
            let truth = p.sum_rate(a);
            prop_assert!((surrogate(&p, b, b) - p.sum_rate(b)).abs() <= 1e-9 * p.sum_rate(b).abs().max(1e-300));
            prop_assert!(surrogate(&p, a, b) <= truth + 1e-9 * truth.abs().max(1e-12));
        }

        #[test]
        fn trace_never_decreases(
            gains in proptest::collection::vec(1e-2f64..1e5, 1..6),
            etas in proptest::collection::vec(0.0f64..1.0, 36),
            upper in proptest::collection::vec(0.0f64..1.0, 6),
            sic in any::<bool>(),
        ) {
            let n = gains.len();
            let etas: Vec<f64> = etas[..n * n].to_vec();
            let rx = if sic { Receiver::Sic } else { Receiver::Conventional };
            let p = random_problem(gains, &etas, vec![1.0; n], rx);
            let out = cccp_power(&p, &upper[..n], None, &CccpSettings::default());
            for w in out.trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
            for (q, u) in out.powers.iter().zip(&upper[..n]) {
                prop_assert!(*q >= 0.0 && q <= u);
            }
        }
    }
}
