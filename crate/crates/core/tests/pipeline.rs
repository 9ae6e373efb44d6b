use proptest::prelude::*;

use noma_lpwa::allocator::{allocate, AllocatorFlags, EhMode, PowerMode, ToaMode};
use noma_lpwa::energy::EhSource;
use noma_lpwa::harness::{run_trial, validate_allocation};
use noma_lpwa::{rates, InterferenceScenario, Receiver, Scenario, ScenarioConfig};

fn config(seed: u64, interference: InterferenceScenario) -> ScenarioConfig {
    ScenarioConfig {
        eh_source: EhSource::solar(),
        interference,
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
    .with_density(800.0)
}

#[test]
fn fixed_allocation_rates_nest_across_scenarios() {
    let scenarios = [
        InterferenceScenario::None,
        InterferenceScenario::CoSf,
        InterferenceScenario::CoSfInterSf { cross: 0.1 },
    ];
    for seed in 0..5 {
        // allocate once on the harshest scenario, then evaluate everywhere
        let harsh = Scenario::build(config(seed, scenarios[2].clone())).unwrap();
        let alloc = allocate(&harsh, &AllocatorFlags::default()).unwrap();
        let sums: Vec<f64> = scenarios
            .iter()
            .map(|s| {
                let scenario = Scenario::build(config(seed, s.clone())).unwrap();
                rates(&scenario, &alloc.schedule, &alloc.tau, &alloc.power, Receiver::Sic).sum_rate
            })
            .collect();
        assert!(sums[0] >= sums[1] && sums[1] >= sums[2], "seed {seed}: {sums:?}");
    }
}

#[test]
fn recorded_seed_reproduces_trial() {
    let cfg = config(77, InterferenceScenario::CoSf);
    let flags = AllocatorFlags::default();
    let first = run_trial(cfg.clone(), &flags);
    let again = run_trial(cfg, &flags);
    assert_eq!(first, again);
    assert_eq!(first.violations, 0);
}

#[test]
fn sic_never_loses_to_conventional_for_the_same_allocation() {
    for seed in 0..5 {
        let scenario = Scenario::build(config(seed, InterferenceScenario::CoSf)).unwrap();
        let alloc = allocate(&scenario, &AllocatorFlags::baseline()).unwrap();
        let sic = rates(&scenario, &alloc.schedule, &alloc.tau, &alloc.power, Receiver::Sic);
        let conv = rates(&scenario, &alloc.schedule, &alloc.tau, &alloc.power, Receiver::Conventional);
        assert!(sic.sum_rate >= conv.sum_rate);
    }
}

fn flags_strategy() -> impl Strategy<Value = AllocatorFlags> {
    (0..3usize, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(toa, eh, power, noma)| {
        AllocatorFlags {
            toa_mode: [ToaMode::Unfair, ToaMode::Fair, ToaMode::Distance][toa],
            eh_mode: if eh { EhMode::Optimal } else { EhMode::Max },
            power_mode: if power { PowerMode::Cccp } else { PowerMode::Max },
            receiver: if noma { Receiver::Sic } else { Receiver::Conventional },
            ..AllocatorFlags::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_mode_combination_is_feasible(
        seed in any::<u64>(),
        nodes in 1usize..120,
        solar in any::<bool>(),
        scenario in 0..3usize,
        flags in flags_strategy(),
    ) {
        let cfg = ScenarioConfig {
            num_nodes: nodes,
            eh_source: if solar { EhSource::solar() } else { EhSource::rf_nonlinear() },
            interference: [
                InterferenceScenario::None,
                InterferenceScenario::CoSf,
                InterferenceScenario::CoSfInterSf { cross: 0.1 },
            ][scenario].clone(),
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let scenario = Scenario::build(cfg).unwrap();
        let alloc = allocate(&scenario, &flags).unwrap();
        let report = validate_allocation(&alloc, &scenario);
        prop_assert!(report.passed(), "{:?}", report.violations.first());
        let sum = alloc.rates(&scenario).sum_rate;
        prop_assert!(sum.is_finite() && sum >= 0.0);
    }
}
