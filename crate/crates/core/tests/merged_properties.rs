use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dprc_core::instances::{random_scenario, RegimeKind};
use dprc_core::merged::{epoch_objective, kkt_residuals, objective_gradient, solve_merged};
use dprc_core::stratified::solve_stratified;
use dprc_core::{weighted_error, Scenario};

fn scenario(seed: u64, tasks: usize, kind: RegimeKind) -> Scenario {
    random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), tasks, kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(seed: u64, tasks in 1usize..6, regime in 0usize..3) {
        let sc = scenario(seed, tasks, RegimeKind::ALL[regime]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let epochs = sc.epoch_instants().len();
        let bits: Vec<f64> = (0..tasks).map(|_| rng.gen_range(0.1..2.0)).collect();
        let rates: Vec<f64> = (0..epochs).map(|_| rng.gen_range(0.0..3.0)).collect();
        let g = objective_gradient(&sc, &bits, &rates).unwrap();
        let mut z: Vec<f64> = bits.iter().chain(&rates).copied().collect();
        for i in 0..z.len() {
            let h = 1e-6 * z[i].abs().max(1.0);
            let orig = z[i];
            z[i] = orig + h;
            let up = epoch_objective(&sc, &z[..tasks], &z[tasks..]).unwrap();
            z[i] = orig - h;
            let down = epoch_objective(&sc, &z[..tasks], &z[tasks..]).unwrap();
            z[i] = orig;
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn merged_is_certified_feasible_and_no_worse(seed: u64, tasks in 1usize..6, regime in 0usize..3) {
        let sc = scenario(seed, tasks, RegimeKind::ALL[regime]);
        let (p, plan, report) = solve_merged(&sc).unwrap();
        prop_assert!(report.converged);
        prop_assert!(sc.feasibility(&p, &plan).unwrap().feasible);
        let (st, co) = kkt_residuals(&p, &plan, &report.multipliers, &sc).unwrap();
        prop_assert!(st <= 1e-6 && co <= 1e-6, "residuals {st} {co}");
        prop_assert_eq!(Some(st), report.kkt_stationarity_residual);
        let (_, _, strat) = solve_stratified(&sc).unwrap();
        prop_assert!(report.objective <= strat.objective + 1e-6 * strat.objective.max(1e-12));
    }

    /// Heavier energy weights never buy more energy or less error.
    #[test]
    fn pareto_points_trade_off_monotonically(seed: u64, tasks in 1usize..5, regime in 0usize..3) {
        let sc = scenario(seed, tasks, RegimeKind::ALL[regime]);
        let mut prev: Option<(f64, f64)> = None;
        for k in 1..10 {
            let s = sc.with_energy_weight(k as f64 / 10.0);
            let (p, _, r) = solve_merged(&s).unwrap();
            let err = weighted_error(&p, &s.with_energy_weight(0.0)).unwrap();
            if let Some((e0, w0)) = prev {
                prop_assert!(r.energy <= e0 * (1.0 + 1e-6) + 1e-12, "energy {} after {e0}", r.energy);
                prop_assert!(err >= w0 * (1.0 - 1e-6), "error {err} after {w0}");
            }
            prev = Some((r.energy, err));
        }
    }
}
