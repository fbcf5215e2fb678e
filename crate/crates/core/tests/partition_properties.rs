use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dprc_core::instances::{random_scenario, RegimeKind};
use dprc_core::partition::{
    marginal_gain, partition_arrival_constrained, partition_capped, partition_unconstrained, PartitionSolution,
    BUDGET_RTOL,
};
use dprc_core::{weighted_error, CumulativeCurve, Partition, Scenario};

fn scenario(seed: u64, tasks: usize, kind: RegimeKind) -> Scenario {
    random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), tasks, kind).unwrap()
}

fn error_of(sc: &Scenario, bits: &[f64]) -> f64 {
    weighted_error(&Partition::new(bits.to_vec()).unwrap(), sc).unwrap_or(f64::INFINITY)
}

/// Bounds hold up to the solvers' budget residual.
fn feasible(sc: &Scenario, bits: &[f64]) -> bool {
    let tol = BUDGET_RTOL * sc.budget_bits;
    if bits.iter().any(|&d| d < 0.0) || bits.iter().sum::<f64>() > sc.budget_bits + tol {
        return false;
    }
    if let Some(cap) = sc.buffer_cap_bits {
        if bits.iter().any(|&d| d > cap + tol) {
            return false;
        }
    }
    if let Some(a) = &sc.arrival {
        let mut acc = 0.0;
        for (d, t) in bits.iter().zip(&sc.tasks) {
            acc += d;
            if acc > a.value_at(t.deadline) + tol {
                return false;
            }
        }
    }
    true
}

fn solve(sc: &Scenario, kind: RegimeKind) -> Vec<f64> {
    solution(sc, kind).partition.into_bits()
}

fn solution(sc: &Scenario, kind: RegimeKind) -> PartitionSolution {
    let sol = match kind {
        RegimeKind::Unlimited => partition_unconstrained(&sc.tasks, sc.budget_bits),
        RegimeKind::Limited => partition_capped(&sc.tasks, sc.budget_bits, sc.buffer_cap_bits.unwrap()),
        RegimeKind::Bursty => partition_arrival_constrained(&sc.tasks, sc.budget_bits, sc.arrival.as_ref().unwrap()),
    };
    sol.unwrap()
}

/// Best feasible point on a uniform grid over the first two tasks' shares.
fn grid_best(sc: &Scenario, steps: usize) -> f64 {
    let mut ub = sc.budget_bits;
    if let Some(cap) = sc.buffer_cap_bits {
        ub = ub.min(cap);
    }
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for k in 0..=steps {
            let bits = [ub * i as f64 / steps as f64, ub * k as f64 / steps as f64];
            if feasible(sc, &bits) {
                best = best.min(error_of(sc, &bits));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unconstrained_levels_equalize(seed: u64, tasks in 1usize..7) {
        let sc = scenario(seed, tasks, RegimeKind::Unlimited);
        let sol = partition_unconstrained(&sc.tasks, sc.budget_bits).unwrap();
        prop_assert!(sol.budget_residual.abs() <= 1e-9 * sc.budget_bits);
        let lambda = sol.multiplier;
        for (t, &d) in sc.tasks.iter().zip(sol.partition.bits()) {
            let g = marginal_gain(t, d);
            if d > 0.0 {
                prop_assert!((g - lambda).abs() <= 1e-8 * lambda, "gain {g} vs level {lambda}");
            } else {
                prop_assert!(g <= lambda * (1.0 + 1e-8), "idle task gains {g} above level {lambda}");
            }
        }
    }

    #[test]
    fn pairwise_transfers_never_help(seed: u64, tasks in 2usize..6, regime in 0usize..3, pair: (usize, usize), frac in -1.0f64..1.0) {
        let kind = RegimeKind::ALL[regime];
        let sc = scenario(seed, tasks, kind);
        let bits = solve(&sc, kind);
        prop_assert!(feasible(&sc, &bits));
        let (i, k) = (pair.0 % tasks, pair.1 % tasks);
        prop_assume!(i != k);
        let mut other = bits.clone();
        let delta = frac * 1e-3 * sc.budget_bits;
        other[i] += delta;
        other[k] -= delta;
        prop_assume!(feasible(&sc, &other));
        let (e0, e1) = (error_of(&sc, &bits), error_of(&sc, &other));
        prop_assert!(e1 >= e0 - 1e-12 * e0, "{e1} < {e0}");
    }

    #[test]
    fn two_tasks_match_the_grid(seed: u64, regime in 0usize..3) {
        let kind = RegimeKind::ALL[regime];
        let sc = scenario(seed, 2, kind);
        let sol = solution(&sc, kind);
        let bits = sol.partition.bits();
        prop_assert!(feasible(&sc, bits));
        let best = grid_best(&sc, 300);
        let got = error_of(&sc, bits);
        // The solvers stop once the budget residual is within BUDGET_RTOL,
        // which is worth at most `level × residual` of objective.
        let level = sol.levels.iter().copied().fold(sol.multiplier, f64::max);
        let slack = level * BUDGET_RTOL * sc.budget_bits + 1e-12 * best;
        prop_assert!(got <= best + slack, "solver {got} vs grid {best}");
    }

    #[test]
    fn budgets_only_help(seed: u64, tasks in 1usize..6, scale in 1.0f64..3.0) {
        let sc = scenario(seed, tasks, RegimeKind::Unlimited);
        let small = error_of(&sc, &solve(&sc, RegimeKind::Unlimited));
        let big_sc = sc.with_budget(sc.budget_bits * scale);
        let big = error_of(&big_sc, &solve(&big_sc, RegimeKind::Unlimited));
        prop_assert!(big <= small * (1.0 + 1e-12));
    }
}
