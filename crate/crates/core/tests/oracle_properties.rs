use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dprc_core::instances::{random_rate_instance, RateInstance, RegimeKind};
use dprc_core::oracle::{oracle_energy, OracleConfig};
use dprc_core::rate_control::{sp_bursty, sp_limited, sp_unlimited};
use dprc_core::{plan_energy, Regime};

fn instance(seed: u64, kind: RegimeKind) -> RateInstance {
    random_rate_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, kind)
}

fn string_pulled_energy(inst: &RateInstance) -> f64 {
    let plan = match inst.regime() {
        Regime::Unlimited => sp_unlimited(&inst.requirements),
        Regime::LimitedBuffer(cap) => sp_limited(&inst.requirements, cap),
        Regime::Bursty(a) => sp_bursty(&inst.requirements, a),
    };
    plan_energy(&plan.unwrap(), &inst.channel)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The oracle returns a feasible point, so it can never beat the exact
    /// optimum by more than the feasibility slack; it should also get close.
    #[test]
    fn oracle_brackets_the_string_pulled_optimum(seed: u64, regime in 0usize..3) {
        let inst = instance(seed, RegimeKind::ALL[regime]);
        let exact = string_pulled_energy(&inst);
        let oracle = oracle_energy(&inst.requirements, inst.regime(), &inst.channel, &OracleConfig::default()).unwrap();
        prop_assert!(exact <= oracle * (1.0 + 1e-6) + 1e-12, "{exact} vs {oracle}");
        prop_assert!(oracle <= exact * 1.005 + 1e-12, "{oracle} vs {exact}");
    }

    /// Splitting epochs only relaxes the problem.
    #[test]
    fn refinement_never_raises_the_oracle_energy(seed: u64, regime in 0usize..3) {
        let inst = instance(seed, RegimeKind::ALL[regime]);
        let coarse = OracleConfig::default();
        let fine = OracleConfig { epoch_subdivisions: 2, ..OracleConfig::default() };
        let e1 = oracle_energy(&inst.requirements, inst.regime(), &inst.channel, &coarse).unwrap();
        let e2 = oracle_energy(&inst.requirements, inst.regime(), &inst.channel, &fine).unwrap();
        prop_assert!(e2 <= e1 * (1.0 + 1e-6) + 1e-12, "{e2} > {e1}");
    }
}
