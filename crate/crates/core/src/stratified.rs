//! Sequential pipeline: error-optimal partition first, then the
//! energy-optimal schedule for it.

use crate::error::Result;
use crate::merged::SolveReport;
use crate::model::{Partition, RatePlan, Regime, Scenario};
use crate::partition::{partition_arrival_constrained, partition_capped, partition_unconstrained, PartitionSolution};
use crate::rate_control::{sp_bursty, sp_limited, sp_unlimited};

/// Partition solver matching the scenario's regime.
pub fn regime_partition(scenario: &Scenario) -> Result<PartitionSolution> {
    let (tasks, budget) = (&scenario.tasks, scenario.budget_bits);
    match scenario.regime() {
        Regime::Unlimited => partition_unconstrained(tasks, budget),
        Regime::LimitedBuffer(cap) => partition_capped(tasks, budget, cap),
        Regime::Bursty(a) => partition_arrival_constrained(tasks, budget, a),
    }
}

/// String-pulling solver matching the scenario's regime.
pub fn regime_rates(scenario: &Scenario, partition: &Partition) -> Result<RatePlan> {
    let req = scenario.requirements(partition)?;
    match scenario.regime() {
        Regime::Unlimited => sp_unlimited(&req),
        Regime::LimitedBuffer(cap) => sp_limited(&req, cap),
        Regime::Bursty(a) => sp_bursty(&req, a),
    }
}

pub fn solve_stratified(scenario: &Scenario) -> Result<(Partition, RatePlan, SolveReport)> {
    let partition = regime_partition(scenario)?.partition;
    let plan = regime_rates(scenario, &partition)?;
    let report = SolveReport::evaluated(scenario, &partition, &plan)?;
    Ok((partition, plan, report))
}
