//! Comparison schemes: equal partition (EDP), equal constant rate (ERC) and
//! both together (EDPRC).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::merged::SolveReport;
use crate::model::{check_feasible, CumulativeCurve, Partition, RatePlan, Regime, Scenario};
use crate::stratified::{regime_partition, regime_rates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Equal data partition, string-pulled rates.
    Edp,
    /// Optimal partition, one constant rate.
    Erc,
    /// Equal partition and one constant rate.
    Edprc,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Edp, BaselineKind::Erc, BaselineKind::Edprc];
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Edp => "EDP",
            BaselineKind::Erc => "ERC",
            BaselineKind::Edprc => "EDPRC",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EDP" => Ok(BaselineKind::Edp),
            "ERC" => Ok(BaselineKind::Erc),
            "EDPRC" => Ok(BaselineKind::Edprc),
            _ => Err(Error::InvalidInput(format!("unknown baseline kind {s:?} (expected EDP, ERC or EDPRC)"))),
        }
    }
}

/// Largest common allotment that respects the budget, the buffer cap and
/// every arrival prefix.
fn equal_partition(scenario: &Scenario, kind: BaselineKind) -> Result<Partition> {
    let n = scenario.len();
    let mut share = scenario.budget_bits / n as f64;
    match scenario.regime() {
        Regime::Unlimited => {}
        Regime::LimitedBuffer(cap) => share = share.min(cap),
        Regime::Bursty(a) => {
            for (j, t) in scenario.tasks.iter().enumerate() {
                share = share.min(a.value_at(t.deadline) / (j + 1) as f64);
            }
        }
    }
    if !(share > 0.0) {
        return Err(Error::InfeasibleBaseline {
            kind: kind.to_string(),
            reason: "no positive equal allotment fits the arrival profile".into(),
        });
    }
    Partition::new(vec![share; n])
}

/// Smallest constant rate meeting every deadline, held until everything is
/// delivered and then switched off.
fn constant_rate_plan(scenario: &Scenario, partition: &Partition, kind: BaselineKind) -> Result<RatePlan> {
    let req = scenario.requirements(partition)?;
    let t_end = scenario.final_deadline();
    let rate = req.corners().iter().map(|&(t, c)| c / t).fold(0.0, f64::max);
    let total = req.total();
    let plan = if rate > 0.0 {
        let busy = (total / rate).min(t_end);
        if t_end - busy > 1e-12 * t_end {
            RatePlan::from_pairs(&[(rate, busy), (0.0, t_end - busy)])?
        } else {
            RatePlan::from_pairs(&[(rate, t_end)])?
        }
    } else {
        RatePlan::from_pairs(&[(0.0, t_end)])?
    };
    let report = check_feasible(&plan, &req, scenario.buffer_cap_bits, scenario.arrival.as_ref())?;
    if let Some(v) = report.first_violation {
        return Err(Error::InfeasibleBaseline {
            kind: kind.to_string(),
            reason: format!("constant rate {rate} b/s violates the {} constraint at t = {}", v.kind, v.time),
        });
    }
    Ok(plan)
}

pub fn baseline_solve(scenario: &Scenario, kind: BaselineKind) -> Result<(Partition, RatePlan, SolveReport)> {
    let (partition, plan) = match kind {
        BaselineKind::Edp => {
            let p = equal_partition(scenario, kind)?;
            let plan = regime_rates(scenario, &p)?;
            (p, plan)
        }
        BaselineKind::Erc => {
            let p = regime_partition(scenario)?.partition;
            let plan = constant_rate_plan(scenario, &p, kind)?;
            (p, plan)
        }
        BaselineKind::Edprc => {
            let p = equal_partition(scenario, kind)?;
            let plan = constant_rate_plan(scenario, &p, kind)?;
            (p, plan)
        }
    };
    let report = SolveReport::evaluated(scenario, &partition, &plan)?;
    Ok((partition, plan, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{plan_energy, ChannelModel, LearningTaskSpec};

    fn unit() -> ChannelModel {
        ChannelModel::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_rate_example() {
        // Partition [2, 1] at deadlines [1, 2]: rate 2 for 1.5 s, then idle.
        let t_a = LearningTaskSpec::new(1.0, 1.0, 0.0, 2.0, 1.0, 0.25).unwrap();
        let t_b = LearningTaskSpec::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.25).unwrap();
        let sc = Scenario::new(vec![t_a, t_b], 3.0, None, None, 0.5, unit()).unwrap();
        let p = Partition::new(vec![2.0, 1.0]).unwrap();
        let plan = constant_rate_plan(&sc, &p, BaselineKind::Erc).unwrap();
        assert_eq!(plan.segments().len(), 2);
        assert_eq!(plan.segments()[0].rate, 2.0);
        assert_eq!(plan.segments()[0].duration, 1.5);
        let expected = (2f64.exp() - 1.0) * 1.5;
        assert!((plan_energy(&plan, &sc.channel) - expected).abs() < 1e-12);
        assert!((expected - 9.583_584_148_395_975).abs() < 1e-12);
    }

    #[test]
    fn equal_share_respects_arrival_prefixes() {
        let t = |dl| LearningTaskSpec::new(dl, 1.0, 1.0, 1.0, 1.0, 0.25).unwrap();
        let arr = crate::model::ArrivalCurve::new(vec![(1.0, 0.5), (2.0, 4.0)]).unwrap();
        let sc = Scenario::new(vec![t(1.0), t(2.0)], 4.0, None, Some(arr), 0.5, unit()).unwrap();
        let (p, plan, _) = baseline_solve(&sc, BaselineKind::Edp).unwrap();
        assert_eq!(p.bits(), &[0.5, 0.5]);
        assert!(sc.feasibility(&p, &plan).unwrap().feasible);
    }

    #[test]
    fn zero_arrival_before_first_deadline_rejects_equal_share() {
        let t = |dl| LearningTaskSpec::new(dl, 1.0, 1.0, 1.0, 1.0, 0.25).unwrap();
        let arr = crate::model::ArrivalCurve::new(vec![(1.5, 4.0)]).unwrap();
        let sc = Scenario::new(vec![t(1.0), t(2.0)], 4.0, None, Some(arr), 0.5, unit()).unwrap();
        let err = baseline_solve(&sc, BaselineKind::Edprc).unwrap_err();
        assert!(matches!(err, Error::InfeasibleBaseline { .. }));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("edprc".parse::<BaselineKind>().unwrap(), BaselineKind::Edprc);
        assert!("EDX".parse::<BaselineKind>().is_err());
        for k in BaselineKind::ALL {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
