//! Seeded random problem instances for cross-checks.

use rand::Rng;

use crate::error::Result;
use crate::model::{ArrivalCurve, ChannelModel, LearningTaskSpec, Regime, Scenario, StaircaseCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    Unlimited,
    Limited,
    Bursty,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 3] = [RegimeKind::Unlimited, RegimeKind::Limited, RegimeKind::Bursty];
}

/// A rate-control instance: requirements, an upper wall and a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RateInstance {
    pub requirements: StaircaseCurve,
    pub cap: Option<f64>,
    pub arrival: Option<ArrivalCurve>,
    pub channel: ChannelModel,
}

impl RateInstance {
    pub fn regime(&self) -> Regime<'_> {
        match (&self.arrival, self.cap) {
            (Some(a), _) => Regime::Bursty(a),
            (None, Some(c)) => Regime::LimitedBuffer(c),
            _ => Regime::Unlimited,
        }
    }
}

fn deadlines(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0.2..2.0);
            t
        })
        .collect()
}

fn channel(rng: &mut impl Rng) -> ChannelModel {
    ChannelModel::new(rng.gen_range(0.5..3.0), rng.gen_range(0.5..2.0), 1.0).expect("positive channel")
}

/// Non-decreasing arrival staircase that covers `required(t)` at every
/// deadline, with extra events in between.
pub fn random_arrival(rng: &mut impl Rng, deadlines: &[f64], required: &[f64]) -> ArrivalCurve {
    let mut events = Vec::new();
    let mut level: f64 = 0.0;
    let mut prev_t = 0.0;
    let mut prev_need = 0.0;
    if rng.gen_bool(0.3) {
        level = rng.gen_range(0.0..1.0);
        events.push((0.0, level));
    }
    for (&t, &need) in deadlines.iter().zip(required) {
        // Inner events keep a tenth of the epoch clear on both sides and
        // never fall below the straight line between requirements, so no
        // instance forces a near-vertical rate.
        let gap = t - prev_t;
        for _ in 0..rng.gen_range(0..3) {
            let s = rng.gen_range(prev_t + 0.1 * gap..t - 0.1 * gap);
            if events.last().is_none_or(|e: &(f64, f64)| s > e.0) {
                let line = prev_need + (need - prev_need) * (s - prev_t) / gap;
                level = (level + rng.gen_range(0.0..0.8)).max(line);
                events.push((s, level));
            }
        }
        prev_need = need;
        level = level.max(need + rng.gen_range(0.0..1.0) * rng.gen_range(0.0..1.0));
        events.push((t, level));
        prev_t = t;
    }
    ArrivalCurve::new(events).expect("increasing events")
}

/// Requirements with up to `max_tasks` deadlines under the given regime.
pub fn random_rate_instance(rng: &mut impl Rng, max_tasks: usize, kind: RegimeKind) -> RateInstance {
    let n = rng.gen_range(1..=max_tasks);
    let ts = deadlines(rng, n);
    let mut acc = 0.0;
    let corners: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            if !rng.gen_bool(0.1) {
                acc += rng.gen_range(0.05..2.0);
            }
            (t, acc)
        })
        .collect();
    let requirements = StaircaseCurve::new(corners).expect("valid staircase");
    let (cap, arrival) = match kind {
        RegimeKind::Unlimited => (None, None),
        RegimeKind::Limited => {
            let biggest = requirements.increments().into_iter().fold(0.0, f64::max).max(0.05);
            (Some(biggest * rng.gen_range(1.0..2.5)), None)
        }
        RegimeKind::Bursty => {
            let need: Vec<f64> = requirements.corners().iter().map(|c| c.1).collect();
            (None, Some(random_arrival(rng, &ts, &need)))
        }
    };
    RateInstance {
        requirements,
        cap,
        arrival,
        channel: channel(rng),
    }
}

/// Random learning tasks with positive weights under the given regime.
pub fn random_scenario(rng: &mut impl Rng, tasks: usize, kind: RegimeKind) -> Result<Scenario> {
    let ts = deadlines(rng, tasks);
    let specs: Vec<LearningTaskSpec> = ts
        .iter()
        .map(|&t| {
            let prior = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) };
            LearningTaskSpec::new(
                t,
                rng.gen_range(1.0..2.0),
                prior,
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.3..1.5),
                rng.gen_range(0.05..1.0),
            )
        })
        .collect::<Result<_>>()?;
    let budget = rng.gen_range(1.0..6.0);
    let alpha = rng.gen_range(0.05..1.0);
    let mut cap = None;
    let mut arrival = None;
    match kind {
        RegimeKind::Unlimited => {}
        RegimeKind::Limited => cap = Some(budget / tasks as f64 * rng.gen_range(0.5..2.0)),
        RegimeKind::Bursty => {
            let share = budget / tasks as f64;
            let need: Vec<f64> = (1..=tasks).map(|j| share * j as f64 * rng.gen_range(0.3..1.2)).collect();
            arrival = Some(random_arrival(rng, &ts, &need));
        }
    }
    Scenario::new(specs, budget, cap, arrival, alpha, channel(rng))
}
