//! Error-minimizing data partitions.
//!
//! All three solvers minimize `Σ β_n a_n (D_n/d_n + c_n)^(-b_n)` over
//! `D_n ≥ 0` with `Σ D_n ≤ D`; they differ in the extra constraints. The
//! stationary point of task `n` at water level `λ` is
//!
//! ```text
//! D_n(λ) = d_n (β_n a_n b_n / (λ d_n))^(1/(b_n+1)) - c_n d_n
//! ```
//!
//! which is clipped to the admissible box and the level found by bisection
//! on `log λ`.

use crate::error::{Error, Result};
use crate::model::{ArrivalCurve, CumulativeCurve, LearningTaskSpec, Partition};

/// Budget residual at which the level bisection stops, relative to the budget.
pub const BUDGET_RTOL: f64 = 1e-9;

/// Initial level bracket; widened geometrically when the root lies outside.
const LEVEL_BRACKET: (f64, f64) = (1e-5, 1e5);

const MAX_BISECTIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSolution {
    pub partition: Partition,
    /// Budget multiplier λ* (the level of the last block when prefix bounds
    /// are present).
    pub multiplier: f64,
    /// `D − Σ D_n`.
    pub budget_residual: f64,
    /// Water level seen by each task: λ* plus any active prefix multipliers.
    pub levels: Vec<f64>,
    /// Tasks clipped at zero.
    pub clipped_zero: Vec<usize>,
    /// Tasks clipped at the per-task cap.
    pub clipped_cap: Vec<usize>,
    /// Prefix indices `j` whose bound `Σ_{n≤j} D_n ≤ B(t_j)` is active.
    pub active_prefixes: Vec<usize>,
}

/// Unclipped stationary allocation at level `level`.
pub fn stationary_bits(task: &LearningTaskSpec, level: f64) -> f64 {
    let d = task.bits_per_sample;
    let num = task.error_weight * task.amplitude * task.decay;
    if num <= 0.0 {
        return -task.prior_samples * d;
    }
    d * (num / (level * d)).powf(1.0 / (task.decay + 1.0)) - task.prior_samples * d
}

/// Marginal error reduction `β_n (a_n b_n / d_n) x^(-b_n-1)` at `bits`.
pub fn marginal_gain(task: &LearningTaskSpec, bits: f64) -> f64 {
    let x = bits / task.bits_per_sample + task.prior_samples;
    task.error_weight * task.amplitude * task.decay / task.bits_per_sample * x.powf(-task.decay - 1.0)
}

struct Fill {
    bits: Vec<f64>,
    level: f64,
}

fn filled(tasks: &[LearningTaskSpec], caps: &[f64], level: f64) -> Vec<f64> {
    tasks
        .iter()
        .zip(caps)
        .map(|(t, &cap)| stationary_bits(t, level).clamp(0.0, cap))
        .collect()
}

/// Clipped water-filling: finds `λ` with `Σ clamp(D_n(λ), 0, cap_n) = budget`,
/// or `λ = 0` when even the saturated allocation leaves budget unspent.
fn water_fill(tasks: &[LearningTaskSpec], budget: f64, caps: &[f64]) -> Fill {
    let saturated: f64 = tasks
        .iter()
        .zip(caps)
        .filter(|(t, _)| t.error_weight > 0.0)
        .map(|(_, &c)| c)
        .sum();
    let tol = BUDGET_RTOL * budget;
    if saturated <= budget + tol {
        let bits = tasks
            .iter()
            .zip(caps)
            .map(|(t, &c)| if t.error_weight > 0.0 { c } else { 0.0 })
            .collect();
        return Fill { bits, level: 0.0 };
    }

    let total = |level: f64| -> f64 { filled(tasks, caps, level).iter().sum() };
    let (mut lo, mut hi) = LEVEL_BRACKET;
    while total(lo) < budget && lo > f64::MIN_POSITIVE {
        lo /= 16.0;
    }
    while total(hi) > budget && hi < f64::MAX / 16.0 {
        hi *= 16.0;
    }
    let mut level = (lo * hi).sqrt();
    for _ in 0..MAX_BISECTIONS {
        level = (lo * hi).sqrt();
        let s = total(level);
        if (s - budget).abs() <= tol {
            break;
        }
        if s < budget {
            hi = level;
        } else {
            lo = level;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Fill {
        bits: filled(tasks, caps, level),
        level,
    }
}

fn validate(tasks: &[LearningTaskSpec], budget: f64) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no tasks".into()));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidInput(format!("budget must be > 0 (got {budget})")));
    }
    for (i, t) in tasks.iter().enumerate() {
        t.validate().map_err(|e| Error::InvalidInput(format!("task {i}: {e}")))?;
    }
    if tasks.iter().all(|t| t.error_weight == 0.0) {
        return Err(Error::Degenerate(
            "all error weights are zero; the objective does not depend on the partition".into(),
        ));
    }
    Ok(())
}

fn solution(bits: Vec<f64>, budget: f64, levels: Vec<f64>, multiplier: f64, caps: &[f64]) -> PartitionSolution {
    let tol = BUDGET_RTOL * budget;
    let clipped_zero = bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b <= 0.0)
        .map(|(i, _)| i)
        .collect();
    let clipped_cap = bits
        .iter()
        .zip(caps)
        .enumerate()
        .filter(|(_, (&b, &c))| c.is_finite() && b > 0.0 && b >= c - tol)
        .map(|(i, _)| i)
        .collect();
    let budget_residual = budget - bits.iter().sum::<f64>();
    PartitionSolution {
        partition: Partition::new(bits).expect("water-filling yields non-negative bits"),
        multiplier,
        budget_residual,
        levels,
        clipped_zero,
        clipped_cap,
        active_prefixes: Vec::new(),
    }
}

/// Optimal partition under the budget alone.
pub fn partition_unconstrained(tasks: &[LearningTaskSpec], budget: f64) -> Result<PartitionSolution> {
    validate(tasks, budget)?;
    let caps = vec![f64::INFINITY; tasks.len()];
    let fill = water_fill(tasks, budget, &caps);
    let levels = vec![fill.level; tasks.len()];
    Ok(solution(fill.bits, budget, levels, fill.level, &caps))
}

/// Optimal partition with the additional bound `D_n ≤ cap` on every task.
pub fn partition_capped(tasks: &[LearningTaskSpec], budget: f64, cap: f64) -> Result<PartitionSolution> {
    if !(cap > 0.0) {
        return Err(Error::InvalidInput(format!("cap must be > 0 (got {cap})")));
    }
    validate(tasks, budget)?;
    let caps = vec![cap; tasks.len()];
    let fill = water_fill(tasks, budget, &caps);
    let levels = fill
        .bits
        .iter()
        .zip(tasks)
        .map(|(&b, t)| {
            // Capped tasks see their own marginal gain; the difference to λ
            // is the cap multiplier.
            if b >= cap * (1.0 - BUDGET_RTOL) && t.error_weight > 0.0 {
                marginal_gain(t, b)
            } else {
                fill.level
            }
        })
        .collect();
    Ok(solution(fill.bits, budget, levels, fill.level, &caps))
}

/// Optimal partition with prefix bounds `Σ_{n≤j} D_n ≤ B(t_j)`.
///
/// Active prefix bounds split the tasks into consecutive blocks with a common
/// water level; levels are non-increasing from block to block. The first
/// block ends at the prefix whose own level is highest (ties go to the later
/// prefix), then the rest is solved on the residual bounds.
pub fn partition_arrival_constrained(
    tasks: &[LearningTaskSpec],
    budget: f64,
    arrival: &ArrivalCurve,
) -> Result<PartitionSolution> {
    validate(tasks, budget)?;
    let n = tasks.len();
    let raw: Vec<f64> = tasks.iter().map(|t| arrival.value_at(t.deadline)).collect();
    // Effective prefix bounds: later bounds and the budget also cap earlier prefixes.
    let mut bound = vec![0.0; n];
    let mut running = budget;
    for j in (0..n).rev() {
        running = running.min(raw[j]);
        bound[j] = running;
    }

    let tol = BUDGET_RTOL * budget;
    let caps = vec![f64::INFINITY; n];
    let mut bits = vec![0.0; n];
    let mut levels = vec![0.0; n];
    let mut active = Vec::new();
    let mut start = 0;
    let mut used = 0.0;
    while start < n {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for j in start..n {
            let room = bound[j] - used;
            let block = &tasks[start..=j];
            let (level, alloc) = if room <= tol {
                (f64::INFINITY, vec![0.0; block.len()])
            } else if block.iter().all(|t| t.error_weight == 0.0) {
                (0.0, vec![0.0; block.len()])
            } else {
                let fill = water_fill(block, room, &caps[start..=j]);
                (fill.level, fill.bits)
            };
            let better = match &best {
                None => true,
                Some((_, b, _)) => {
                    level == f64::INFINITY && *b == f64::INFINITY
                        || level >= *b * (1.0 - 1e-9)
                }
            };
            if better {
                best = Some((j, level, alloc));
            }
        }
        let (end, level, alloc) = best.expect("non-empty block range");
        for (k, b) in alloc.into_iter().enumerate() {
            bits[start + k] = b;
            levels[start + k] = level;
        }
        used += bits[start..=end].iter().sum::<f64>();
        if level > 0.0 && end + 1 < n {
            active.push(end);
        }
        start = end + 1;
    }

    let multiplier = levels[n - 1];
    let mut sol = solution(bits, budget, levels, multiplier, &caps);
    let mut prefix = 0.0;
    for (j, &b) in sol.partition.bits().iter().enumerate() {
        prefix += b;
        if j + 1 == n && raw[j] < budget && prefix >= raw[j] - tol {
            active.push(j);
        }
    }
    sol.active_prefixes = active;
    Ok(sol)
}
