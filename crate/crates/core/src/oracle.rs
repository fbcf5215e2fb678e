//! Brute-force verifiers for the solvers.
//!
//! Shares only the model types and evaluators with the rest of the crate.
//! Rates are parameterized per epoch through the cumulative bits `y_k`
//! transmitted by each instant, and minimized by accelerated projected
//! gradient descent over `{L ≤ y ≤ U, y non-decreasing}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChannelModel, CumulativeCurve, Partition, RatePlan, Regime, Scenario, StaircaseCurve};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// At least 10.
    pub grid_points_per_axis: usize,
    pub descent_iterations: usize,
    pub seed: u64,
    pub random_starts: usize,
    /// Each epoch is split into this many equal sub-epochs with their own rate.
    pub epoch_subdivisions: usize,
    /// Line-search sweeps after the partition grid; 0 returns the best grid point.
    pub line_search_sweeps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_points_per_axis: 21,
            descent_iterations: 20_000,
            seed: 0,
            random_starts: 16,
            epoch_subdivisions: 1,
            line_search_sweeps: 6,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if self.grid_points_per_axis < 10 {
            return Err(Error::InvalidInput(format!(
                "grid_points_per_axis must be >= 10 (got {})",
                self.grid_points_per_axis
            )));
        }
        if self.epoch_subdivisions == 0 || self.descent_iterations == 0 {
            return Err(Error::InvalidInput("epoch_subdivisions and descent_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Box bounds on cumulative bits at each instant.
#[derive(Debug, Clone)]
struct Walls {
    times: Vec<f64>,
    spans: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn walls(req: &StaircaseCurve, regime: Regime<'_>, subdivisions: usize) -> Result<Walls> {
    let corners = req.corners();
    let t_end = corners.last().map(|c| c.0).unwrap_or(0.0);
    let deadlines: Vec<f64> = corners.iter().map(|c| c.0).collect();
    let base: Vec<f64> = match regime {
        Regime::Bursty(a) => {
            let mut ts: Vec<f64> = a
                .events()
                .iter()
                .map(|e| e.0)
                .chain(deadlines.iter().copied())
                .filter(|&t| t > 0.0 && t <= t_end)
                .collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts
        }
        _ => deadlines.clone(),
    };
    // Cumulative requirement of deadlines strictly before t.
    let before = |t: f64| -> f64 {
        corners
            .iter()
            .take_while(|c| c.0 < t)
            .last()
            .map_or(0.0, |c| c.1)
    };
    let mut times = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut prev = 0.0;
    for &t in &base {
        for i in 1..=subdivisions {
            let s = if i == subdivisions {
                t
            } else {
                prev + (t - prev) * i as f64 / subdivisions as f64
            };
            times.push(s);
            lo.push(if i == subdivisions { req.value_at(t) } else { before(t) });
            hi.push(match regime {
                Regime::Unlimited => f64::INFINITY,
                Regime::LimitedBuffer(cap) => before(t) + cap,
                Regime::Bursty(a) => {
                    let (b0, b1) = (a.value_at(prev), a.value_at(t));
                    b0 + (b1 - b0) * (s - prev) / (t - prev)
                }
            });
        }
        prev = t;
    }
    let mut spans = Vec::with_capacity(times.len());
    let mut last = 0.0;
    for &t in &times {
        spans.push(t - last);
        last = t;
    }
    let scale = lo.last().copied().unwrap_or(0.0).max(1.0);
    for k in 0..times.len() {
        if lo[k] > hi[k] + 1e-9 * scale {
            return Err(Error::Infeasible(format!(
                "needs {} bits by t = {} but at most {} can be sent",
                lo[k], times[k], hi[k]
            )));
        }
        hi[k] = hi[k].max(lo[k]);
    }
    Ok(Walls { times, spans, lo, hi })
}

fn energy(y: &[f64], w: &Walls, ch: &ChannelModel) -> f64 {
    let mut prev = 0.0;
    let mut e = 0.0;
    for (k, &yk) in y.iter().enumerate() {
        e += w.spans[k] * ch.power((yk - prev) / w.spans[k]);
        prev = yk;
    }
    e
}

fn gradient(y: &[f64], w: &Walls, ch: &ChannelModel) -> Vec<f64> {
    let k = y.len();
    let slope: Vec<f64> = (0..k)
        .map(|i| {
            let prev = if i == 0 { 0.0 } else { y[i - 1] };
            let r = (y[i] - prev) / w.spans[i];
            ch.noise_over_gain() / ch.bandwidth * (r / ch.bandwidth).exp()
        })
        .collect();
    (0..k)
        .map(|i| if i + 1 < k { slope[i] - slope[i + 1] } else { slope[i] })
        .collect()
}

/// Hessian diagonal of the energy at `y`, floored so the metric stays
/// positive definite.
fn curvature_diagonal(y: &[f64], w: &Walls, ch: &ChannelModel) -> Vec<f64> {
    let k = y.len();
    let c: Vec<f64> = (0..k)
        .map(|i| {
            let prev = if i == 0 { 0.0 } else { y[i - 1] };
            let r = (y[i] - prev) / w.spans[i];
            ch.noise_over_gain() / (ch.bandwidth * ch.bandwidth) * (r / ch.bandwidth).exp() / w.spans[i]
        })
        .collect();
    let d: Vec<f64> = (0..k).map(|i| c[i] + if i + 1 < k { c[i + 1] } else { 0.0 }).collect();
    let top = d.iter().copied().fold(0.0, f64::max);
    d.iter().map(|&v| v.max(1e-12 * top).max(1e-300)).collect()
}

/// Weighted least-squares non-decreasing fit of `v` with `lo ≤ x ≤ hi`
/// elementwise, for non-decreasing `lo ≤ hi` and positive weights `m`.
/// Pool-adjacent-violators where each pooled block takes its weighted mean
/// clamped to the block's tightest walls; pooling is exact for separable
/// convex terms on a chain.
fn pava_boxed(v: &[f64], m: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    struct Block {
        moment: f64,
        mass: f64,
        len: usize,
        lo: f64,
        hi: f64,
    }
    impl Block {
        fn value(&self) -> f64 {
            (self.moment / self.mass).max(self.lo).min(self.hi.max(self.lo))
        }
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        blocks.push(Block {
            moment: m[i] * v[i],
            mass: m[i],
            len: 1,
            lo: lo[i],
            hi: hi[i],
        });
        while blocks.len() > 1 && blocks[blocks.len() - 2].value() > blocks[blocks.len() - 1].value() {
            let b = blocks.pop().expect("two blocks");
            let a = blocks.last_mut().expect("two blocks");
            a.moment += b.moment;
            a.mass += b.mass;
            a.len += b.len;
            a.lo = a.lo.max(b.lo);
            a.hi = a.hi.min(b.hi);
        }
    }
    blocks
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.value(), b.len))
        .collect()
}

/// Projection onto `{lo ≤ y ≤ hi, y non-decreasing}` in the `m`-weighted norm.
fn project(v: &[f64], m: &[f64], w: &Walls) -> Vec<f64> {
    pava_boxed(v, m, &w.lo, &w.hi)
}

/// Iterations between metric refreshes; the curvature moves with the rates.
const METRIC_REFRESH: usize = 50;

/// FISTA in a diagonal metric with backtracking and function-value restarts.
/// The metric is the Hessian diagonal, refreshed at every restart and every
/// `METRIC_REFRESH` iterations; steps near 1 are then natural whatever the
/// spread of rates.
fn descend(w: &Walls, ch: &ChannelModel, start: Vec<f64>, iterations: usize) -> (Vec<f64>, f64) {
    let scale = w.lo.last().copied().unwrap_or(0.0).abs().max(1e-300);
    let mut m = vec![1.0; start.len()];
    let mut x = project(&start, &m, w);
    let mut fx = energy(&x, w, ch);
    m = curvature_diagonal(&x, w, ch);
    let mut z = x.clone();
    let mut t: f64 = 1.0;
    let mut eta = 1.0;
    let mut restarted = false;
    for it in 0..iterations {
        if it % METRIC_REFRESH == METRIC_REFRESH - 1 {
            z = x.clone();
            t = 1.0;
            m = curvature_diagonal(&x, w, ch);
            eta = 1.0;
        }
        let g = gradient(&z, w, ch);
        let fz = energy(&z, w, ch);
        let mut cand;
        loop {
            let stepped: Vec<f64> = (0..z.len()).map(|i| z[i] - eta * g[i] / m[i]).collect();
            cand = project(&stepped, &m, w);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..z.len() {
                let d = cand[i] - z[i];
                lin += g[i] * d;
                sq += m[i] * d * d;
            }
            let fc = energy(&cand, w, ch);
            if fc <= fz + lin + sq / (2.0 * eta) + 1e-15 * fz.abs() || eta < 1e-300 {
                break;
            }
            eta *= 0.5;
        }
        let fc = energy(&cand, w, ch);
        if fc > fx {
            // A plain projected step from the incumbent that still fails to
            // improve means the incumbent is stationary to roundoff.
            if restarted {
                break;
            }
            z = x.clone();
            t = 1.0;
            m = curvature_diagonal(&x, w, ch);
            eta = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        let change = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = cand
            .iter()
            .zip(&x)
            .map(|(c, p)| c + (t - 1.0) / t_next * (c - p))
            .collect();
        let improvement = fx - fc;
        x = cand;
        fx = fc;
        t = t_next;
        if change <= 1e-13 * scale && improvement <= 1e-16 * fx.abs() {
            break;
        }
    }
    (x, fx)
}

fn to_plan(y: &[f64], w: &Walls) -> Result<RatePlan> {
    let mut prev = 0.0;
    let rates: Vec<f64> = y
        .iter()
        .zip(&w.spans)
        .map(|(&v, &s)| {
            let r = ((v - prev) / s).max(0.0);
            prev = v;
            r
        })
        .collect();
    RatePlan::from_epoch_rates(&w.times, &rates)
}

fn check_len(req: &StaircaseCurve, max: usize) -> Result<()> {
    if req.len() > max {
        return Err(Error::InvalidInput(format!(
            "oracle handles at most {max} deadlines (got {})",
            req.len()
        )));
    }
    Ok(())
}

/// Minimum-energy per-epoch plan for `requirements` under `regime`.
pub fn oracle_rate_control(
    requirements: &StaircaseCurve,
    regime: Regime<'_>,
    channel: &ChannelModel,
    config: &OracleConfig,
) -> Result<RatePlan> {
    config.validate()?;
    check_len(requirements, 8)?;
    let w = walls(requirements, regime, config.epoch_subdivisions)?;
    let total = requirements.total();
    let top: Vec<f64> = w.hi.iter().map(|&h| h.min(total.max(0.0))).collect();
    let mut starts = vec![w.lo.clone(), top.clone()];
    for s in 0..config.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(s as u64 + 1)));
        let y: Vec<f64> = w
            .lo
            .iter()
            .zip(&top)
            .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l })
            .collect();
        starts.push(y);
    }
    let results: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .map(|s| descend(&w, channel, s, config.descent_iterations))
        .collect();
    let best = results
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("at least two starts");
    to_plan(&best.0, &w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOracleResult {
    pub partition: Partition,
    pub plan: RatePlan,
    pub objective: f64,
}

struct JointProblem<'a> {
    scenario: &'a Scenario,
    config: &'a OracleConfig,
    upper: f64,
}

impl JointProblem<'_> {
    /// Objective of a partition with its oracle-optimal rates, or `None` when
    /// the partition is infeasible or has unbounded error.
    fn evaluate(&self, bits: &[f64]) -> Option<(f64, Vec<f64>, Walls)> {
        let sc = self.scenario;
        if bits.iter().any(|&b| b < 0.0) || bits.iter().sum::<f64>() > sc.budget_bits * (1.0 + 1e-12) {
            return None;
        }
        let mut err = 0.0;
        for (t, &b) in sc.tasks.iter().zip(bits) {
            if t.error_weight == 0.0 {
                continue;
            }
            let x = b / t.bits_per_sample + t.prior_samples;
            if x <= 0.0 {
                return None;
            }
            err += t.error_weight * t.amplitude * x.powf(-t.decay);
        }
        let mut acc = 0.0;
        let corners = sc
            .tasks
            .iter()
            .zip(bits)
            .map(|(t, &b)| {
                acc += b;
                (t.deadline, acc)
            })
            .collect();
        let req = StaircaseCurve::new(corners).ok()?;
        let w = walls(&req, sc.regime(), self.config.epoch_subdivisions).ok()?;
        let (y, e) = if sc.energy_weight > 0.0 {
            descend(&w, &sc.channel, w.lo.clone(), self.config.descent_iterations)
        } else {
            (w.lo.clone(), 0.0)
        };
        Some((sc.energy_weight * e + err, y, w))
    }

    fn value(&self, bits: &[f64]) -> f64 {
        self.evaluate(bits).map_or(f64::INFINITY, |r| r.0)
    }

    fn grid(&self) -> Vec<Vec<f64>> {
        let n = self.scenario.len();
        let g = self.config.grid_points_per_axis;
        let step = self.upper / (g - 1) as f64;
        let mut out = Vec::new();
        let mut idx = vec![0usize; n];
        loop {
            let bits: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
            if bits.iter().sum::<f64>() <= self.scenario.budget_bits * (1.0 + 1e-12) {
                out.push(bits);
            }
            let mut d = 0;
            loop {
                if d == n {
                    return out;
                }
                idx[d] += 1;
                if idx[d] < g {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    /// Golden-section minimum of `f` on `[a, b]`, also comparing endpoints.
    fn golden(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (a, b);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..80 {
            if hi - lo <= 1e-12 * (1.0 + b.abs()) {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = f(x2);
            }
        }
        [(x1, f1), (x2, f2), (a, f(a)), (b, f(b))]
            .into_iter()
            .fold((a, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    fn polish(&self, mut bits: Vec<f64>, mut val: f64) -> (Vec<f64>, f64) {
        let n = bits.len();
        let budget = self.scenario.budget_bits;
        for _ in 0..self.config.line_search_sweeps {
            let before = val;
            for i in 0..n {
                let rest: f64 = bits.iter().sum::<f64>() - bits[i];
                let hi = (budget - rest).min(self.upper).max(0.0);
                let probe = |v: f64| {
                    let mut b = bits.clone();
                    b[i] = v;
                    self.value(&b)
                };
                let (v, f) = Self::golden(probe, 0.0, hi);
                if f < val {
                    bits[i] = v;
                    val = f;
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    let (bi, bj) = (bits[i], bits[j]);
                    let lo = -bi.min(self.upper - bj);
                    let hi = bj.min(self.upper - bi);
                    if !(hi > lo) {
                        continue;
                    }
                    let probe = |s: f64| {
                        let mut b = bits.clone();
                        b[i] = (bi + s).max(0.0);
                        b[j] = (bj - s).max(0.0);
                        self.value(&b)
                    };
                    let (s, f) = Self::golden(probe, lo, hi);
                    if f < val {
                        bits[i] = (bi + s).max(0.0);
                        bits[j] = (bj - s).max(0.0);
                        val = f;
                    }
                }
            }
            if before - val <= 1e-14 * val.abs() {
                break;
            }
        }
        (bits, val)
    }
}

/// Best (partition, plan) over an exhaustive partition grid with oracle
/// rates, refined by coordinate and pairwise-transfer line searches.
pub fn oracle_joint(scenario: &Scenario, config: &OracleConfig) -> Result<JointOracleResult> {
    config.validate()?;
    if scenario.len() > 4 {
        return Err(Error::InvalidInput(format!(
            "joint oracle handles at most 4 tasks (got {})",
            scenario.len()
        )));
    }
    let upper = match scenario.regime() {
        Regime::LimitedBuffer(cap) => cap.min(scenario.budget_bits),
        _ => scenario.budget_bits,
    };
    let problem = JointProblem {
        scenario,
        config,
        upper,
    };
    let grid = problem.grid();
    let values: Vec<f64> = grid.par_iter().map(|b| problem.value(b)).collect();
    let (best_idx, best_val) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, c| if c.1 < a.1 { c } else { a });
    if !best_val.is_finite() {
        return Err(Error::Infeasible("no partition on the oracle grid is feasible".into()));
    }
    let (bits, _) = problem.polish(grid[best_idx].clone(), best_val);
    let (objective, y, w) = problem.evaluate(&bits).expect("polished point is feasible");
    Ok(JointOracleResult {
        partition: Partition::new(bits)?,
        plan: to_plan(&y, &w)?,
        objective,
    })
}

/// Oracle energy of a fixed requirement curve; convenience for comparisons.
pub fn oracle_energy(
    requirements: &StaircaseCurve,
    regime: Regime<'_>,
    channel: &ChannelModel,
    config: &OracleConfig,
) -> Result<f64> {
    let plan = oracle_rate_control(requirements, regime, channel, config)?;
    Ok(crate::model::plan_energy(&plan, channel))
}
