//! Joint partition and rate control as one convex program.
//!
//! Variables are the task allotments `D_n` and one rate per epoch. The
//! program is solved by a log-barrier method with damped Newton steps in
//! scaled variables, then the rates are replaced by the string-pulled
//! schedule of the final partition (the optimal rates for it) and the
//! result is certified by KKT residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    per_task_errors, plan_energy, weighted_objective, CumulativeCurve, Partition, RatePlan, Regime, Scenario,
};
use crate::rate_control::{sp_bursty, sp_limited, sp_unlimited, Tunnel};

/// Smallest sample count (above the prior) seen by the smooth error term.
const SAMPLE_FLOOR: f64 = 1e-12;
/// Allotments and rates below this fraction of their scale are reported as 0.
const CLIP_RTOL: f64 = 1e-9;
/// Allotments below this fraction of the budget are tried at zero and kept
/// there when that does not raise the objective.
const SNAP_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MergedConfig {
    /// Bound on both KKT residuals for a solve to count as converged.
    pub tolerance: f64,
    pub max_newton_steps: usize,
    pub barrier_start: f64,
    pub barrier_factor: f64,
    /// Stop when `rows · μ ≤ gap_rtol · objective` (normalized units).
    pub gap_rtol: f64,
}

impl Default for MergedConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_newton_steps: 5000,
            barrier_start: 1.0,
            barrier_factor: 10.0,
            gap_rtol: 1e-8,
        }
    }
}

/// Lagrange multipliers in original units, one entry per constraint.
/// Per-epoch vectors are indexed by epoch; `upper_wall` is the buffer (or
/// arrival) bound and stays zero in the unlimited case.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Multipliers {
    pub budget: f64,
    pub transmission: Vec<f64>,
    pub upper_wall: Vec<f64>,
    pub task_cap: Vec<f64>,
    pub partition_lower: Vec<f64>,
    pub rate_lower: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(tasks: usize, epochs: usize) -> Self {
        Self {
            budget: 0.0,
            transmission: vec![0.0; epochs],
            upper_wall: vec![0.0; epochs],
            task_cap: vec![0.0; tasks],
            partition_lower: vec![0.0; tasks],
            rate_lower: vec![0.0; epochs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub objective: f64,
    pub energy: f64,
    pub per_task_error: Vec<f64>,
    pub multipliers: Multipliers,
    /// `None` when the producer does not certify optimality (baselines).
    pub kkt_stationarity_residual: Option<f64>,
    pub kkt_complementarity_residual: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    /// Objective, energy and errors of a directly constructed pair. Nothing
    /// is iterated, so there is no certificate and nothing to converge.
    pub fn evaluated(scenario: &Scenario, partition: &Partition, plan: &RatePlan) -> Result<Self> {
        Ok(Self {
            objective: weighted_objective(partition, plan, scenario)?,
            energy: plan_energy(plan, &scenario.channel),
            per_task_error: per_task_errors(partition, scenario)?,
            multipliers: Multipliers::zeros(scenario.len(), scenario.epoch_instants().len()),
            kkt_stationarity_residual: None,
            kkt_complementarity_residual: None,
            iterations: 0,
            converged: true,
        })
    }

    pub fn multiplier_budget(&self) -> f64 {
        self.multipliers.budget
    }

    pub fn multipliers_transmission(&self) -> &[f64] {
        &self.multipliers.transmission
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Transmission,
    UpperWall,
    TaskCap,
    Budget,
    PartitionLower,
    RateLower,
}

/// `Σ coef · z ≤ rhs` over `z = [D_1..D_N, r_1..r_K]`.
#[derive(Debug, Clone)]
struct Row {
    kind: RowKind,
    index: usize,
    coef: Vec<(usize, f64)>,
    rhs: f64,
}

impl Row {
    fn activity(&self, z: &[f64]) -> f64 {
        self.coef.iter().map(|&(i, a)| a * z[i]).sum()
    }
}

struct Program<'a> {
    sc: &'a Scenario,
    n: usize,
    instants: Vec<f64>,
    spans: Vec<f64>,
    /// Epoch index of each task's deadline.
    task_epoch: Vec<usize>,
    rows: Vec<Row>,
}

impl<'a> Program<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let n = sc.len();
        let instants = sc.epoch_instants();
        let k = instants.len();
        let mut spans = Vec::with_capacity(k);
        let mut prev = 0.0;
        for &t in &instants {
            spans.push(t - prev);
            prev = t;
        }
        let task_epoch: Vec<usize> = sc
            .tasks
            .iter()
            .map(|t| instants.partition_point(|&s| s < t.deadline))
            .collect();
        let mut rows = Vec::new();
        let sent = |j: usize, sign: f64| -> Vec<(usize, f64)> { (0..=j).map(|m| (n + m, sign * spans[m])).collect() };
        for j in 0..k {
            let mut coef: Vec<(usize, f64)> = (0..n).filter(|&i| task_epoch[i] <= j).map(|i| (i, 1.0)).collect();
            coef.extend(sent(j, -1.0));
            rows.push(Row {
                kind: RowKind::Transmission,
                index: j,
                coef,
                rhs: 0.0,
            });
        }
        match sc.regime() {
            Regime::Unlimited => {}
            Regime::LimitedBuffer(cap) => {
                for j in 0..k {
                    let mut coef = sent(j, 1.0);
                    coef.extend((0..n).filter(|&i| task_epoch[i] < j).map(|i| (i, -1.0)));
                    rows.push(Row {
                        kind: RowKind::UpperWall,
                        index: j,
                        coef,
                        rhs: cap,
                    });
                }
                for i in 0..n {
                    rows.push(Row {
                        kind: RowKind::TaskCap,
                        index: i,
                        coef: vec![(i, 1.0)],
                        rhs: cap,
                    });
                }
            }
            Regime::Bursty(a) => {
                for j in 0..k {
                    rows.push(Row {
                        kind: RowKind::UpperWall,
                        index: j,
                        coef: sent(j, 1.0),
                        rhs: a.value_at(instants[j]),
                    });
                }
            }
        }
        rows.push(Row {
            kind: RowKind::Budget,
            index: 0,
            coef: (0..n).map(|i| (i, 1.0)).collect(),
            rhs: sc.budget_bits,
        });
        for i in 0..n {
            rows.push(Row {
                kind: RowKind::PartitionLower,
                index: i,
                coef: vec![(i, -1.0)],
                rhs: 0.0,
            });
        }
        for j in 0..k {
            rows.push(Row {
                kind: RowKind::RateLower,
                index: j,
                coef: vec![(n + j, -1.0)],
                rhs: 0.0,
            });
        }
        Self {
            sc,
            n,
            instants,
            spans,
            task_epoch,
            rows,
        }
    }

    fn epochs(&self) -> usize {
        self.instants.len()
    }

    fn nvar(&self) -> usize {
        self.n + self.epochs()
    }

    fn samples(&self, i: usize, d: f64) -> f64 {
        let t = &self.sc.tasks[i];
        t.prior_samples + (d / t.bits_per_sample).max(SAMPLE_FLOOR)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let ch = &self.sc.channel;
        let mut f = 0.0;
        for (i, t) in self.sc.tasks.iter().enumerate() {
            if t.error_weight > 0.0 {
                f += t.error_weight * t.amplitude * self.samples(i, z[i]).powf(-t.decay);
            }
        }
        let e: f64 = (0..self.epochs()).map(|j| self.spans[j] * ch.power(z[self.n + j])).sum();
        f + self.sc.energy_weight * e
    }

    /// Gradient and Hessian diagonal of the (separable) objective.
    fn derivatives(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ch = &self.sc.channel;
        let mut g = vec![0.0; self.nvar()];
        let mut h = vec![0.0; self.nvar()];
        for (i, t) in self.sc.tasks.iter().enumerate() {
            if t.error_weight > 0.0 {
                let x = self.samples(i, z[i]);
                let k = t.error_weight * t.amplitude * t.decay / t.bits_per_sample;
                g[i] = -k * x.powf(-t.decay - 1.0);
                h[i] = k * (t.decay + 1.0) / t.bits_per_sample * x.powf(-t.decay - 2.0);
            }
        }
        let c = self.sc.energy_weight * ch.noise_over_gain() / ch.bandwidth;
        for j in 0..self.epochs() {
            let ex = (z[self.n + j] / ch.bandwidth).exp();
            g[self.n + j] = c * self.spans[j] * ex;
            h[self.n + j] = c / ch.bandwidth * self.spans[j] * ex;
        }
        (g, h)
    }

    fn gather(&self, m: &Multipliers) -> Result<Vec<f64>> {
        let (n, k) = (self.n, self.epochs());
        let dims = [
            ("transmission", m.transmission.len(), k),
            ("upper_wall", m.upper_wall.len(), k),
            ("task_cap", m.task_cap.len(), n),
            ("partition_lower", m.partition_lower.len(), n),
            ("rate_lower", m.rate_lower.len(), k),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::DimensionMismatch(format!("{name} multipliers: {got} given, {want} expected")));
            }
        }
        Ok(self
            .rows
            .iter()
            .map(|r| match r.kind {
                RowKind::Transmission => m.transmission[r.index],
                RowKind::UpperWall => m.upper_wall[r.index],
                RowKind::TaskCap => m.task_cap[r.index],
                RowKind::Budget => m.budget,
                RowKind::PartitionLower => m.partition_lower[r.index],
                RowKind::RateLower => m.rate_lower[r.index],
            })
            .collect())
    }

    fn scatter(&self, values: &[f64]) -> Multipliers {
        let mut m = Multipliers::zeros(self.n, self.epochs());
        for (r, &v) in self.rows.iter().zip(values) {
            match r.kind {
                RowKind::Transmission => m.transmission[r.index] = v,
                RowKind::UpperWall => m.upper_wall[r.index] = v,
                RowKind::TaskCap => m.task_cap[r.index] = v,
                RowKind::Budget => m.budget = v,
                RowKind::PartitionLower => m.partition_lower[r.index] = v,
                RowKind::RateLower => m.rate_lower[r.index] = v,
            }
        }
        m
    }

    fn is_bound(kind: RowKind) -> bool {
        matches!(kind, RowKind::PartitionLower | RowKind::RateLower)
    }

    /// Gradient of the Lagrangian without the bound rows.
    fn lagrangian_gradient(&self, z: &[f64], mult: &[f64]) -> Vec<f64> {
        let (mut g, _) = self.derivatives(z);
        for (r, &m) in self.rows.iter().zip(mult) {
            if !Self::is_bound(r.kind) {
                for &(i, a) in &r.coef {
                    g[i] += m * a;
                }
            }
        }
        g
    }

    fn variable_scales(&self) -> Vec<f64> {
        let s = self.sc.budget_bits;
        let rate = s / self.sc.final_deadline();
        (0..self.nvar()).map(|i| if i < self.n { s } else { rate }).collect()
    }

    fn point(&self, partition: &Partition, plan: &RatePlan) -> Vec<f64> {
        let mut z = partition.bits().to_vec();
        z.extend(plan.epoch_rates(&self.instants));
        z
    }

    fn residuals(&self, z: &[f64], mult: &[f64], objective: f64) -> (f64, f64) {
        let norm = objective.abs().max(1e-12);
        let scales = self.variable_scales();
        let mut g = self.lagrangian_gradient(z, mult);
        for (r, &m) in self.rows.iter().zip(mult) {
            if Self::is_bound(r.kind) {
                for &(i, a) in &r.coef {
                    g[i] += m * a;
                }
            }
        }
        let mut bound_mult = vec![0.0; z.len()];
        for (r, &m) in self.rows.iter().zip(mult) {
            if Self::is_bound(r.kind) {
                bound_mult[r.coef[0].0] = m;
            }
        }
        let stationarity = (0..z.len())
            .map(|i| {
                let v = if z[i] == 0.0 && bound_mult[i] == 0.0 {
                    (-g[i]).max(0.0)
                } else {
                    g[i].abs()
                };
                v * scales[i] / norm
            })
            .fold(0.0, f64::max);
        let bits = self.sc.budget_bits;
        let complementarity = self
            .rows
            .iter()
            .zip(mult)
            .map(|(r, &m)| {
                let slack = r.rhs - r.activity(z);
                let row_scale = if r.kind == RowKind::RateLower { bits / self.sc.final_deadline() } else { bits };
                let product = if slack.is_finite() { (m * slack).abs() } else { 0.0 };
                product.max((-m).max(0.0) * row_scale) / norm
            })
            .fold(0.0, f64::max);
        (stationarity, complementarity)
    }
}

/// Stationarity and complementary-slackness residuals of a candidate pair,
/// both scaled by the objective magnitude. Variables sitting at zero with a
/// zero bound multiplier are checked one-sided.
pub fn kkt_residuals(
    partition: &Partition,
    plan: &RatePlan,
    multipliers: &Multipliers,
    scenario: &Scenario,
) -> Result<(f64, f64)> {
    if partition.len() != scenario.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition has {} entries for {} tasks",
            partition.len(),
            scenario.len()
        )));
    }
    let prog = Program::new(scenario);
    let mult = prog.gather(multipliers)?;
    let z = prog.point(partition, plan);
    let objective = weighted_objective(partition, plan, scenario)?;
    Ok(prog.residuals(&z, &mult, objective))
}

/// Objective in epoch-rate form: `α Σ_k T_k P(r_k) + Σ β_n e_n(D_n)`, with
/// the sample count floored just above the prior.
pub fn epoch_objective(scenario: &Scenario, bits: &[f64], rates: &[f64]) -> Result<f64> {
    let prog = Program::new(scenario);
    Ok(prog.objective(&joined(&prog, bits, rates)?))
}

/// Gradient of [`epoch_objective`] with respect to `[D..., r...]`.
pub fn objective_gradient(scenario: &Scenario, bits: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
    let prog = Program::new(scenario);
    Ok(prog.derivatives(&joined(&prog, bits, rates)?).0)
}

fn joined(prog: &Program<'_>, bits: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
    if bits.len() != prog.n || rates.len() != prog.epochs() {
        return Err(Error::DimensionMismatch(format!(
            "{} allotments and {} rates for {} tasks and {} epochs",
            bits.len(),
            rates.len(),
            prog.n,
            prog.epochs()
        )));
    }
    Ok(bits.iter().chain(rates).copied().collect())
}

/// Variables forced to zero because nothing has arrived yet.
fn forced_zero(prog: &Program<'_>) -> Vec<bool> {
    let mut fixed = vec![false; prog.nvar()];
    if let Regime::Bursty(a) = prog.sc.regime() {
        let tol = CLIP_RTOL * prog.sc.budget_bits;
        if let Some(k0) = (0..prog.epochs()).rev().find(|&j| a.value_at(prog.instants[j]) <= tol) {
            for j in 0..=k0 {
                fixed[prog.n + j] = true;
            }
            for i in 0..prog.n {
                if prog.task_epoch[i] <= k0 {
                    fixed[i] = true;
                }
            }
        }
    }
    fixed
}

/// Strictly interior start: a shrunken equal partition and string-pulled
/// rates through a tunnel narrowed on both sides, lifted by a tiny constant.
fn interior_start(prog: &Program<'_>, fixed: &[bool]) -> Result<Vec<f64>> {
    let sc = prog.sc;
    let (n, k) = (prog.n, prog.epochs());
    let free_tasks = (0..n).filter(|&i| !fixed[i]).count().max(1);
    let share = 0.9 * sc.budget_bits / free_tasks as f64;
    let mut bits = vec![0.0; n];
    match sc.regime() {
        Regime::Unlimited => {
            for i in (0..n).filter(|&i| !fixed[i]) {
                bits[i] = share;
            }
        }
        Regime::LimitedBuffer(cap) => {
            for i in (0..n).filter(|&i| !fixed[i]) {
                bits[i] = share.min(0.9 * cap);
            }
        }
        Regime::Bursty(a) => {
            let mut used = 0.0;
            for i in (0..n).filter(|&i| !fixed[i]) {
                let room = prog.instants[prog.task_epoch[i]..]
                    .iter()
                    .map(|&t| 0.9 * a.value_at(t))
                    .fold(f64::INFINITY, f64::min)
                    - used;
                bits[i] = share.min(0.5 * room);
                used += bits[i];
            }
        }
    }
    let first = (0..k).find(|&j| !fixed[n + j]).unwrap_or(k);
    let origin = if first == 0 { 0.0 } else { prog.instants[first - 1] };
    let lower: Vec<f64> = (first..k)
        .map(|j| (0..n).filter(|&i| prog.task_epoch[i] <= j).map(|i| bits[i]).sum())
        .collect();
    let upper: Vec<f64> = (first..k)
        .map(|j| match sc.regime() {
            Regime::Unlimited => f64::INFINITY,
            Regime::LimitedBuffer(cap) => {
                (0..n).filter(|&i| prog.task_epoch[i] < j).map(|i| bits[i]).sum::<f64>() + cap
            }
            Regime::Bursty(a) => a.value_at(prog.instants[j]),
        })
        .collect();
    let mut delta = bits
        .iter()
        .zip(fixed)
        .filter(|(_, &f)| !f)
        .map(|(&b, _)| b)
        .fold(f64::INFINITY, f64::min);
    for (l, u) in lower.iter().zip(&upper) {
        delta = delta.min(u - l);
    }
    delta *= 0.25;
    let mut z = bits;
    z.resize(n + k, 0.0);
    if first < k {
        let times: Vec<f64> = prog.instants[first..].iter().map(|t| t - origin).collect();
        let tunnel = Tunnel::new(
            times.clone(),
            lower.iter().map(|l| l + delta).collect(),
            upper.iter().map(|u| u - delta).collect(),
        )?;
        let pulled = RatePlan::new(tunnel.pull()?.into_iter().map(|s| s.0).collect())?;
        let lift = 0.5 * delta / (sc.final_deadline() - origin);
        for (j, r) in pulled.epoch_rates(&times).into_iter().enumerate() {
            z[n + first + j] = r + lift;
        }
    }
    Ok(z)
}

struct Barrier {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Original row of each scaled row.
    row_of: Vec<usize>,
    /// Original variable of each scaled column.
    var_of: Vec<usize>,
    scales: Vec<f64>,
    f0: f64,
}

impl Barrier {
    fn new(prog: &Program<'_>, fixed: &[bool], z0: &[f64]) -> Self {
        let all_scales = prog.variable_scales();
        let var_of: Vec<usize> = (0..prog.nvar()).filter(|&i| !fixed[i]).collect();
        let col: Vec<Option<usize>> = {
            let mut c = vec![None; prog.nvar()];
            for (k, &i) in var_of.iter().enumerate() {
                c[i] = Some(k);
            }
            c
        };
        let s = prog.sc.budget_bits;
        let mut entries = Vec::new();
        let mut row_of = Vec::new();
        let mut rhs = Vec::new();
        for (ri, r) in prog.rows.iter().enumerate() {
            let coef: Vec<(usize, f64)> = r
                .coef
                .iter()
                .filter_map(|&(i, a)| col[i].map(|c| (c, a * all_scales[i] / s)))
                .collect();
            if coef.is_empty() {
                continue;
            }
            entries.push(coef);
            row_of.push(ri);
            rhs.push(r.rhs / s);
        }
        let mut a = DMatrix::zeros(entries.len(), var_of.len());
        for (ri, coef) in entries.iter().enumerate() {
            for &(c, v) in coef {
                a[(ri, c)] += v;
            }
        }
        let f0 = prog.objective(z0).abs().max(f64::MIN_POSITIVE);
        Self {
            a,
            b: DVector::from_vec(rhs),
            row_of,
            scales: var_of.iter().map(|&i| all_scales[i]).collect(),
            var_of,
            f0,
        }
    }

    fn expand(&self, u: &DVector<f64>, nvar: usize) -> Vec<f64> {
        let mut z = vec![0.0; nvar];
        for (k, &i) in self.var_of.iter().enumerate() {
            z[i] = u[k] * self.scales[k];
        }
        z
    }

    fn slack(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * u
    }

    fn value(&self, prog: &Program<'_>, u: &DVector<f64>, mu: f64) -> Option<f64> {
        let s = self.slack(u);
        if s.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let f = prog.objective(&self.expand(u, prog.nvar())) / self.f0;
        Some(f - mu * s.iter().map(|v| v.ln()).sum::<f64>())
    }

    /// Newton direction of the barrier function and its gradient.
    fn newton(&self, prog: &Program<'_>, u: &DVector<f64>, mu: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let nv = u.len();
        let z = self.expand(u, prog.nvar());
        let (g_full, h_full) = prog.derivatives(&z);
        let inv: DVector<f64> = self.slack(u).map(|v| 1.0 / v);
        let mut g = DVector::from_iterator(
            nv,
            self.var_of
                .iter()
                .zip(&self.scales)
                .map(|(&i, &sc)| g_full[i] * sc / self.f0),
        );
        g += mu * self.a.transpose() * &inv;
        let weighted = DMatrix::from_fn(self.a.nrows(), nv, |r, c| self.a[(r, c)] * inv[r]);
        let mut h = mu * weighted.transpose() * &weighted;
        for (k, (&i, &sc)) in self.var_of.iter().zip(&self.scales).enumerate() {
            h[(k, k)] += h_full[i] * sc * sc / self.f0;
        }
        let dir = match h.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                let reg = 1e-14 * h.diagonal().amax().max(1.0);
                for k in 0..nv {
                    h[(k, k)] += reg;
                }
                h.lu().solve(&(-&g))?
            }
        };
        Some((dir, g))
    }

    /// Scaled multipliers `μ/s`, corrected to first order along the next
    /// Newton step.
    fn multipliers(&self, prog: &Program<'_>, u: &DVector<f64>, mu: f64) -> DVector<f64> {
        let s = self.slack(u);
        let base = s.map(|v| mu / v);
        match self.newton(prog, u, mu) {
            Some((dir, _)) => {
                let ad = &self.a * dir;
                DVector::from_iterator(s.len(), (0..s.len()).map(|i| base[i] * (1.0 + ad[i] / s[i]).max(0.0)))
            }
            None => base,
        }
    }

    /// Damped Newton centering. Returns steps taken, or `None` when the
    /// step budget ran out first.
    fn center(&self, prog: &Program<'_>, u: &mut DVector<f64>, mu: f64, budget: usize) -> Option<usize> {
        for step in 0..budget {
            let s = self.slack(u);
            let (dir, g) = self.newton(prog, u, mu)?;
            let decrement = -g.dot(&dir);
            if !(decrement > 1e-20) {
                return Some(step);
            }
            let ad = &self.a * &dir;
            let mut t: f64 = 1.0;
            for (sv, av) in s.iter().zip(ad.iter()) {
                if *av > 0.0 {
                    t = t.min(0.99 * sv / av);
                }
            }
            let f_now = self.value(prog, u, mu)?;
            let mut moved = false;
            for _ in 0..60 {
                let cand = &*u + t * &dir;
                if let Some(f) = self.value(prog, &cand, mu) {
                    if f <= f_now - 1e-4 * t * decrement && f < f_now {
                        *u = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                return Some(step + 1);
            }
        }
        None
    }
}

fn string_pulled(sc: &Scenario, partition: &Partition) -> Result<RatePlan> {
    let req = sc.requirements(partition)?;
    match sc.regime() {
        Regime::Unlimited => sp_unlimited(&req),
        Regime::LimitedBuffer(cap) => sp_limited(&req, cap),
        Regime::Bursty(a) => sp_bursty(&req, a),
    }
}

/// Multipliers for rows the barrier never saw (all their variables fixed at
/// zero), chosen latest-first so fixed variables become stationary, then
/// bound multipliers for every variable sitting at zero.
fn complete_multipliers(prog: &Program<'_>, z: &[f64], mult: &mut [f64], dropped: &[bool]) {
    for j in (0..prog.epochs()).rev() {
        for kind in [RowKind::Transmission, RowKind::UpperWall] {
            let Some(ri) = prog.rows.iter().position(|r| r.kind == kind && r.index == j) else {
                continue;
            };
            if !dropped[ri] {
                continue;
            }
            let g = prog.lagrangian_gradient(z, mult);
            // Only variables whose epoch is j are still free to be balanced.
            let need = prog.rows[ri]
                .coef
                .iter()
                .filter(|&&(i, _)| {
                    let epoch = if i < prog.n { prog.task_epoch[i] } else { i - prog.n };
                    epoch == j
                })
                .map(|&(i, a)| if a > 0.0 && g[i] < 0.0 { -g[i] / a } else { 0.0 })
                .fold(0.0, f64::max);
            mult[ri] = need;
        }
    }
    let g = prog.lagrangian_gradient(z, mult);
    for (ri, r) in prog.rows.iter().enumerate() {
        if Program::is_bound(r.kind) {
            let i = r.coef[0].0;
            if z[i] == 0.0 {
                mult[ri] = g[i].max(0.0);
            }
        }
    }
}

/// Solves the joint program with default settings.
pub fn solve_merged(scenario: &Scenario) -> Result<(Partition, RatePlan, SolveReport)> {
    solve_merged_with(scenario, &MergedConfig::default())
}

/// Polished primal pair with completed multipliers and its residuals.
struct Candidate {
    partition: Partition,
    plan: RatePlan,
    mult: Vec<f64>,
    objective: f64,
    stationarity: f64,
    complementarity: f64,
}

/// Clips tiny allotments, replaces the rates by the string-pulled schedule
/// of the partition and certifies the result. Allotments the barrier left
/// just off zero are moved onto the corner when that is no worse.
fn finalize(prog: &Program<'_>, z: &[f64], mut mult: Vec<f64>, dropped: &[bool]) -> Result<Candidate> {
    let sc = prog.sc;
    let n = prog.n;
    let clip = sc.budget_bits * CLIP_RTOL;
    let bits: Vec<f64> = z[..n].iter().map(|&d| if d < clip { 0.0 } else { d }).collect();
    let mut partition = Partition::new(bits)?;
    let mut plan = if partition.total() == 0.0 {
        zero_plan(sc)?
    } else {
        match string_pulled(sc, &partition) {
            Ok(p) => p,
            Err(_) => RatePlan::from_epoch_rates(&prog.instants, &z[n..])?,
        }
    };
    let mut objective = weighted_objective(&partition, &plan, sc)?;
    for i in 0..n {
        let d = partition.bits()[i];
        if d == 0.0 || d >= SNAP_RTOL * sc.budget_bits {
            continue;
        }
        let mut bits = partition.bits().to_vec();
        bits[i] = 0.0;
        let trial = Partition::new(bits)?;
        let trial_plan = if trial.total() == 0.0 {
            zero_plan(sc)
        } else {
            string_pulled(sc, &trial)
        };
        let Ok(trial_plan) = trial_plan else { continue };
        let Ok(value) = weighted_objective(&trial, &trial_plan, sc) else { continue };
        if value <= objective {
            (partition, plan, objective) = (trial, trial_plan, value);
        }
    }
    let zf = prog.point(&partition, &plan);
    complete_multipliers(prog, &zf, &mut mult, dropped);
    let (stationarity, complementarity) = prog.residuals(&zf, &mult, objective);
    Ok(Candidate {
        partition,
        plan,
        mult,
        objective,
        stationarity,
        complementarity,
    })
}

fn zero_plan(sc: &Scenario) -> Result<RatePlan> {
    RatePlan::from_pairs(&[(0.0, sc.final_deadline())])
}

/// Below `gap_rtol` the barrier keeps shrinking until the certificate
/// passes, but never past this many further decades.
const EXTRA_DECADES: i32 = 6;

pub fn solve_merged_with(scenario: &Scenario, config: &MergedConfig) -> Result<(Partition, RatePlan, SolveReport)> {
    let sc = scenario;
    if !(sc.energy_weight > 0.0) {
        return Err(Error::InvalidInput("the joint program needs energy_weight > 0".into()));
    }
    let prog = Program::new(sc);
    let fixed = forced_zero(&prog);
    for (i, t) in sc.tasks.iter().enumerate() {
        if fixed[i] && t.error_weight > 0.0 && t.prior_samples == 0.0 {
            return Err(Error::Infeasible(format!(
                "task {i} receives no data before its deadline and has no prior samples"
            )));
        }
    }

    let (best, iterations) = if sc.tasks.iter().all(|t| t.error_weight == 0.0) {
        let dropped = vec![true; prog.rows.len()];
        let z = vec![0.0; prog.nvar()];
        (finalize(&prog, &z, vec![0.0; prog.rows.len()], &dropped)?, 0)
    } else {
        let z0 = interior_start(&prog, &fixed)?;
        let mut barrier = Barrier::new(&prog, &fixed, &z0);
        let mut dropped = vec![true; prog.rows.len()];
        for &ri in &barrier.row_of {
            dropped[ri] = false;
        }
        let mut u = DVector::from_iterator(
            barrier.var_of.len(),
            barrier.var_of.iter().zip(&barrier.scales).map(|(&i, &s)| z0[i] / s),
        );
        let rows = barrier.a.nrows() as f64;
        let floor = config.gap_rtol * 10f64.powi(-EXTRA_DECADES);
        let mut mu = config.barrier_start;
        let mut used = 0;
        let mut best: Option<Candidate> = None;
        loop {
            let Some(steps) = barrier.center(&prog, &mut u, mu, config.max_newton_steps - used) else {
                used = config.max_newton_steps;
                break;
            };
            used += steps;
            let f = prog.objective(&barrier.expand(&u, prog.nvar())) / barrier.f0;
            if f.abs() < 0.1 && f.abs() > 0.0 {
                // Keep the normalized objective near one so the gap test and
                // the Newton stopping rule stay meaningful; equivalent to
                // raising μ, so recenter before testing.
                barrier.f0 *= f.abs();
                continue;
            }
            let gap = rows * mu / f.abs().max(1e-12);
            if gap <= config.gap_rtol {
                let scaled = barrier.multipliers(&prog, &u, mu);
                let mut mult = vec![0.0; prog.rows.len()];
                for (k, &ri) in barrier.row_of.iter().enumerate() {
                    mult[ri] = scaled[k] * barrier.f0 / sc.budget_bits;
                }
                let cand = finalize(&prog, &barrier.expand(&u, prog.nvar()), mult, &dropped)?;
                let certified = cand.stationarity <= config.tolerance && cand.complementarity <= config.tolerance;
                let better = best
                    .as_ref()
                    .is_none_or(|b| cand.stationarity.max(cand.complementarity) < b.stationarity.max(b.complementarity));
                if better {
                    best = Some(cand);
                }
                if certified || gap <= floor {
                    break;
                }
            }
            if used >= config.max_newton_steps {
                break;
            }
            mu /= config.barrier_factor;
        }
        match best {
            Some(b) => (b, used),
            None => {
                let z = barrier.expand(&u, prog.nvar());
                let cand = finalize(&prog, &z, vec![0.0; prog.rows.len()], &dropped)?;
                return Err(Error::NonConvergence {
                    iterations: used,
                    stationarity: cand.stationarity,
                    complementarity: cand.complementarity,
                });
            }
        }
    };

    let converged = best.stationarity <= config.tolerance && best.complementarity <= config.tolerance;
    let report = SolveReport {
        objective: best.objective,
        energy: plan_energy(&best.plan, &sc.channel),
        per_task_error: per_task_errors(&best.partition, sc)?,
        multipliers: prog.scatter(&best.mult),
        kkt_stationarity_residual: Some(best.stationarity),
        kkt_complementarity_residual: Some(best.complementarity),
        iterations,
        converged,
    };
    Ok((best.partition, best.plan, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelModel, LearningTaskSpec};

    const D_STAR: f64 = 0.703_467_422_498_391_6;
    const OBJ_STAR: f64 = 1.221_138_647_247_487_1;

    fn unit() -> ChannelModel {
        ChannelModel::new(1.0, 1.0, 1.0).unwrap()
    }

    fn toy() -> Scenario {
        let t = LearningTaskSpec::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        Scenario::new(vec![t], 10.0, None, None, 0.5, unit()).unwrap()
    }

    #[test]
    fn one_task_toy() {
        let (p, plan, rep) = solve_merged(&toy()).unwrap();
        assert!((p.bits()[0] - D_STAR).abs() < 1e-6, "{:?}", p);
        assert!((plan.rates()[0] - D_STAR).abs() < 1e-6);
        assert!((rep.objective - OBJ_STAR).abs() < 1e-9);
        assert!(rep.converged, "{rep:?}");
        assert!(rep.multiplier_budget().abs() < 1e-9);
        assert!((rep.multipliers_transmission()[0] - 0.5 * D_STAR.exp()).abs() < 1e-6);
    }

    #[test]
    fn analytic_multipliers_certify_toy() {
        let sc = toy();
        let p = Partition::new(vec![D_STAR]).unwrap();
        let plan = RatePlan::from_pairs(&[(D_STAR, 1.0)]).unwrap();
        let mut m = Multipliers::zeros(1, 1);
        m.transmission[0] = 0.5 * D_STAR.exp();
        let (s, c) = kkt_residuals(&p, &plan, &m, &sc).unwrap();
        assert!(s <= 1e-8 && c <= 1e-8, "{s} {c}");
    }

    #[test]
    fn zero_multipliers_at_interior_point() {
        let sc = toy();
        let p = Partition::new(vec![0.5]).unwrap();
        let plan = RatePlan::from_pairs(&[(0.7, 1.0)]).unwrap();
        let (s, c) = kkt_residuals(&p, &plan, &Multipliers::zeros(1, 1), &sc).unwrap();
        assert_eq!(c, 0.0);
        assert!(s > 0.0);
    }

    #[test]
    fn stationarity_grows_linearly_with_perturbation() {
        let sc = toy();
        let plan = RatePlan::from_pairs(&[(D_STAR, 1.0)]).unwrap();
        let mut m = Multipliers::zeros(1, 1);
        m.transmission[0] = 0.5 * D_STAR.exp();
        let at = |eps: f64| {
            let p = Partition::new(vec![D_STAR + eps]).unwrap();
            kkt_residuals(&p, &plan, &m, &sc).unwrap().0
        };
        let (s1, s2) = (at(1e-3), at(2e-3));
        assert!(s1 > 1e-5);
        assert!((s2 / s1 - 2.0).abs() < 0.01, "{s1} {s2}");
    }

    #[test]
    fn energy_only_gives_zero_solution() {
        let t = LearningTaskSpec::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let sc = Scenario::new(vec![t], 10.0, None, None, 1.0, unit()).unwrap();
        let (p, plan, rep) = solve_merged(&sc).unwrap();
        assert_eq!(p.bits(), &[0.0]);
        assert_eq!(plan.rates(), vec![0.0]);
        assert_eq!(rep.objective, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let sc = toy();
        let p = Partition::new(vec![D_STAR]).unwrap();
        let plan = RatePlan::from_pairs(&[(D_STAR, 1.0)]).unwrap();
        let err = kkt_residuals(&p, &plan, &Multipliers::zeros(2, 1), &sc).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn zero_early_arrival_is_presolved() {
        let t = |dl| LearningTaskSpec::new(dl, 1.0, 1.0, 1.0, 1.0, 0.25).unwrap();
        let arr = crate::model::ArrivalCurve::new(vec![(1.0, 0.0), (2.0, 3.0)]).unwrap();
        let sc = Scenario::new(vec![t(1.0), t(2.0)], 3.0, None, Some(arr), 0.5, unit()).unwrap();
        let (p, _plan, rep) = solve_merged(&sc).unwrap();
        assert_eq!(p.bits()[0], 0.0);
        assert!(rep.converged, "{rep:?}");
    }
}
