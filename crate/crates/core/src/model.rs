//! Domain types and the evaluators shared by every solver.
//!
//! Units are SI throughout: seconds, bits, bits/second, hertz, watts, joules.
//! The transmit power needed for rate `r` over a channel with bandwidth `B`,
//! noise power `σ²` and gain `h` is `(e^{r/B} - 1)·σ²/h` (natural exponent,
//! not the base-2 Shannon form).

use crate::error::{Error, Result, ViolationKind};

/// Relative slack applied to every bit-level comparison.
pub const BITS_RTOL: f64 = 1e-9;

/// Tolerance in bits for comparisons on a problem whose natural size is `scale` bits.
pub(crate) fn bits_tol(scale: f64) -> f64 {
    if scale > 0.0 {
        BITS_RTOL * scale
    } else {
        1e-12
    }
}

/// One learning task executed at `deadline`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningTaskSpec {
    /// Execution instant, seconds.
    pub deadline: f64,
    /// Bits per training sample.
    pub bits_per_sample: f64,
    /// Samples already stored at the server.
    pub prior_samples: f64,
    /// Power-law amplitude of the error curve.
    pub amplitude: f64,
    /// Power-law decay exponent of the error curve.
    pub decay: f64,
    /// Weight of this task's error in the merged objective.
    pub error_weight: f64,
}

impl LearningTaskSpec {
    pub fn new(
        deadline: f64,
        bits_per_sample: f64,
        prior_samples: f64,
        amplitude: f64,
        decay: f64,
        error_weight: f64,
    ) -> Result<Self> {
        let spec = Self {
            deadline,
            bits_per_sample,
            prior_samples,
            amplitude,
            decay,
            error_weight,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    /// Every violated invariant, as human-readable strings.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.deadline > 0.0 && self.deadline.is_finite()) {
            out.push(format!("deadline must be > 0 (got {})", self.deadline));
        }
        if !(self.bits_per_sample >= 1.0 && self.bits_per_sample.is_finite()) {
            out.push(format!(
                "bits_per_sample must be >= 1 (got {})",
                self.bits_per_sample
            ));
        }
        if !(self.prior_samples >= 0.0 && self.prior_samples.is_finite()) {
            out.push(format!(
                "prior_samples must be >= 0 (got {})",
                self.prior_samples
            ));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            out.push(format!("amplitude must be > 0 (got {})", self.amplitude));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            out.push(format!("decay must be > 0 (got {})", self.decay));
        }
        if !(self.error_weight >= 0.0 && self.error_weight.is_finite()) {
            out.push(format!(
                "error_weight must be >= 0 (got {})",
                self.error_weight
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Hz.
    pub bandwidth: f64,
    /// W.
    pub noise_power: f64,
    /// Channel power gain.
    pub gain: f64,
}

impl ChannelModel {
    pub fn new(bandwidth: f64, noise_power: f64, gain: f64) -> Result<Self> {
        let ch = Self {
            bandwidth,
            noise_power,
            gain,
        };
        let problems = ch.problems();
        if problems.is_empty() {
            Ok(ch)
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("gain", self.gain),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be > 0 (got {v})"));
            }
        }
        out
    }

    /// σ²/h, watts.
    pub fn noise_over_gain(&self) -> f64 {
        self.noise_power / self.gain
    }

    /// Transmit power for a constant rate, watts.
    pub fn power(&self, rate: f64) -> f64 {
        (rate / self.bandwidth).exp_m1() * self.noise_over_gain()
    }
}

/// Anything that maps time to cumulative bits.
pub trait CumulativeCurve {
    /// Last instant at which the curve is defined.
    fn final_time(&self) -> f64;

    /// Value at `t`, assuming `t` is in range.
    fn value_at(&self, t: f64) -> f64;

    fn eval(&self, t: f64) -> Result<f64> {
        let end = self.final_time();
        if !(t >= 0.0) || t > end * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { t, end });
        }
        Ok(self.value_at(t))
    }
}

/// Cumulative data that must have been delivered by each deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseCurve {
    corners: Vec<(f64, f64)>,
}

impl StaircaseCurve {
    pub fn new(corners: Vec<(f64, f64)>) -> Result<Self> {
        if corners.is_empty() {
            return Err(Error::InvalidInput("staircase needs at least one corner".into()));
        }
        let mut prev_t = 0.0;
        let mut prev_c = 0.0;
        for (i, &(t, c)) in corners.iter().enumerate() {
            if !(t > prev_t) || !t.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "corner {i}: times must be strictly increasing and positive (got {t})"
                )));
            }
            if !(c >= prev_c) || !c.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "corner {i}: cumulative bits must be non-decreasing and >= 0 (got {c})"
                )));
            }
            prev_t = t;
            prev_c = c;
        }
        Ok(Self { corners })
    }

    /// Requirement curve for `partition` executed at `deadlines`.
    pub fn from_partition(deadlines: &[f64], partition: &Partition) -> Result<Self> {
        if deadlines.len() != partition.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} deadlines vs {} partition entries",
                deadlines.len(),
                partition.len()
            )));
        }
        let mut acc = 0.0;
        let corners = deadlines
            .iter()
            .zip(partition.bits())
            .map(|(&t, &d)| {
                acc += d.max(0.0);
                (t, acc)
            })
            .collect();
        Self::new(corners)
    }

    pub fn corners(&self) -> &[(f64, f64)] {
        &self.corners
    }

    pub fn times(&self) -> Vec<f64> {
        self.corners.iter().map(|c| c.0).collect()
    }

    /// Per-deadline increments `D_n`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.corners
            .iter()
            .map(|&(_, c)| {
                let d = c - prev;
                prev = c;
                d
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.corners.last().map_or(0.0, |c| c.1)
    }

    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }
}

impl CumulativeCurve for StaircaseCurve {
    fn final_time(&self) -> f64 {
        self.corners.last().map_or(0.0, |c| c.0)
    }

    fn value_at(&self, t: f64) -> f64 {
        self.corners
            .iter()
            .take_while(|c| c.0 <= t)
            .last()
            .map_or(0.0, |c| c.1)
    }
}

/// Cumulative data collected at the sensor, as a right-continuous staircase.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalCurve {
    events: Vec<(f64, f64)>,
}

impl ArrivalCurve {
    pub fn new(events: Vec<(f64, f64)>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InvalidInput("arrival curve needs at least one event".into()));
        }
        let mut prev: Option<(f64, f64)> = None;
        for (i, &(t, b)) in events.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidInput(format!("arrival event {i}: time must be >= 0 (got {t})")));
            }
            if !(b >= 0.0) || !b.is_finite() {
                return Err(Error::InvalidInput(format!("arrival event {i}: bits must be >= 0 (got {b})")));
            }
            if let Some((pt, pb)) = prev {
                if !(t > pt) {
                    return Err(Error::InvalidInput(format!(
                        "arrival event {i}: times must be strictly increasing ({pt} then {t})"
                    )));
                }
                if !(b >= pb) {
                    return Err(Error::InvalidInput(format!(
                        "arrival event {i}: cumulative bits must be non-decreasing ({pb} then {b})"
                    )));
                }
            }
            prev = Some((t, b));
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[(f64, f64)] {
        &self.events
    }

    /// Inserts each of `instants` that is not already an event, carrying the
    /// staircase value forward.
    pub fn densified(&self, instants: &[f64]) -> ArrivalCurve {
        let mut events = self.events.clone();
        for &t in instants {
            if !events.iter().any(|e| e.0 == t) {
                events.push((t, self.value_at(t)));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        ArrivalCurve { events }
    }

    pub fn total(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.1)
    }
}

impl CumulativeCurve for ArrivalCurve {
    fn final_time(&self) -> f64 {
        f64::INFINITY
    }

    fn value_at(&self, t: f64) -> f64 {
        self.events
            .iter()
            .take_while(|e| e.0 <= t)
            .last()
            .map_or(0.0, |e| e.1)
    }
}

/// Bits of fresh data allotted to each task.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    bits_per_task: Vec<f64>,
}

impl Partition {
    pub fn new(bits_per_task: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = bits_per_task
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidInput(format!("partition entry {i} must be >= 0 (got {v})")));
        }
        Ok(Self { bits_per_task })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            bits_per_task: vec![0.0; n],
        }
    }

    pub fn bits(&self) -> &[f64] {
        &self.bits_per_task
    }

    pub fn into_bits(self) -> Vec<f64> {
        self.bits_per_task
    }

    pub fn total(&self) -> f64 {
        self.bits_per_task.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.bits_per_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits_per_task.is_empty()
    }
}

/// A constant-rate stretch of a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// bits/second.
    pub rate: f64,
    /// seconds.
    pub duration: f64,
}

/// Piecewise-constant transmission schedule starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    segments: Vec<Segment>,
}

impl RatePlan {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("rate plan needs at least one segment".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.rate >= 0.0) || !s.rate.is_finite() {
                return Err(Error::InvalidInput(format!("segment {i}: rate must be >= 0 (got {})", s.rate)));
            }
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "segment {i}: duration must be > 0 (got {})",
                    s.duration
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Convenience constructor from `(rate, duration)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(rate, duration)| Segment { rate, duration })
                .collect(),
        )
    }

    /// One segment per epoch between consecutive `instants` (starting at 0).
    pub fn from_epoch_rates(instants: &[f64], rates: &[f64]) -> Result<Self> {
        if instants.len() != rates.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} instants vs {} rates",
                instants.len(),
                rates.len()
            )));
        }
        let mut prev = 0.0;
        let segments = instants
            .iter()
            .zip(rates)
            .map(|(&t, &r)| {
                let s = Segment {
                    rate: r,
                    duration: t - prev,
                };
                prev = t;
                s
            })
            .collect();
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn rates(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.rate).collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn total_bits(&self) -> f64 {
        self.segments.iter().map(|s| s.rate * s.duration).sum()
    }

    /// End time of every segment.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                t += s.duration;
                t
            })
            .collect()
    }

    /// Average rate over each epoch between consecutive `instants`. Exact when
    /// every segment boundary is one of the instants.
    pub fn epoch_rates(&self, instants: &[f64]) -> Vec<f64> {
        let mut prev_t = 0.0;
        let mut prev_x = 0.0;
        instants
            .iter()
            .map(|&t| {
                let x = self.value_at(t);
                let r = (x - prev_x) / (t - prev_t);
                prev_t = t;
                prev_x = x;
                r.max(0.0)
            })
            .collect()
    }

    /// Merges adjacent segments whose rates agree to relative `rtol`.
    pub fn coalesced(&self, rtol: f64) -> RatePlan {
        let mut out: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            if let Some(last) = out.last_mut() {
                let scale = last.rate.abs().max(s.rate.abs());
                if (last.rate - s.rate).abs() <= rtol * scale {
                    let bits = last.rate * last.duration + s.rate * s.duration;
                    last.duration += s.duration;
                    last.rate = bits / last.duration;
                    continue;
                }
            }
            out.push(*s);
        }
        RatePlan { segments: out }
    }
}

impl CumulativeCurve for RatePlan {
    fn final_time(&self) -> f64 {
        self.total_duration()
    }

    fn value_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        let mut acc = 0.0;
        for s in &self.segments {
            let end = start + s.duration;
            if t <= end {
                return acc + s.rate * (t - start).max(0.0);
            }
            acc += s.rate * s.duration;
            start = end;
        }
        acc
    }
}

/// Which constraint family bounds the cumulative transmission from above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime<'a> {
    /// Unlimited server buffer, all data available at t = 0.
    Unlimited,
    /// Server buffer capped at the given number of bits.
    LimitedBuffer(f64),
    /// Data arrives at the sensor over time.
    Bursty(&'a ArrivalCurve),
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub tasks: Vec<LearningTaskSpec>,
    pub budget_bits: f64,
    pub buffer_cap_bits: Option<f64>,
    /// Densified with every deadline on construction.
    pub arrival: Option<ArrivalCurve>,
    pub energy_weight: f64,
    pub channel: ChannelModel,
}

impl Scenario {
    /// Validates, normalizes weights to sum to one and densifies the arrival
    /// curve with the task deadlines.
    pub fn new(
        tasks: Vec<LearningTaskSpec>,
        budget_bits: f64,
        buffer_cap_bits: Option<f64>,
        arrival: Option<ArrivalCurve>,
        energy_weight: f64,
        channel: ChannelModel,
    ) -> Result<Self> {
        let mut s = Self {
            tasks,
            budget_bits,
            buffer_cap_bits,
            arrival,
            energy_weight,
            channel,
        };
        let problems = s.problems();
        if !problems.is_empty() {
            return Err(Error::InvalidInput(problems.join("; ")));
        }
        s.normalize_weights();
        if let Some(a) = &s.arrival {
            s.arrival = Some(a.densified(&s.deadlines()));
        }
        Ok(s)
    }

    /// Every violated invariant. Empty when the scenario is valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.tasks.is_empty() {
            out.push("at least one task is required".to_string());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            out.extend(t.problems().into_iter().map(|p| format!("task {i}: {p}")));
        }
        for (i, w) in self.tasks.windows(2).enumerate() {
            if !(w[1].deadline > w[0].deadline) {
                out.push(format!(
                    "task {}: deadlines must be strictly increasing ({} then {})",
                    i + 1,
                    w[0].deadline,
                    w[1].deadline
                ));
            }
        }
        if !(self.budget_bits > 0.0 && self.budget_bits.is_finite()) {
            out.push(format!("budget_bits must be > 0 (got {})", self.budget_bits));
        }
        if let Some(cap) = self.buffer_cap_bits {
            if !(cap > 0.0) {
                out.push(format!("buffer_cap_bits must be > 0 (got {cap})"));
            }
        }
        if self.buffer_cap_bits.is_some() && self.arrival.is_some() {
            out.push("buffer_cap_bits and arrival cannot both be set".to_string());
        }
        if !(self.energy_weight >= 0.0 && self.energy_weight.is_finite()) {
            out.push(format!("energy_weight must be >= 0 (got {})", self.energy_weight));
        }
        out.extend(self.channel.problems().into_iter().map(|p| format!("channel: {p}")));
        out
    }

    /// Rescales α and β so they sum to one. Already-normalized weights are
    /// left untouched so repeated normalization is the identity.
    pub fn normalize_weights(&mut self) {
        let sum = self.energy_weight + self.tasks.iter().map(|t| t.error_weight).sum::<f64>();
        if sum > 0.0 && (sum - 1.0).abs() > 1e-12 {
            self.energy_weight /= sum;
            for t in &mut self.tasks {
                t.error_weight /= sum;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn deadlines(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.deadline).collect()
    }

    pub fn final_deadline(&self) -> f64 {
        self.tasks.last().map_or(0.0, |t| t.deadline)
    }

    pub fn regime(&self) -> Regime<'_> {
        match (&self.arrival, self.buffer_cap_bits) {
            (Some(a), _) => Regime::Bursty(a),
            (None, Some(cap)) => Regime::LimitedBuffer(cap),
            (None, None) => Regime::Unlimited,
        }
    }

    /// Instants delimiting the rate epochs: the deadlines, plus every arrival
    /// event inside (0, t_N] in the bursty regime.
    pub fn epoch_instants(&self) -> Vec<f64> {
        let t_end = self.final_deadline();
        match &self.arrival {
            Some(a) => a
                .events()
                .iter()
                .map(|e| e.0)
                .filter(|&t| t > 0.0 && t <= t_end)
                .collect(),
            None => self.deadlines(),
        }
    }

    pub fn requirements(&self, partition: &Partition) -> Result<StaircaseCurve> {
        StaircaseCurve::from_partition(&self.deadlines(), partition)
    }

    /// Same problem with a different total data budget.
    pub fn with_budget(&self, budget_bits: f64) -> Scenario {
        Scenario {
            budget_bits,
            ..self.clone()
        }
    }

    /// Same problem with energy weight `alpha` and error weights rescaled so
    /// the total stays one and their mutual proportions are preserved.
    pub fn with_energy_weight(&self, alpha: f64) -> Scenario {
        let mut s = self.clone();
        let beta_sum: f64 = s.tasks.iter().map(|t| t.error_weight).sum();
        s.energy_weight = alpha;
        if beta_sum > 0.0 {
            for t in &mut s.tasks {
                t.error_weight *= (1.0 - alpha) / beta_sum;
            }
        }
        s
    }

    pub fn feasibility(&self, partition: &Partition, plan: &RatePlan) -> Result<FeasibilityReport> {
        let req = self.requirements(partition)?;
        check_feasible(plan, &req, self.buffer_cap_bits, self.arrival.as_ref())
    }
}

/// Training samples available to a task given `data_bits` of fresh data.
/// Kept real-valued; flooring is a reporting concern.
pub fn sample_count(data_bits: f64, spec: &LearningTaskSpec) -> f64 {
    debug_assert!(data_bits >= 0.0);
    data_bits / spec.bits_per_sample + spec.prior_samples
}

/// Inverse power-law error `a·x^(-b)`.
pub fn learning_error(samples: f64, spec: &LearningTaskSpec) -> Result<f64> {
    if !(samples > 0.0) {
        return Err(Error::Domain(format!(
            "learning error undefined for {samples} samples"
        )));
    }
    Ok(spec.amplitude * samples.powf(-spec.decay))
}

/// Transmission energy of `plan`, joules.
pub fn plan_energy(plan: &RatePlan, channel: &ChannelModel) -> f64 {
    plan.segments()
        .iter()
        .map(|s| channel.power(s.rate) * s.duration)
        .sum()
}

/// Error of each task under `partition`.
/// Per-task errors; a task left with no samples at all reports `+∞`.
pub fn per_task_errors(partition: &Partition, scenario: &Scenario) -> Result<Vec<f64>> {
    check_partition_len(partition, scenario)?;
    Ok(scenario
        .tasks
        .iter()
        .zip(partition.bits())
        .map(|(t, &d)| learning_error(sample_count(d, t), t).unwrap_or(f64::INFINITY))
        .collect())
}

/// `Σ β_n e_n`. Tasks with zero weight contribute nothing, even when their
/// error is undefined.
pub fn weighted_error(partition: &Partition, scenario: &Scenario) -> Result<f64> {
    check_partition_len(partition, scenario)?;
    let mut acc = 0.0;
    for (t, &d) in scenario.tasks.iter().zip(partition.bits()) {
        if t.error_weight > 0.0 {
            acc += t.error_weight * learning_error(sample_count(d, t), t)?;
        }
    }
    Ok(acc)
}

/// `α·E + Σ β_n e_n`.
pub fn weighted_objective(partition: &Partition, plan: &RatePlan, scenario: &Scenario) -> Result<f64> {
    let err = weighted_error(partition, scenario)?;
    Ok(scenario.energy_weight * plan_energy(plan, &scenario.channel) + err)
}

fn check_partition_len(partition: &Partition, scenario: &Scenario) -> Result<()> {
    if partition.len() != scenario.len() {
        return Err(Error::DimensionMismatch(format!(
            "partition has {} entries for {} tasks",
            partition.len(),
            scenario.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub time: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub first_violation: Option<Violation>,
    /// Largest amount held at the server right after a deadline's data is consumed.
    pub max_buffer_bits: f64,
    /// Largest amount held at the server just before consumption; this is
    /// what a buffer cap bounds.
    pub peak_buffer_bits: f64,
}

/// Checks `plan` against the requirement staircase, an optional buffer cap
/// and an optional arrival staircase, all with [`BITS_RTOL`] slack.
pub fn check_feasible(
    plan: &RatePlan,
    requirements: &StaircaseCurve,
    buffer_cap: Option<f64>,
    arrival: Option<&ArrivalCurve>,
) -> Result<FeasibilityReport> {
    let t_end = requirements.final_time();
    let span = plan.total_duration();
    if (span - t_end).abs() > 1e-9 * t_end {
        return Err(Error::DimensionMismatch(format!(
            "plan spans {span} s but requirements end at {t_end} s"
        )));
    }

    let mut scale = requirements.total();
    if let Some(cap) = buffer_cap {
        scale = scale.max(cap);
    }
    let tol = bits_tol(scale);

    // (time, kind) candidates in chronological order; ties resolve in
    // transmission, buffer, arrival order.
    let mut violations: Vec<Violation> = Vec::new();
    let mut max_buffer: f64 = 0.0;
    let mut peak_buffer: f64 = 0.0;
    let mut consumed = 0.0;
    for &(t, cum) in requirements.corners() {
        let x = plan.value_at(t);
        if x < cum - tol {
            violations.push(Violation {
                time: t,
                kind: ViolationKind::Transmission,
            });
        }
        let held = x - consumed;
        peak_buffer = peak_buffer.max(held);
        if let Some(cap) = buffer_cap {
            if held > cap + tol {
                violations.push(Violation {
                    time: t,
                    kind: ViolationKind::Buffer,
                });
            }
        }
        max_buffer = max_buffer.max(x - cum);
        consumed = cum;
    }
    if let Some(arr) = arrival {
        let mut instants: Vec<f64> = arr
            .events()
            .iter()
            .map(|e| e.0)
            .filter(|&t| t <= t_end)
            .chain(requirements.times())
            .collect();
        instants.sort_by(f64::total_cmp);
        instants.dedup();
        for t in instants {
            if plan.value_at(t) > arr.value_at(t) + tol {
                violations.push(Violation {
                    time: t,
                    kind: ViolationKind::Arrival,
                });
            }
        }
    }
    let first_violation = violations.into_iter().min_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then((a.kind as u8).cmp(&(b.kind as u8)))
    });
    Ok(FeasibilityReport {
        feasible: first_violation.is_none(),
        first_violation,
        max_buffer_bits: max_buffer.max(0.0),
        peak_buffer_bits: peak_buffer.max(0.0),
    })
}
