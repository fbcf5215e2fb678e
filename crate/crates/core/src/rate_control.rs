//! Energy-optimal rate schedules by string pulling.
//!
//! Every regime is a tunnel: at instants `t_j` the cumulative transmitted
//! data must lie in `[lower_j, upper_j]`. The unlimited-buffer case has no
//! upper wall, a limited buffer puts it at `Σ_{n<j} D_n + D_max`, and bursty
//! arrivals put it at `B(t_j)`. The solver repeatedly commits the longest
//! first constant-rate stretch that stays in the tunnel and ends on a wall,
//! then re-anchors the tunnel at that point.

use crate::error::{Error, Result};
use crate::model::{bits_tol, ArrivalCurve, CumulativeCurve, RatePlan, Regime, Segment, StaircaseCurve};

/// Relative tolerance for rate comparisons and segment coalescing.
pub const RATE_RTOL: f64 = 1e-9;

/// Range of constant rates from the tunnel origin that satisfy both walls at
/// one instant. `low > high` means no constant rate reaches that instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInterval {
    pub low: f64,
    pub high: f64,
}

impl RateInterval {
    pub fn is_empty(&self) -> bool {
        self.low > self.high
    }
}

/// Upper-wall family for [`feasible_rate_intervals`].
#[derive(Debug, Clone, Copy)]
pub enum WallMode<'a> {
    LimitedBuffer(f64),
    Bursty(&'a ArrivalCurve),
}

/// Cumulative-bit bounds at a sequence of instants, anchored at (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Tunnel {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Blocked {
    Below,
    Above,
}

impl Tunnel {
    pub fn new(times: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != lower.len() || times.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "tunnel with {} times, {} lower, {} upper",
                times.len(),
                lower.len(),
                upper.len()
            )));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("tunnel times must be positive and strictly increasing".into()));
        }
        Ok(Self { times, lower, upper })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The residual tunnel after reaching `bits` at instant index `k`.
    /// Residual walls within roundoff of the parent's scale snap to zero, so
    /// a met requirement does not leave a spurious trickle.
    pub fn shifted(&self, k: usize, bits: f64) -> Option<Tunnel> {
        if k + 1 >= self.len() {
            return None;
        }
        let t0 = self.times[k];
        let tol = bits_tol(self.lower.last().copied().unwrap_or(0.0).abs());
        let snap = |v: f64| if v.abs() <= tol { 0.0 } else { v };
        Some(Tunnel {
            times: self.times[k + 1..].iter().map(|t| t - t0).collect(),
            lower: self.lower[k + 1..].iter().map(|l| snap(l - bits)).collect(),
            upper: self.upper[k + 1..].iter().map(|u| snap(u - bits)).collect(),
        })
    }

    /// Constant-rate intervals from the origin, lows clamped at zero.
    pub fn intervals(&self) -> Vec<RateInterval> {
        self.times
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&l, &u))| RateInterval {
                low: (l / t).max(0.0),
                high: u / t,
            })
            .collect()
    }

    fn rate_tol(&self) -> f64 {
        let total = self.lower.last().copied().unwrap_or(0.0).max(0.0);
        let end = self.times.last().copied().unwrap_or(1.0);
        RATE_RTOL * (total / end).max(f64::MIN_POSITIVE)
    }

    fn check(&self) -> Result<()> {
        let scale = self.lower.last().copied().unwrap_or(0.0).abs();
        let tol = bits_tol(scale);
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u + tol {
                return Err(Error::Infeasible(format!(
                    "lower wall {l} exceeds upper wall {u} at t = {}",
                    self.times[j]
                )));
            }
        }
        Ok(())
    }

    /// Raw string-pulled segments, one per committed stretch, each paired
    /// with the instant index it ends on. Adjacent equal rates are not merged.
    pub fn pull(&self) -> Result<Vec<(Segment, usize)>> {
        self.check()?;
        // Walls that cross within tolerance are treated as touching.
        let upper: Vec<f64> = self.upper.iter().zip(&self.lower).map(|(u, l)| u.max(*l)).collect();
        let rtol = self.rate_tol();
        let n = self.len();
        let mut out = Vec::new();
        let mut start = 0;
        let (mut t0, mut x0) = (0.0, 0.0);
        while start < n {
            let mut lo: f64 = 0.0;
            let mut hi = f64::INFINITY;
            let mut reach = start;
            let mut blocked = None;
            let mut lows = Vec::new();
            let mut highs = Vec::new();
            for j in start..n {
                let dt = self.times[j] - t0;
                let l = ((self.lower[j] - x0) / dt).max(0.0);
                let h = (upper[j] - x0) / dt;
                let (nlo, nhi) = (lo.max(l), hi.min(h));
                if nlo > nhi + rtol {
                    blocked = Some(if h < lo { Blocked::Below } else { Blocked::Above });
                    break;
                }
                lows.push(l);
                highs.push(h);
                lo = nlo;
                hi = nhi;
                reach = j + 1;
            }
            let (end, x_end) = match blocked {
                None | Some(Blocked::Below) => {
                    let k = (start..reach)
                        .rev()
                        .find(|&j| lows[j - start] >= lo - rtol)
                        .expect("the running low is attained");
                    (k, self.lower[k].max(x0))
                }
                Some(Blocked::Above) => {
                    let k = (start..reach)
                        .rev()
                        .find(|&j| highs[j - start] <= hi + rtol)
                        .expect("the running high is attained");
                    (k, upper[k])
                }
            };
            let duration = self.times[end] - t0;
            let rate = ((x_end - x0) / duration).max(0.0);
            out.push((Segment { rate, duration }, end));
            t0 = self.times[end];
            x0 = x_end;
            start = end + 1;
        }
        Ok(out)
    }

    /// String-pulled plan with collinear segments merged.
    pub fn plan(&self) -> Result<RatePlan> {
        let segs = self.pull()?.into_iter().map(|(s, _)| s).collect();
        Ok(RatePlan::new(segs)?.coalesced(RATE_RTOL))
    }
}

/// Unlimited buffer: repeatedly take the steepest chord from the current
/// touch point to a later corner (latest corner on ties).
pub fn sp_unlimited(requirements: &StaircaseCurve) -> Result<RatePlan> {
    let corners = requirements.corners();
    let total = requirements.total();
    let rtol = RATE_RTOL * (total / requirements.final_time()).max(f64::MIN_POSITIVE);
    let mut segs = Vec::new();
    let (mut t0, mut c0) = (0.0, 0.0);
    let mut start = 0;
    while start < corners.len() {
        let slopes: Vec<f64> = corners[start..]
            .iter()
            .map(|&(t, c)| (c - c0) / (t - t0))
            .collect();
        let best = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let k = start
            + slopes
                .iter()
                .rposition(|&s| s >= best - rtol)
                .expect("non-empty slope list");
        let (t, c) = corners[k];
        segs.push(Segment {
            rate: ((c - c0) / (t - t0)).max(0.0),
            duration: t - t0,
        });
        t0 = t;
        c0 = c;
        start = k + 1;
    }
    Ok(RatePlan::new(segs)?.coalesced(RATE_RTOL))
}

/// Tunnel with no upper wall.
pub fn unlimited_tunnel(requirements: &StaircaseCurve) -> Result<Tunnel> {
    let corners = requirements.corners();
    Tunnel::new(
        requirements.times(),
        corners.iter().map(|c| c.1).collect(),
        vec![f64::INFINITY; corners.len()],
    )
}

/// Tunnel for a server buffer of `cap` bits.
pub fn limited_tunnel(requirements: &StaircaseCurve, cap: f64) -> Result<Tunnel> {
    if !(cap > 0.0) {
        return Err(Error::InvalidInput(format!("buffer cap must be > 0 (got {cap})")));
    }
    let tol = bits_tol(requirements.total().max(cap));
    for (j, d) in requirements.increments().iter().enumerate() {
        if *d > cap + tol {
            return Err(Error::Infeasible(format!(
                "task {j} needs {d} bits but the buffer holds {cap}"
            )));
        }
    }
    let corners = requirements.corners();
    let mut prev = 0.0;
    let mut upper = Vec::with_capacity(corners.len());
    for &(_, c) in corners {
        upper.push(prev + cap);
        prev = c;
    }
    Tunnel::new(
        requirements.times(),
        corners.iter().map(|c| c.1).collect(),
        upper,
    )
}

/// Tunnel for data arriving at the sensor along `arrival`. Deadlines missing
/// from the arrival events are inserted, carrying the staircase forward.
pub fn bursty_tunnel(requirements: &StaircaseCurve, arrival: &ArrivalCurve) -> Result<Tunnel> {
    let t_end = requirements.final_time();
    let dense = arrival.densified(&requirements.times());
    let times: Vec<f64> = dense
        .events()
        .iter()
        .map(|e| e.0)
        .filter(|&t| t > 0.0 && t <= t_end)
        .collect();
    let lower = times.iter().map(|&t| requirements.value_at(t)).collect();
    let upper = times.iter().map(|&t| dense.value_at(t)).collect();
    Tunnel::new(times, lower, upper)
}

/// The tunnel whose string-pulled path is optimal under `regime`.
pub fn regime_tunnel(requirements: &StaircaseCurve, regime: Regime<'_>) -> Result<Tunnel> {
    match regime {
        Regime::Unlimited => unlimited_tunnel(requirements),
        Regime::LimitedBuffer(cap) => limited_tunnel(requirements, cap),
        Regime::Bursty(arrival) => bursty_tunnel(requirements, arrival),
    }
}

/// Limited server buffer.
pub fn sp_limited(requirements: &StaircaseCurve, cap: f64) -> Result<RatePlan> {
    limited_tunnel(requirements, cap)?.plan()
}

/// Bursty data arrival at the sensor.
pub fn sp_bursty(requirements: &StaircaseCurve, arrival: &ArrivalCurve) -> Result<RatePlan> {
    bursty_tunnel(requirements, arrival)?.plan()
}

/// Per-instant constant-rate ranges from t = 0, before any shifting.
pub fn feasible_rate_intervals(requirements: &StaircaseCurve, mode: WallMode<'_>) -> Result<Vec<RateInterval>> {
    let tunnel = match mode {
        WallMode::LimitedBuffer(cap) => {
            if !(cap > 0.0) {
                return Err(Error::InvalidInput(format!("buffer cap must be > 0 (got {cap})")));
            }
            let corners = requirements.corners();
            let mut prev = 0.0;
            let upper = corners
                .iter()
                .map(|&(_, c)| {
                    let u = prev + cap;
                    prev = c;
                    u
                })
                .collect();
            Tunnel::new(requirements.times(), corners.iter().map(|c| c.1).collect(), upper)?
        }
        WallMode::Bursty(arrival) => bursty_tunnel(requirements, arrival)?,
    };
    Ok(tunnel.intervals())
}

/// Every way `plan` departs from the string-pulled structure in `tunnel`:
/// leaving the walls at an instant, changing rate between instants,
/// lowering the rate off the lower wall, raising it off the upper wall, or
/// ending away from the final requirement. Comparisons are relative to
/// `rtol`. Empty for an optimal plan.
pub fn tunnel_violations(plan: &RatePlan, tunnel: &Tunnel, rtol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let t_end = *tunnel.times.last().expect("tunnel is non-empty");
    let total = tunnel.lower.last().copied().unwrap_or(0.0).max(0.0);
    let tol_at = |j: usize| {
        let mut scale = total.max(tunnel.lower[j].abs());
        if tunnel.upper[j].is_finite() {
            scale = scale.max(tunnel.upper[j].abs());
        }
        rtol * scale.max(f64::MIN_POSITIVE)
    };
    if (plan.total_duration() - t_end).abs() > rtol * t_end {
        out.push(format!("plan spans {} s, tunnel ends at {t_end} s", plan.total_duration()));
        return out;
    }
    for (j, &t) in tunnel.times.iter().enumerate() {
        let x = plan.value_at(t);
        if x < tunnel.lower[j] - tol_at(j) {
            out.push(format!("below the lower wall at t = {t}: {x} < {}", tunnel.lower[j]));
        }
        if x > tunnel.upper[j] + tol_at(j) {
            out.push(format!("above the upper wall at t = {t}: {x} > {}", tunnel.upper[j]));
        }
    }
    let x_end = plan.value_at(t_end);
    if (x_end - total).abs() > rtol * total.max(f64::MIN_POSITIVE) {
        out.push(format!("delivers {x_end} bits instead of {total}"));
    }
    let segs = plan.segments();
    let max_rate = segs.iter().map(|s| s.rate).fold(0.0, f64::max);
    let rate_tol = rtol * max_rate.max(f64::MIN_POSITIVE);
    let mut t = 0.0;
    for w in segs.windows(2) {
        t += w[0].duration;
        let Some(j) = tunnel.times.iter().position(|&tj| (tj - t).abs() <= rtol * t_end) else {
            out.push(format!("rate changes at t = {t}, which is not a wall instant"));
            continue;
        };
        let x = plan.value_at(t);
        if w[1].rate < w[0].rate - rate_tol && (x - tunnel.lower[j]).abs() > tol_at(j) {
            out.push(format!("rate drops at t = {t} off the lower wall ({x} vs {})", tunnel.lower[j]));
        }
        if w[1].rate > w[0].rate + rate_tol && !((x - tunnel.upper[j]).abs() <= tol_at(j)) {
            out.push(format!("rate rises at t = {t} off the upper wall ({x} vs {})", tunnel.upper[j]));
        }
    }
    out
}
