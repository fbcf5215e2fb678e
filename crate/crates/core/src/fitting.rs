//! Least-squares fit of `e(x) = a·x^(-b)` to observed learning curves.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSample {
    /// At least 1.
    pub samples: f64,
    /// Non-negative.
    pub observed_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub decay: f64,
    pub rmse: f64,
}

const MAX_ITERATIONS: usize = 200;
const GRID_DECAY_MAX: f64 = 3.0;
const GRID_STEPS: usize = 3000;

fn mse(points: &[FitSample], a: f64, b: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = a * p.samples.powf(-b) - p.observed_error;
            r * r
        })
        .sum::<f64>()
        / points.len() as f64
}

/// Best amplitude for a fixed decay, clamped at zero.
fn amplitude_for(points: &[FitSample], b: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in points {
        let basis = p.samples.powf(-b);
        num += p.observed_error * basis;
        den += basis * basis;
    }
    (num / den).max(0.0)
}

/// Regression of `ln e` on `ln x`, projected onto `b ≥ 0`.
fn log_linear(points: &[FitSample]) -> (f64, f64) {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.samples.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.observed_error.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    if slope > 0.0 {
        return (amplitude_for(points, 0.0), 0.0);
    }
    ((my - slope * mx).exp(), -slope)
}

fn grid_init(points: &[FitSample]) -> (f64, f64) {
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..=GRID_STEPS {
        let b = GRID_DECAY_MAX * i as f64 / GRID_STEPS as f64;
        let a = amplitude_for(points, b);
        let m = mse(points, a, b);
        if m < best.2 {
            best = (a, b, m);
        }
    }
    (best.0, best.1)
}

/// Levenberg-damped Gauss-Newton on the plain residuals `a·x^(-b) - e`,
/// kept inside `a, b ≥ 0`.
fn refine(points: &[FitSample], mut a: f64, mut b: f64) -> (f64, f64) {
    let mut damping = 1e-3;
    let mut current = mse(points, a, b);
    for _ in 0..MAX_ITERATIONS {
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in points {
            let basis = p.samples.powf(-b);
            let r = a * basis - p.observed_error;
            let da = basis;
            let db = -a * basis * p.samples.ln();
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        if ga.abs() + gb.abs() <= f64::EPSILON * (jaa + jbb).sqrt() * current.sqrt() {
            break;
        }
        let mut improved = false;
        while damping < 1e12 {
            let (m00, m11) = (jaa + damping, jbb + damping);
            let det = m00 * m11 - jab * jab;
            let step_a = -(m11 * ga - jab * gb) / det;
            let step_b = -(m00 * gb - jab * ga) / det;
            let (na, nb) = ((a + step_a).max(0.0), (b + step_b).max(0.0));
            let trial = mse(points, na, nb);
            if trial < current {
                let gain = current - trial;
                a = na;
                b = nb;
                current = trial;
                damping = (damping / 10.0).max(1e-15);
                improved = gain > 1e-16 * current;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

pub fn fit_power_law(points: &[FitSample]) -> Result<FitResult> {
    for (i, p) in points.iter().enumerate() {
        if !(p.samples >= 1.0 && p.samples.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i}: samples must be >= 1 (got {})", p.samples)));
        }
        if !(p.observed_error >= 0.0 && p.observed_error.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {i}: observed error must be >= 0 (got {})",
                p.observed_error
            )));
        }
    }
    let first = points.first().map(|p| p.samples);
    if !points.iter().any(|p| Some(p.samples) != first) {
        return Err(Error::InvalidInput("need at least 2 points with distinct sample counts".into()));
    }
    let (a0, b0) = if points.iter().all(|p| p.observed_error > 0.0) {
        log_linear(points)
    } else {
        grid_init(points)
    };
    let init = mse(points, a0, b0);
    let (a, b) = refine(points, a0, b0);
    let (a, b) = if mse(points, a, b) <= init { (a, b) } else { (a0, b0) };
    Ok(FitResult {
        amplitude: a,
        decay: b,
        rmse: mse(points, a, b).sqrt(),
    })
}
