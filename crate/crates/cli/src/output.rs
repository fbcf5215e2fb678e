//! CSV and report writers. Column order is part of the file format.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use dprc_core::merged::SolveReport;
use dprc_core::{per_task_errors, sample_count, weighted_error, Partition, RatePlan, Scenario};

pub const PLAN_HEADER: [&str; 6] = ["segment", "t_start_s", "t_end_s", "rate_bps", "power_w", "cum_bits"];
pub const PARTITION_HEADER: [&str; 4] = ["task", "bits", "samples", "error"];
pub const PARETO_HEADER: [&str; 3] = ["alpha", "energy_j", "weighted_error"];

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn write_plan_csv(path: &Path, plan: &RatePlan, scenario: &Scenario) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(PLAN_HEADER).map_err(csv_err)?;
    let mut t = 0.0;
    let mut cum = 0.0;
    for (k, s) in plan.segments().iter().enumerate() {
        let start = t;
        t += s.duration;
        cum += s.rate * s.duration;
        w.write_record([
            k.to_string(),
            start.to_string(),
            t.to_string(),
            s.rate.to_string(),
            scenario.channel.power(s.rate).to_string(),
            cum.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_partition_csv(path: &Path, partition: &Partition, scenario: &Scenario) -> io::Result<()> {
    let errors = per_task_errors(partition, scenario).map_err(io::Error::other)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(PARTITION_HEADER).map_err(csv_err)?;
    for (n, ((&d, task), e)) in partition.bits().iter().zip(&scenario.tasks).zip(errors).enumerate() {
        w.write_record([
            n.to_string(),
            d.to_string(),
            sample_count(d, task).to_string(),
            e.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

/// One point per energy weight. `weighted_error` uses the error weights
/// rescaled to sum to one, so rows at different α are comparable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoRow {
    pub alpha: f64,
    pub energy_j: f64,
    pub weighted_error: f64,
}

pub fn write_pareto_csv(path: &Path, rows: &[ParetoRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(PARETO_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.alpha.to_string(), r.energy_j.to_string(), r.weighted_error.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| x.to_string())
}

pub fn render_report(
    mode: &str,
    scenario: &Scenario,
    partition: &Partition,
    report: &SolveReport,
    wall_clock_s: f64,
) -> String {
    let mut s = String::new();
    let err = weighted_error(partition, scenario).unwrap_or(f64::INFINITY);
    let _ = writeln!(s, "mode = {mode}");
    let _ = writeln!(s, "objective = {}", report.objective);
    let _ = writeln!(s, "energy_j = {}", report.energy);
    let _ = writeln!(s, "weighted_error = {err}");
    let _ = writeln!(s, "kkt_stationarity = {}", opt(report.kkt_stationarity_residual));
    let _ = writeln!(s, "kkt_complementarity = {}", opt(report.kkt_complementarity_residual));
    let _ = writeln!(s, "iterations = {}", report.iterations);
    let _ = writeln!(s, "converged = {}", report.converged);
    let _ = writeln!(s, "wall_clock_s = {wall_clock_s:.6}");
    s
}
