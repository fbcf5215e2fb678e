//! Command orchestration shared by the binary and the test suites.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use dprc_core::baselines::{baseline_solve, BaselineKind};
use dprc_core::fitting::{fit_power_law, FitResult, FitSample};
use dprc_core::instances::{random_rate_instance, RateInstance, RegimeKind};
use dprc_core::merged::{solve_merged_with, MergedConfig, SolveReport};
use dprc_core::oracle::{oracle_energy, OracleConfig};
use dprc_core::rate_control::{sp_bursty, sp_limited, sp_unlimited};
use dprc_core::stratified::solve_stratified;
use dprc_core::{check_feasible, plan_energy, weighted_error, Error, Partition, RatePlan, Regime, Scenario};

use crate::output::{render_report, write_pareto_csv, write_partition_csv, write_plan_csv, ParetoRow};
use crate::scenario_file::LoadError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    /// A solve returned a plan without a passing certificate.
    #[error("solver stopped without meeting the tolerance")]
    NotConverged,
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    /// 2 for infeasible instances, 3 for non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(Error::Infeasible(_) | Error::InfeasibleBaseline { .. }) => 2,
            CliError::Solver(Error::NonConvergence { .. }) | CliError::NotConverged => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stratified,
    Merged,
    Baseline(BaselineKind),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Stratified => f.write_str("stratified"),
            Mode::Merged => f.write_str("merged"),
            Mode::Baseline(k) => write!(f, "baseline:{k}"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "stratified" => Ok(Mode::Stratified),
            "merged" => Ok(Mode::Merged),
            other => match other.strip_prefix("baseline:") {
                Some(k) => k.parse().map(Mode::Baseline).map_err(|e: Error| e.to_string()),
                None => Err(format!(
                    "unknown mode `{s}` (expected stratified, merged or baseline:<EDP|ERC|EDPRC>)"
                )),
            },
        }
    }
}

pub struct Solution {
    pub partition: Partition,
    pub plan: RatePlan,
    pub report: SolveReport,
    pub wall_clock_s: f64,
}

pub fn solve(scenario: &Scenario, mode: Mode, tolerance: Option<f64>) -> Result<Solution, CliError> {
    let start = Instant::now();
    let (partition, plan, report) = match mode {
        Mode::Stratified => solve_stratified(scenario)?,
        Mode::Merged => {
            let mut config = MergedConfig::default();
            if let Some(t) = tolerance {
                config.tolerance = t;
            }
            solve_merged_with(scenario, &config)?
        }
        Mode::Baseline(kind) => baseline_solve(scenario, kind)?,
    };
    Ok(Solution {
        partition,
        plan,
        report,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Writes `plan.csv`, `partition.csv` and `report.txt` into `out`.
pub fn write_solution(out: &Path, mode: Mode, scenario: &Scenario, solution: &Solution) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_plan_csv(&out.join("plan.csv"), &solution.plan, scenario)?;
    write_partition_csv(&out.join("partition.csv"), &solution.partition, scenario)?;
    let report = render_report(
        &mode.to_string(),
        scenario,
        &solution.partition,
        &solution.report,
        solution.wall_clock_s,
    );
    fs::write(out.join("report.txt"), report)?;
    Ok(())
}

/// Solves the scenario once per energy weight; rows follow `alphas`.
pub fn sweep(scenario: &Scenario, alphas: &[f64], mode: Mode, tolerance: Option<f64>) -> Result<Vec<ParetoRow>, CliError> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::Solver(Error::InvalidInput(format!(
            "sweep energy weights must lie in (0, 1) (got {a})"
        ))));
    }
    alphas
        .par_iter()
        .map(|&alpha| {
            let s = scenario.with_energy_weight(alpha);
            let sol = solve(&s, mode, tolerance)?;
            if !sol.report.converged {
                return Err(CliError::NotConverged);
            }
            let normalized = s.with_energy_weight(0.0);
            Ok(ParetoRow {
                alpha,
                energy_j: sol.report.energy,
                weighted_error: weighted_error(&sol.partition, &normalized)?,
            })
        })
        .collect()
}

pub fn write_sweep(out: &Path, rows: &[ParetoRow]) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_pareto_csv(&out.join("pareto.csv"), rows)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct FitRow {
    samples: f64,
    error: f64,
}

/// Reads `samples,error` rows with a header line.
pub fn read_fit_points(path: &Path) -> Result<Vec<FitSample>, CliError> {
    let name = path.display().to_string();
    let bad = |e: csv::Error| CliError::Input {
        path: name.clone(),
        message: e.to_string(),
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(bad)?;
    r.deserialize::<FitRow>()
        .map(|row| {
            row.map(|p| FitSample {
                samples: p.samples,
                observed_error: p.error,
            })
            .map_err(bad)
        })
        .collect()
}

pub fn fit(path: &Path) -> Result<FitResult, CliError> {
    Ok(fit_power_law(&read_fit_points(path)?)?)
}

pub fn render_fit(fit: &FitResult) -> String {
    format!("amplitude = {}\ndecay = {}\nrmse = {}\n", fit.amplitude, fit.decay, fit.rmse)
}

/// Outcome of one rate instance in the oracle cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub index: usize,
    pub regime: RegimeKind,
    pub deadlines: usize,
    pub energy: f64,
    pub oracle_energy: f64,
    pub feasible: bool,
    /// Why the case failed, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub cases: Vec<OracleCase>,
    pub wall_clock_s: f64,
}

impl OracleSummary {
    pub fn failures(&self) -> impl Iterator<Item = &OracleCase> {
        self.cases.iter().filter(|c| c.failure.is_some())
    }

    /// Largest `energy / oracle − 1` over all cases with a positive oracle energy.
    pub fn worst_excess(&self) -> f64 {
        self.cases
            .iter()
            .filter(|c| c.oracle_energy > 0.0)
            .map(|c| c.energy / c.oracle_energy - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `oracle / energy − 1`: how far the oracle stays above the
    /// string-pulled optimum.
    pub fn worst_oracle_gap(&self) -> f64 {
        self.cases
            .iter()
            .filter(|c| c.energy > 0.0)
            .map(|c| c.oracle_energy / c.energy - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Display for OracleSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.failures() {
            writeln!(
                f,
                "FAIL instance {} ({:?}, {} deadlines): {}",
                c.index,
                c.regime,
                c.deadlines,
                c.failure.as_deref().unwrap_or_default()
            )?;
        }
        write!(
            f,
            "oracle-check: {} instances, {} failures, worst excess {:.3e}, oracle gap {:.3e}, {:.2} s",
            self.cases.len(),
            self.failures().count(),
            self.worst_excess(),
            self.worst_oracle_gap(),
            self.wall_clock_s
        )
    }
}

/// Deterministic generator for instance `index` of a run seeded with `seed`.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn string_pull(inst: &RateInstance) -> dprc_core::Result<RatePlan> {
    match inst.regime() {
        Regime::Unlimited => sp_unlimited(&inst.requirements),
        Regime::LimitedBuffer(cap) => sp_limited(&inst.requirements, cap),
        Regime::Bursty(a) => sp_bursty(&inst.requirements, a),
    }
}

fn check_case(index: usize, regime: RegimeKind, inst: &RateInstance, rtol: f64, config: &OracleConfig) -> OracleCase {
    let mut case = OracleCase {
        index,
        regime,
        deadlines: inst.requirements.len(),
        energy: f64::NAN,
        oracle_energy: f64::NAN,
        feasible: false,
        failure: None,
    };
    let plan = match string_pull(inst) {
        Ok(p) => p,
        Err(e) => {
            case.failure = Some(format!("string-pull failed: {e}"));
            return case;
        }
    };
    case.energy = plan_energy(&plan, &inst.channel);
    case.feasible = check_feasible(&plan, &inst.requirements, inst.cap, inst.arrival.as_ref())
        .map(|r| r.feasible)
        .unwrap_or(false);
    match oracle_energy(&inst.requirements, inst.regime(), &inst.channel, config) {
        Ok(e) => case.oracle_energy = e,
        Err(e) => {
            case.failure = Some(format!("oracle failed: {e}"));
            return case;
        }
    }
    if !case.feasible {
        case.failure = Some("plan violates the instance's constraints".into());
    } else if case.energy > case.oracle_energy * (1.0 + rtol) {
        case.failure = Some(format!(
            "energy {} exceeds oracle {} by more than {rtol}",
            case.energy, case.oracle_energy
        ));
    }
    case
}

/// Random rate instances with up to `max_deadlines` deadlines, cycling
/// through the three regimes. A case passes when the string-pulled plan is
/// feasible and within `rtol` of the oracle's energy.
pub fn oracle_check(n: usize, seed: u64, rtol: f64, max_deadlines: usize) -> OracleSummary {
    let start = Instant::now();
    let config = OracleConfig {
        seed,
        ..OracleConfig::default()
    };
    let cases = (0..n)
        .into_par_iter()
        .map(|i| {
            let kind = RegimeKind::ALL[i % RegimeKind::ALL.len()];
            let inst = random_rate_instance(&mut instance_rng(seed, i), max_deadlines, kind);
            check_case(i, kind, &inst, rtol, &config)
        })
        .collect();
    OracleSummary {
        cases,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

/// Directory holding the scenario files shipped with the crate.
pub fn bundled_scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}
