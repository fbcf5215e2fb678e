use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dprc_cli::run::{self, CliError, Mode};
use dprc_cli::load_scenario;
use dprc_core::baselines::BaselineKind;

#[derive(Parser)]
#[command(name = "dprc", version, about = "Joint data partition and rate control for edge learning tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write plan.csv, partition.csv and report.txt.
    Solve {
        scenario: PathBuf,
        /// stratified, merged or baseline:<EDP|ERC|EDPRC>.
        #[arg(long, default_value = "merged")]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// KKT tolerance of the merged solver.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve for several energy weights and write pareto.csv.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        alphas: Vec<f64>,
        #[arg(long, default_value = "merged")]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Fit error = a·samples^(-b) to a CSV with columns samples,error.
    Fit {
        points: PathBuf,
        /// Also write fit.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve with a comparison scheme.
    Baseline {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: BaselineKind,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross-check the string-pulling solvers against the numerical oracle.
    OracleCheck {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative energy slack allowed over the oracle.
        #[arg(long, default_value_t = 0.005)]
        tol: f64,
    },
}

fn parse_kind(s: &str) -> Result<BaselineKind, String> {
    s.parse().map_err(|e: dprc_core::Error| e.to_string())
}

fn solve_and_write(scenario: &Path, mode: Mode, out: &Path, tol: Option<f64>) -> Result<(), CliError> {
    let sc = load_scenario(scenario)?;
    let sol = run::solve(&sc, mode, tol)?;
    run::write_solution(out, mode, &sc, &sol)?;
    println!(
        "{mode}: objective {} energy_j {} in {:.3} s -> {}",
        sol.report.objective,
        sol.report.energy,
        sol.wall_clock_s,
        out.display()
    );
    if sol.report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { scenario, mode, out, tol } => solve_and_write(&scenario, mode, &out, tol),
        Command::Baseline { scenario, kind, out } => solve_and_write(&scenario, Mode::Baseline(kind), &out, None),
        Command::Sweep {
            scenario,
            alphas,
            mode,
            out,
            tol,
        } => {
            let sc = load_scenario(&scenario)?;
            let rows = run::sweep(&sc, &alphas, mode, tol)?;
            run::write_sweep(&out, &rows)?;
            println!("sweep: {} points -> {}", rows.len(), out.join("pareto.csv").display());
            Ok(())
        }
        Command::Fit { points, out } => {
            let fit = run::fit(&points)?;
            let text = run::render_fit(&fit);
            print!("{text}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("fit.txt"), text)?;
            }
            Ok(())
        }
        Command::OracleCheck { n, seed, tol } => {
            let summary = run::oracle_check(n, seed, tol, 6);
            println!("{summary}");
            match summary.failures().count() {
                0 => Ok(()),
                k => Err(CliError::CheckFailed(format!("{k} of {n} instances failed"))),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
