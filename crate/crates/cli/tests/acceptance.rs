//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use dprc_cli::run::{self, instance_rng, Mode};
use dprc_cli::load_scenario;
use dprc_core::baselines::{baseline_solve, BaselineKind};
use dprc_core::fitting::{fit_power_law, FitSample};
use dprc_core::instances::{random_rate_instance, random_scenario, RegimeKind};
use dprc_core::merged::{kkt_residuals, solve_merged};
use dprc_core::oracle::{oracle_joint, OracleConfig};
use dprc_core::partition::{marginal_gain, partition_unconstrained};
use dprc_core::rate_control::{regime_tunnel, sp_bursty, sp_limited, sp_unlimited, tunnel_violations};
use dprc_core::stratified::solve_stratified;
use dprc_core::{
    ChannelModel, LearningTaskSpec, RatePlan, Regime, Scenario, StaircaseCurve,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario_file(name: &str) -> Scenario {
    load_scenario(&run::bundled_scenarios_dir().join(name)).expect("bundled scenario loads")
}

fn string_pull(req: &StaircaseCurve, regime: Regime<'_>) -> RatePlan {
    match regime {
        Regime::Unlimited => sp_unlimited(req),
        Regime::LimitedBuffer(cap) => sp_limited(req, cap),
        Regime::Bursty(a) => sp_bursty(req, a),
    }
    .expect("generated instances are feasible")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn oracle_equivalence() -> Outcome {
    let summary = run::oracle_check(200, 1, 0.005, 6);
    let failures = summary.failures().count();
    outcome(
        failures == 0 && summary.wall_clock_s <= 60.0,
        format!(
            "{failures}/200 failures, worst excess over oracle {:.2e}, {:.1} s (limit 60 s)",
            summary.worst_excess(),
            summary.wall_clock_s
        ),
    )
}

fn structural_invariants() -> Outcome {
    let mut bad = 0;
    let mut first = None;
    for i in 0..1000 {
        let kind = RegimeKind::ALL[i % 3];
        let inst = random_rate_instance(&mut instance_rng(2, i), 6, kind);
        let plan = string_pull(&inst.requirements, inst.regime());
        let tunnel = regime_tunnel(&inst.requirements, inst.regime()).expect("valid tunnel");
        let v = tunnel_violations(&plan, &tunnel, 1e-9);
        if !v.is_empty() {
            bad += 1;
            first.get_or_insert(format!("instance {i} ({kind:?}): {}", v[0]));
        }
    }
    outcome(
        bad == 0,
        format!(
            "{bad}/1000 instances violate monotonicity/touch, buffer walls or containment{}",
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn staircase(gaps: &[f64], epoch_rates: &[f64]) -> StaircaseCurve {
    let (mut t, mut acc) = (0.0, 0.0);
    let corners = gaps
        .iter()
        .zip(epoch_rates)
        .map(|(g, w)| {
            t += g;
            acc += g * w;
            (t, acc)
        })
        .collect();
    StaircaseCurve::new(corners).unwrap()
}

fn single_flat_segment(req: &StaircaseCurve) -> bool {
    let plan = sp_unlimited(req).unwrap();
    let avg = req.total() / req.corners().last().unwrap().0;
    plan.segments().len() == 1 && rel(plan.segments()[0].rate, avg) <= 1e-12
}

fn degenerate_case() -> Outcome {
    // Every epoch needs exactly the average rate, which is the only way all
    // `D_n/T_n ≤ D/t_N` can hold; a second family only bounds prefix averages.
    let (mut literal, mut prefix) = (0, 0);
    let mut rng = instance_rng(3, 0);
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let gaps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let w = rng.gen_range(0.1..3.0);
        let req = staircase(&gaps, &vec![w; n]);
        let avg = req.total() / req.corners().last().unwrap().0;
        let holds = req
            .increments()
            .iter()
            .zip(&gaps)
            .all(|(d, t)| d / t <= avg * (1.0 + 1e-12));
        if holds && single_flat_segment(&req) {
            literal += 1;
        }
        let mut rates: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        rates.sort_by(f64::total_cmp);
        rates[n - 1] = rates[n - 1].max(0.1);
        if single_flat_segment(&staircase(&gaps, &rates)) {
            prefix += 1;
        }
    }
    outcome(
        literal == 100 && prefix == 100,
        format!("{literal}/100 equal-ratio and {prefix}/100 prefix-bounded instances give one segment at D/t_N"),
    )
}

fn partition_kkt() -> Outcome {
    let mut worst_stat: f64 = 0.0;
    let mut worst_budget: f64 = 0.0;
    for i in 0..100 {
        let sc = random_scenario(&mut instance_rng(4, i), 1 + i % 6, RegimeKind::Unlimited).unwrap();
        let sol = partition_unconstrained(&sc.tasks, sc.budget_bits).unwrap();
        worst_budget = worst_budget.max(sol.budget_residual.abs() / sc.budget_bits);
        for (t, &d) in sc.tasks.iter().zip(sol.partition.bits()) {
            let g = marginal_gain(t, d);
            let r = if d > 0.0 {
                rel(g, sol.multiplier)
            } else {
                ((g - sol.multiplier) / sol.multiplier).max(0.0)
            };
            worst_stat = worst_stat.max(r);
        }
    }
    let tasks = vec![
        LearningTaskSpec::new(1.0, 1.0, 0.0, 2.0, 1.0, 0.5).unwrap(),
        LearningTaskSpec::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.5).unwrap(),
    ];
    let two = partition_unconstrained(&tasks, 3.0).unwrap();
    // With b = 1, D_n = sqrt(β a / λ), so D_1 / D_2 = sqrt(2).
    let d1 = 3.0 / (1.0 + std::f64::consts::FRAC_1_SQRT_2);
    let expect = [d1, 3.0 - d1];
    let lambda = 1.0 / (d1 * d1);
    let err = two
        .partition
        .bits()
        .iter()
        .zip(&expect)
        .map(|(a, b)| (a - b).abs())
        .fold((two.multiplier - lambda).abs(), f64::max);
    outcome(
        worst_stat <= 1e-8 && worst_budget <= 1e-9 && err <= 1e-4,
        format!(
            "stationarity {worst_stat:.2e} (≤ 1e-8), budget residual {worst_budget:.2e}·D (≤ 1e-9), \
             2-task example off by {err:.2e} (≤ 1e-4)"
        ),
    )
}

fn merged_solver() -> Outcome {
    let toy = Scenario::new(
        vec![LearningTaskSpec::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.5).unwrap()],
        10.0,
        None,
        None,
        0.5,
        ChannelModel::new(1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap();
    let (p, plan, r) = solve_merged(&toy).unwrap();
    let toy_err = [
        (p.bits()[0] - 0.7035).abs(),
        (plan.segments()[0].rate - 0.7035).abs(),
        (r.objective - 1.2211).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut worst_kkt: f64 = 0.0;
    let mut unconverged = 0;
    let mut worst_vs_strat = f64::NEG_INFINITY;
    for i in 0..100 {
        let sc = random_scenario(&mut instance_rng(5, i), 1 + i % 5, RegimeKind::ALL[i % 3]).unwrap();
        let (p, plan, r) = solve_merged(&sc).unwrap();
        if r.converged {
            let (st, co) = kkt_residuals(&p, &plan, &r.multipliers, &sc).unwrap();
            worst_kkt = worst_kkt.max(st).max(co);
        } else {
            unconverged += 1;
        }
        let (_, _, s) = solve_stratified(&sc).unwrap();
        worst_vs_strat = worst_vs_strat.max(r.objective - s.objective);
    }

    let mut worst_joint: f64 = 0.0;
    for i in 0..12 {
        let n = 1 + i % 3;
        let sc = random_scenario(&mut instance_rng(55, i), n, RegimeKind::ALL[(i / 3) % 3]).unwrap();
        let config = OracleConfig {
            grid_points_per_axis: if n == 3 { 10 } else { 21 },
            ..OracleConfig::default()
        };
        let o = oracle_joint(&sc, &config).unwrap();
        let (_, _, r) = solve_merged(&sc).unwrap();
        worst_joint = worst_joint.max(rel(r.objective, o.objective));
    }
    outcome(
        toy_err <= 1e-3 && worst_kkt <= 1e-6 && worst_vs_strat <= 1e-6 && worst_joint <= 1e-4,
        format!(
            "toy off by {toy_err:.1e} (≤ 1e-3), KKT {worst_kkt:.2e} (≤ 1e-6) with {unconverged}/100 unconverged, \
             merged − stratified ≤ {worst_vs_strat:.2e} (≤ 1e-6), oracle_joint gap {worst_joint:.2e} (≤ 1e-4)"
        ),
    )
}

const BUDGETS: [f64; 5] = [2e6, 4e6, 6e6, 8e6, 1e7];

fn with_weights(sc: &Scenario, alpha: f64, betas: &[f64]) -> Scenario {
    let tasks = sc
        .tasks
        .iter()
        .zip(betas)
        .map(|(t, &b)| LearningTaskSpec { error_weight: b, ..*t })
        .collect();
    Scenario::new(tasks, sc.budget_bits, sc.buffer_cap_bits, sc.arrival.clone(), alpha, sc.channel).unwrap()
}

fn bundled_scenario() -> Outcome {
    let base = scenario_file("paper_5task.scenario");
    let objectives: Vec<f64> = BUDGETS
        .iter()
        .map(|&b| solve_merged(&base.with_budget(b)).unwrap().2.objective)
        .collect();
    let drops: Vec<f64> = objectives.windows(2).map(|w| w[0] - w[1]).collect();
    let shape = drops.iter().all(|&d| d > 0.0) && drops.windows(2).all(|w| w[1] < w[0]);

    let mut losses = 0;
    let mut closest = f64::INFINITY;
    let mut rng = instance_rng(6, 0);
    for &b in &BUDGETS {
        for _ in 0..10 {
            let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let sc = with_weights(&base.with_budget(b), raw[0] / sum, &raw[1..].iter().map(|w| w / sum).collect::<Vec<_>>());
            let jdprc = solve_merged(&sc).unwrap().2.objective;
            for kind in BaselineKind::ALL {
                let other = baseline_solve(&sc, kind).unwrap().2.objective;
                closest = closest.min(other - jdprc);
                if jdprc > other + 1e-9 {
                    losses += 1;
                }
            }
        }
    }
    outcome(
        shape && losses == 0,
        format!(
            "objectives {:?} {}; JDPRC beaten in {losses}/150 baseline comparisons (smallest margin {closest:.2e})",
            objectives.iter().map(|o| format!("{o:.6}")).collect::<Vec<_>>(),
            if shape { "decrease with shrinking steps" } else { "do NOT decrease with shrinking steps" }
        ),
    )
}

fn limited_and_bursty() -> Outcome {
    let cases = [
        scenario_file("paper_5task.scenario"),
        scenario_file("paper_limited.scenario"),
        scenario_file("paper_bursty.scenario"),
    ];
    let mut wall_problems = Vec::new();
    let mut table = Vec::new();
    for &b in &BUDGETS {
        let mut row = Vec::new();
        for sc in &cases {
            let sc = sc.with_budget(b);
            let (p, plan, r) = solve_merged(&sc).unwrap();
            let req = sc.requirements(&p).unwrap();
            let tunnel = regime_tunnel(&req, sc.regime()).unwrap();
            if !sc.feasibility(&p, &plan).unwrap().feasible {
                wall_problems.push(format!("budget {b}: infeasible plan"));
            }
            if let Some(v) = tunnel_violations(&plan, &tunnel, 1e-9).first() {
                wall_problems.push(format!("budget {b}: {v}"));
            }
            row.push(r.objective);
        }
        table.push(row);
    }
    let spread = |row: &[f64]| {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi / lo - 1.0
    };
    let (first, last) = (spread(&table[0]), spread(&table[table.len() - 1]));
    outcome(
        wall_problems.is_empty() && first <= 0.01 && last > 0.01,
        format!(
            "wall problems {}; unlimited/limited/bursty spread {:.2e} at 2e6 bits (≤ 1%), {:.2e} at 1e7 bits (> 1%)",
            if wall_problems.is_empty() { "none".to_string() } else { wall_problems.join("; ") },
            first,
            last
        ),
    )
}

fn fitting() -> Outcome {
    let xs = [30.0, 50.0, 70.0, 100.0, 300.0, 500.0, 700.0, 1000.0];
    let pts: Vec<FitSample> = xs
        .iter()
        .map(|&x: &f64| FitSample {
            samples: x,
            observed_error: 8.58 * x.powf(-0.86),
        })
        .collect();
    let f = fit_power_law(&pts).unwrap();
    let worst = rel(f.amplitude, 8.58).max(rel(f.decay, 0.86));
    let two = fit_power_law(&[
        FitSample {
            samples: 1.0,
            observed_error: 2.0,
        },
        FitSample {
            samples: 4.0,
            observed_error: 1.0,
        },
    ])
    .unwrap();
    outcome(
        worst <= 1e-3 && f.rmse <= 1e-8 && two.rmse == 0.0,
        format!(
            "recovered ({:.6}, {:.6}) off by {worst:.2e} (≤ 1e-3) with rmse {:.1e}; two-point rmse {}",
            f.amplitude, f.decay, f.rmse, two.rmse
        ),
    )
}

fn monotone_front(rows: &[dprc_cli::output::ParetoRow]) -> bool {
    rows.windows(2).all(|w| {
        w[1].energy_j <= w[0].energy_j + 1e-8 * w[0].energy_j.abs()
            && w[1].weighted_error >= w[0].weighted_error - 1e-8 * w[0].weighted_error.abs()
    })
}

fn pareto_sweep() -> Outcome {
    let alphas: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut bad = Vec::new();
    for name in ["paper_5task.scenario", "paper_limited.scenario", "paper_bursty.scenario"] {
        let rows = run::sweep(&scenario_file(name), &alphas, Mode::Merged, None).unwrap();
        if !monotone_front(&rows) {
            bad.push(name.to_string());
        }
    }
    for i in 0..30 {
        let sc = random_scenario(&mut instance_rng(9, i), 1 + i % 5, RegimeKind::ALL[i % 3]).unwrap();
        let rows = run::sweep(&sc, &alphas, Mode::Merged, None).unwrap();
        if !monotone_front(&rows) {
            bad.push(format!("random {i}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("3 bundled scenarios and 30 random ones, non-monotone fronts: {}", if bad.is_empty() { "none".into() } else { bad.join(", ") }),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence, rates", oracle_equivalence),
        ("structural invariants", structural_invariants),
        ("degenerate constant rate", degenerate_case),
        ("partition KKT", partition_kkt),
        ("merged solver", merged_solver),
        ("bundled scenario budgets and baselines", bundled_scenario),
        ("limited/bursty scenario properties", limited_and_bursty),
        ("fitting", fitting),
        ("Pareto sweep", pareto_sweep),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} [{}] {name}: {} ({:.1} s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
