//! Acceptance criteria. Each test prints one `[criterion N] PASS|FAIL` line
//! and then asserts; run with `--nocapture` to see every line.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use decprog::bnb::{extract_strategy, solve, CutPolicy, DecisionSolution, SolveParams};
use decprog::diagram::{strategy_space_size, Diagram, NodeKind};
use decprog::formulation::{DecisionModel, FormulationOptions, Objective};
use decprog::models::{
    double_monitoring, n_monitoring, pig_farm, random_diagram, DoubleMonitoringParams, RandomShape, SplitMix64,
};
use decprog::pareto::{frontier, robust_classification, FrontierConfig, LocalChoice};
use decprog::paths::{enumerate_paths, is_compatible, path_bound, recursion_probabilities, Utility};
use decprog::strategy::{
    brute_force_optimum, cvar_direct, distribution, enumerate_strategies, expected_utility, var_direct, GlobalStrategy,
};
use decprog_milp::{solve as solve_milp, MilpStatus, ModelStatistics, SolveParams as MilpParams};

/// Absolute tolerance on pig farm objectives in DKK.
const TABLE_ABS_TOL: f64 = 1e-6;
/// Relative tolerance for optimum comparisons.
const OPT_REL_TOL: f64 = 1e-9;
/// Absolute tolerance between the path probability recursion and the product form.
const RECURSION_ABS_TOL: f64 = 1e-12;
/// Absolute tolerance on the total probability of the compatible paths.
const MASS_ABS_TOL: f64 = 1e-9;
/// Relative tolerance on CVaR and VaR recovered from the MILP.
const CVAR_REL_TOL: f64 = 1e-9;
/// Relative tolerance on closed-loop re-evaluation.
const CLOSED_LOOP_REL_TOL: f64 = 1e-9;
/// Wall-clock budget of the N-monitoring oracle sweep.
const ORACLE_BUDGET: Duration = Duration::from_secs(600);
/// Strategy spaces enumerated by the oracles.
const ENUM_CAP: u128 = 1 << 16;

const TREAT: usize = 1;
const PASS: usize = 2;
const POSITIVE: usize = 0;
const NEGATIVE: usize = 1;

/// Pig farm optima by number of months: the whole-DKK reference value and
/// the exact optimum frozen from an independent enumeration.
const PIG_FARM_TABLE: [(usize, f64, f64); 5] =
    [(3, 764.0, 764.39), (4, 727.0, 726.8121), (5, 703.0, 702.56347), (6, 686.0, 685.589429), (7, 674.0, 673.7076003)];

fn verdict(criterion: u32, ok: bool, detail: &str) {
    println!("[criterion {criterion}] {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn base(d: &Diagram) -> DecisionModel {
    DecisionModel::build_base(d, &Utility::identity(), FormulationOptions::default()).unwrap()
}

fn solve_with(d: &Diagram, cuts: CutPolicy) -> DecisionSolution {
    let sol = solve(&base(d), &SolveParams { cuts, ..SolveParams::default() }).unwrap();
    assert_eq!(sol.status(), MilpStatus::Optimal);
    sol
}

fn pig_farm_rows(months: &[usize]) -> (bool, String) {
    let mut ok = true;
    let mut lines = Vec::new();
    for &(m, rounded, exact) in PIG_FARM_TABLE.iter().filter(|r| months.contains(&r.0)) {
        let d = pig_farm(m);
        let start = Instant::now();
        let obj = solve_with(&d, CutPolicy::Off).objective();
        let secs = start.elapsed().as_secs_f64();
        let (_, oracle) = brute_force_optimum(&d, &Utility::identity(), ENUM_CAP).unwrap();
        let row_ok =
            obj.round() == rounded && (obj - exact).abs() <= TABLE_ABS_TOL && (obj - oracle).abs() <= TABLE_ABS_TOL;
        ok &= row_ok;
        lines.push(format!("M={m} objective {obj:.7} (table {rounded}, enumeration {oracle:.7}, {secs:.1}s)"));
    }
    (ok, lines.join("; "))
}

/// Table values rounded to whole DKK; the unrounded optimum matches the
/// frozen enumeration value within the absolute tolerance.
#[test]
fn criterion_1_pig_farm_table() {
    let (ok, detail) = pig_farm_rows(&[3, 4, 5, 6]);
    verdict(1, ok, &detail);
}

/// Seven months runs for tens of minutes, so it is opt-in.
#[test]
#[ignore]
fn criterion_1_pig_farm_table_seven_months() {
    let (ok, detail) = pig_farm_rows(&[7]);
    verdict(1, ok, &detail);
}

/// The integer table entries taken as exact optima. No correct solver meets
/// this, since the optima carry cents; kept to record the gap.
#[test]
#[ignore]
fn criterion_1_pig_farm_table_integer_reading() {
    let mut ok = true;
    let mut lines = Vec::new();
    for &(m, rounded, _) in &PIG_FARM_TABLE[..4] {
        let obj = solve_with(&pig_farm(m), CutPolicy::Off).objective();
        ok &= (obj - rounded).abs() <= TABLE_ABS_TOL;
        lines.push(format!("M={m} |{obj:.7} - {rounded}| = {:.4}", (obj - rounded).abs()));
    }
    verdict(1, ok, &lines.join("; "));
}

fn ordinals(months: &[usize]) -> String {
    let names: Vec<String> = months
        .iter()
        .map(|&k| match k {
            1 => "1st".to_string(),
            2 => "2nd".to_string(),
            3 => "3rd".to_string(),
            k => format!("{k}th"),
        })
        .collect();
    names.join(" and ")
}

/// Prose form of a pig farm policy, one sentence per policy.
fn describe(z: &GlobalStrategy) -> String {
    let mut never = Vec::new();
    let mut on_positive = Vec::new();
    for (k, l) in z.locals().iter().enumerate() {
        match (l.choices[POSITIVE], l.choices[NEGATIVE]) {
            (PASS, PASS) => never.push(k + 1),
            (TREAT, PASS) => on_positive.push(k + 1),
            other => return format!("month {}: {other:?}", k + 1),
        }
    }
    if on_positive.is_empty() {
        return format!("Never treat at any of the {} months.", never.len());
    }
    format!(
        "Never treat at {} month. Treat at {} month if and only if test results are positive.",
        ordinals(&never),
        ordinals(&on_positive)
    )
}

#[test]
fn criterion_2_pig_farm_frontier() {
    let d = pig_farm(4);
    let points = frontier(&d, &FrontierConfig::expectation_and_tail(0.2)).unwrap();
    let found: BTreeSet<String> = points.iter().map(|p| describe(&p.strategy)).collect();
    let expected: BTreeSet<String> = [
        "Never treat at 1st month. Treat at 2nd and 3rd month if and only if test results are positive.",
        "Never treat at 1st and 2nd month. Treat at 3rd month if and only if test results are positive.",
        "Never treat at 1st and 3rd month. Treat at 2nd month if and only if test results are positive.",
        "Never treat at any of the 3 months.",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let classes = robust_classification(&points, &d).unwrap();
    let d1 = d.decision_nodes()[0];
    let first_month_core =
        [POSITIVE, NEGATIVE].iter().all(|&row| classes.core.contains(&LocalChoice { node: d1, row, state: PASS }));
    let negative_exterior = d
        .decision_nodes()
        .iter()
        .all(|&j| classes.exterior.contains(&LocalChoice { node: j, row: NEGATIVE, state: TREAT }));
    let ok = points.len() == 4 && found == expected && first_month_core && negative_exterior;
    verdict(
        2,
        ok,
        &format!("{} points {found:?}; never-treat month 1 core: {first_month_core}; treat-on-negative exterior: {negative_exterior}", points.len()),
    );
}

#[test]
fn criterion_3_double_monitoring_counts() {
    let expected =
        ModelStatistics { binaries: 8, continuous: 64, equality_rows: 4, inequality_rows: 128, lazy_cuts: 0 };
    let mut ok = true;
    let mut seen = None;
    for seed in 0..10 {
        let d = double_monitoring(&DoubleMonitoringParams::sample(&mut SplitMix64::new(seed)));
        let m = base(&d);
        ok &= m.statistics() == expected && !m.has_lower_bound_rows();
        seen = Some(m.statistics());
    }
    verdict(3, ok, &format!("{seen:?} over 10 parameter draws"));
}

#[test]
fn criterion_4_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut mismatches = Vec::new();
    let mut count = 0;
    for n in 2..=4 {
        for seed in 0..100 {
            let d = n_monitoring(n, seed);
            let (_, oracle) = brute_force_optimum(&d, &Utility::identity(), ENUM_CAP).unwrap();
            let obj = solve_with(&d, CutPolicy::Off).objective();
            let rel = (obj - oracle).abs() / obj.abs().max(oracle.abs()).max(1.0);
            worst = worst.max(rel);
            if rel > OPT_REL_TOL {
                mismatches.push((n, seed));
            }
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && elapsed <= ORACLE_BUDGET;
    verdict(
        4,
        ok,
        &format!(
            "{count} instances, worst relative gap {worst:.2e}, mismatches {mismatches:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Product of conditional probabilities times compatibility indicators,
/// computed straight from the tables.
fn product_form(d: &Diagram, z: &GlobalStrategy, s: &[usize]) -> f64 {
    let mut p = 1.0;
    for j in 1..=d.path_len() {
        let row = d.info_row(j, s);
        match d.node(j).kind {
            NodeKind::Chance => p *= d.probability(j, row, s[j - 1]),
            NodeKind::Decision if z.choice(j, row) != s[j - 1] => return 0.0,
            _ => {}
        }
    }
    p
}

#[test]
fn criterion_5_path_probability_recursion() {
    let mut diagrams = vec![pig_farm(3), n_monitoring(2, 1), n_monitoring(3, 4)];
    diagrams.push(double_monitoring(&DoubleMonitoringParams::sample(&mut SplitMix64::new(2))));
    let shape = RandomShape { value_nodes: 2, max_states: 3, zero_probability: 0.3, ..RandomShape::default() };
    diagrams.extend((0..8).map(|seed| random_diagram(&shape, seed)));
    let mut triples = 0usize;
    let mut worst_term = 0.0f64;
    let mut worst_mass = 0.0f64;
    for d in &diagrams {
        for z in enumerate_strategies(d, ENUM_CAP).unwrap().take(16) {
            let mut mass = 0.0;
            for s in enumerate_paths(d) {
                let recursion = *recursion_probabilities(d, &z, &s).last().unwrap();
                let closed = product_form(d, &z, &s);
                let bound_form = if is_compatible(d, &z, &s) { path_bound(d, &s) } else { 0.0 };
                worst_term = worst_term.max((recursion - closed).abs()).max((recursion - bound_form).abs());
                mass += recursion;
                triples += 1;
            }
            worst_mass = worst_mass.max((mass - 1.0).abs());
        }
    }
    let ok = triples >= 1000 && worst_term <= RECURSION_ABS_TOL && worst_mass <= MASS_ABS_TOL;
    verdict(5, ok, &format!("{triples} triples, worst term gap {worst_term:.2e}, worst mass gap {worst_mass:.2e}"));
}

#[test]
fn criterion_6_cvar_block() {
    let d = pig_farm(4);
    let u = Utility::identity();
    let mut worst_cvar = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut solves = 0;
    let mut ok = true;
    for alpha in [0.05, 0.2, 0.5, 1.0] {
        let mut with_block = base(&d);
        with_block.add_cvar_block(alpha).unwrap();
        for z in enumerate_strategies(&d, ENUM_CAP).unwrap() {
            let dist = distribution(&d, &u, &z);
            let (cvar, var) = (cvar_direct(&dist, alpha).unwrap(), var_direct(&dist, alpha).unwrap());
            let mut m = with_block.clone();
            m.pin_strategy(&z).unwrap();
            m.set_objective(Objective::Tail).unwrap();
            let sol = solve_milp(m.model(), &[], &MilpParams::default(), None).unwrap();
            ok &= sol.status == MilpStatus::Optimal;
            let tail = m.tail_value(&sol.x).unwrap();
            worst_cvar = worst_cvar.max((tail - cvar).abs() / cvar.abs().max(1.0));
            ok &= rel_close(tail, cvar, CVAR_REL_TOL);
            m.set_objective(Objective::MinimizeEta).unwrap();
            let sol = solve_milp(m.model(), &[], &MilpParams::default(), None).unwrap();
            ok &= sol.status == MilpStatus::Optimal;
            let eta = sol.x[m.cvar_block().unwrap().eta.0];
            worst_var = worst_var.max((eta - var).abs() / var.abs().max(1.0));
            ok &= rel_close(eta, var, CVAR_REL_TOL);
            solves += 2;
        }
    }
    verdict(6, ok, &format!("{solves} pinned solves, worst CVaR gap {worst_cvar:.2e}, worst VaR gap {worst_var:.2e}"));
}

#[test]
fn criterion_7_cut_invariance() {
    let mut cases: Vec<(String, Diagram)> = (3..=5).map(|m| (format!("pig farm M={m}"), pig_farm(m))).collect();
    for n in 2..=4 {
        cases.extend((0..10).map(|seed| (format!("N-monitoring N={n} seed={seed}"), n_monitoring(n, seed))));
    }
    let policies = [CutPolicy::Off, CutPolicy::ProbabilityCut, CutPolicy::ProbabilityAndActivePath];
    let mut ok = true;
    let mut nodes_total = [0usize; 3];
    for (name, d) in &cases {
        let sols: Vec<DecisionSolution> = policies.iter().map(|&c| solve_with(d, c)).collect();
        let agree = sols.iter().all(|s| rel_close(s.objective(), sols[0].objective(), OPT_REL_TOL));
        ok &= agree;
        let nodes: Vec<usize> = sols.iter().map(|s| s.milp.node_count).collect();
        for (t, n) in nodes_total.iter_mut().zip(&nodes) {
            *t += n;
        }
        println!("  {name}: objective {:.9}, nodes off/probability/active-path {nodes:?}", sols[0].objective());
    }
    verdict(7, ok, &format!("{} instances; total nodes off/probability/active-path {nodes_total:?}", cases.len()));
}

#[test]
fn criterion_8_frontier_completeness() {
    let shape = RandomShape { value_nodes: 2, ..RandomShape::default() };
    let mut checked = Vec::new();
    let mut ok = true;
    for seed in 0.. {
        if checked.len() == 20 {
            break;
        }
        let d = random_diagram(&shape, seed);
        if strategy_space_size(&d).unwrap() > 1024 {
            continue;
        }
        let config = FrontierConfig::per_value_node(&d);
        let found: BTreeSet<Vec<Vec<usize>>> =
            frontier(&d, &config).unwrap().iter().map(|p| choices(&p.strategy)).collect();
        let all: Vec<(GlobalStrategy, Vec<f64>)> = enumerate_strategies(&d, 1024)
            .unwrap()
            .map(|z| {
                let v = decprog::strategy::expected_by_value(&d, &Utility::identity(), &z);
                (z, v)
            })
            .collect();
        let brute: BTreeSet<Vec<Vec<usize>>> = all
            .iter()
            .filter(|(_, v)| !all.iter().any(|(_, w)| weakly_better_somewhere_strictly(w, v)))
            .map(|(z, _)| choices(z))
            .collect();
        ok &= found == brute;
        checked.push((seed, found.len()));
    }
    verdict(8, ok, &format!("seeds and frontier sizes {checked:?}"));
}

fn choices(z: &GlobalStrategy) -> Vec<Vec<usize>> {
    z.locals().iter().map(|l| l.choices.clone()).collect()
}

/// Plain Pareto dominance with a 1e-9 relative slack, written out here so
/// the oracle does not share code with the solver.
fn weakly_better_somewhere_strictly(a: &[f64], b: &[f64]) -> bool {
    let tol = |x: f64, y: f64| 1e-9 * x.abs().max(y.abs()).max(1.0);
    a.iter().zip(b).all(|(&x, &y)| x >= y - tol(x, y)) && a.iter().zip(b).any(|(&x, &y)| x > y + tol(x, y))
}

#[test]
fn criterion_9_relaxation_and_closed_loop() {
    let mut cases: Vec<Diagram> = (3..=6).map(pig_farm).collect();
    for n in 2..=4 {
        cases.extend((0..100).map(|seed| n_monitoring(n, seed)));
    }
    let mut ok = true;
    let mut worst_loop = 0.0f64;
    let mut min_slack = f64::INFINITY;
    for d in &cases {
        let m = base(d);
        let sol = solve(&m, &SolveParams::default()).unwrap();
        let obj = sol.objective();
        let slack = sol.milp.root_bound - obj;
        min_slack = min_slack.min(slack);
        ok &= slack >= -OPT_REL_TOL * obj.abs().max(1.0);
        let z = extract_strategy(&m, &sol.milp.x, 1e-6).unwrap();
        let eu = expected_utility(d, &Utility::identity(), &z);
        worst_loop = worst_loop.max((eu - obj).abs() / obj.abs().max(1.0));
        ok &= rel_close(eu, obj, CLOSED_LOOP_REL_TOL);
    }
    verdict(
        9,
        ok,
        &format!(
            "{} instances, least root bound minus optimum {min_slack:.3e}, worst closed-loop gap {worst_loop:.2e}",
            cases.len()
        ),
    );
}
